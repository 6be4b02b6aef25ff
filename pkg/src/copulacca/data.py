"""Variable types and validation of mixed-type data matrices."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = ["VariableType", "MixedData", "check_mixed_data", "parse_types"]


class VariableType(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    TRUNCATED = "truncated"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"con": "continuous", "c": "continuous", "bin": "binary", "b": "binary",
                   "trunc": "truncated", "t": "truncated"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown variable type {value!r}") from None


def parse_types(types, p):
    """Normalize a single type or a length-p sequence of types."""
    if isinstance(types, (str, VariableType)):
        return [VariableType.parse(types)] * p
    out = [VariableType.parse(t) for t in types]
    if len(out) != p:
        raise ValueError(f"expected {p} variable types, got {len(out)}")
    return out


@dataclass(frozen=True)
class MixedData:
    """An n x p data matrix with one declared type per column."""

    values: np.ndarray
    types: tuple
    column_names: tuple = None

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]


def check_mixed_data(X, types, column_names=None):
    """Validate ``X`` against declared column types and wrap it.

    Raises ``ValueError`` naming the first offending column when a binary
    column holds anything but {0, 1}, a truncated column holds negative
    values, or any entry is missing.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("data must be a 2-D array")
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least two observations")
    types = parse_types(types, p)
    if column_names is None:
        column_names = tuple(f"V{j + 1}" for j in range(p))
    else:
        column_names = tuple(str(c) for c in column_names)
        if len(column_names) != p:
            raise ValueError("column_names length does not match data")
    for j, (t, name) in enumerate(zip(types, column_names)):
        col = X[:, j]
        if np.any(~np.isfinite(col)):
            raise ValueError(f"column {name!r} contains missing or non-finite values")
        if t is VariableType.BINARY and not np.all((col == 0) | (col == 1)):
            raise ValueError(f"binary column {name!r} contains values other than 0 and 1")
        if t is VariableType.TRUNCATED and np.any(col < 0):
            raise ValueError(f"truncated column {name!r} contains negative values")
    return MixedData(values=X, types=tuple(types), column_names=column_names)
