"""Sample Kendall's tau in its tau-a form.

``tau = 2 / (n (n - 1)) * sum_{i < i'} sign(x_i - x_i') sign(y_i - y_i')``.
Tied pairs contribute zero and the denominator never changes, which is
not what the usual tau-b routines return. The direct sign-product sum is
the reference; the O(n log n) path recovers the same integer numerator
from scipy's tau-b and the tie counts.
"""

import numpy as np
from scipy.stats import kendalltau

from .data import MixedData

__all__ = ["kendall_tau_pair", "kendall_tau_matrix", "kendall_tau_naive"]

# Largest n for which the pairwise sign products are materialized.
_DIRECT_MAX_N = 3000
_CHUNK_PAIRS = 200_000


def _check_pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("need at least two observations")
    return x, y


def kendall_tau_naive(x, y):
    """Reference O(n^2) double loop over all pairs."""
    x, y = _check_pair(x, y)
    n = x.shape[0]
    total = 0
    for i in range(n - 1):
        total += int(np.sum(np.sign(x[i] - x[i + 1:]) * np.sign(y[i] - y[i + 1:])))
    return 2.0 * total / (n * (n - 1))


def _tie_pairs(v):
    _, counts = np.unique(v, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def _numerator_fast(x, y):
    n = x.shape[0]
    n0 = n * (n - 1) // 2
    tx = _tie_pairs(x)
    ty = _tie_pairs(y)
    if tx == n0 or ty == n0:
        return 0
    tau_b = kendalltau(x, y).statistic
    return int(round(tau_b * np.sqrt(float(n0 - tx) * float(n0 - ty))))


def kendall_tau_pair(x, y):
    """Kendall's tau-a of two equal-length samples."""
    x, y = _check_pair(x, y)
    n = x.shape[0]
    if n <= _DIRECT_MAX_N:
        i, j = np.triu_indices(n, k=1)
        num = int(np.sum(np.sign(x[i] - x[j]) * np.sign(y[i] - y[j])))
    else:
        num = _numerator_fast(x, y)
    return 2.0 * num / (n * (n - 1))


def _matrix_direct(X):
    n, p = X.shape
    iu, ju = np.triu_indices(n, k=1)
    num = np.zeros((p, p))
    for start in range(0, iu.shape[0], _CHUNK_PAIRS):
        sl = slice(start, start + _CHUNK_PAIRS)
        signs = np.sign(X[iu[sl]] - X[ju[sl]])
        # integer-valued sums stay exact in float64
        num += signs.T @ signs
    return num


def _matrix_fast(X):
    n, p = X.shape
    num = np.zeros((p, p))
    for j in range(p):
        for k in range(j + 1, p):
            num[j, k] = num[k, j] = _numerator_fast(X[:, j], X[:, k])
    return num


def kendall_tau_matrix(data):
    """Symmetric p x p matrix of pairwise tau-a with unit diagonal.

    ``data`` is a :class:`MixedData` or an ``(n, p)`` array. A constant
    column gets zero tau against every other column.
    """
    X = data.values if isinstance(data, MixedData) else np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need an (n, p) array with n >= 2")
    n = X.shape[0]
    num = _matrix_direct(X) if n <= _DIRECT_MAX_N else _matrix_fast(X)
    tau = 2.0 * num / (n * (n - 1))
    np.fill_diagonal(tau, 1.0)
    return tau
