"""CSV ingestion, type sidecars and atomic output writing."""

import csv
import json
import os
import tempfile

import numpy as np

from .data import VariableType

__all__ = [
    "InputError",
    "read_matrix_csv",
    "read_types",
    "format_number",
    "write_atomic",
    "matrix_to_csv",
    "rows_to_csv",
    "dump_json",
]


class InputError(ValueError):
    """Malformed user input; the message names the offending column or field."""


def read_matrix_csv(path):
    """Read a numeric CSV with a required header row.

    Returns ``(values, column_names)``. Empty cells and non-numeric text
    are rejected with the column name and row number in the message.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise InputError(f"{path}: empty file or missing header row")
            names = [h.strip() for h in header]
            if len(set(names)) != len(names):
                dup = next(n for n in names if names.count(n) > 1)
                raise InputError(f"{path}: duplicate column name {dup!r}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(names):
                    raise InputError(f"{path}: line {lineno} has {len(row)} fields, "
                                     f"expected {len(names)}")
                parsed = []
                for name, cell in zip(names, row):
                    try:
                        parsed.append(float(cell))
                    except ValueError:
                        raise InputError(f"{path}: column {name!r}, line {lineno}: "
                                         f"not a number: {cell!r}") from None
                rows.append(parsed)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if len(rows) < 2:
        raise InputError(f"{path}: need at least two data rows")
    return np.array(rows, dtype=float), names


def _parse_type(value, where):
    try:
        return VariableType.parse(value)
    except ValueError:
        raise InputError(f"{where}: unknown variable type {value!r}") from None


def read_types(spec, names):
    """Resolve declared types for ``names``.

    ``spec`` is either a path to a two-column ``name,type`` CSV (a header
    row ``name,type`` is optional) or an inline comma-separated list with
    one entry per column. A single inline type applies to every column.
    """
    if os.path.isfile(spec):
        declared = {}
        with open(spec, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 2:
                    raise InputError(f"{spec}: line {lineno} must have two fields (name,type)")
                name, vtype = row[0].strip(), row[1].strip()
                if lineno == 1 and (name.lower(), vtype.lower()) == ("name", "type"):
                    continue
                if name in declared:
                    raise InputError(f"{spec}: column {name!r} declared more than once")
                declared[name] = _parse_type(vtype, f"{spec}: column {name!r}")
        missing = [n for n in names if n not in declared]
        if missing:
            raise InputError(f"no type declared for column {missing[0]!r}")
        return [declared[n] for n in names]
    items = [s.strip() for s in spec.split(",")]
    if len(items) == 1:
        items = items * len(names)
    if len(items) != len(names):
        raise InputError(f"--types lists {len(items)} types for {len(names)} columns")
    return [_parse_type(t, f"column {n!r}") for t, n in zip(items, names)]


def format_number(x):
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _comment_header(meta):
    return "".join(f"# {key}: {json.dumps(value, sort_keys=True)}\n" for key, value in meta.items())


def matrix_to_csv(matrix, names, meta):
    """Labelled square matrix as CSV, preceded by ``# key: value`` lines."""
    lines = [_comment_header(meta), "," + ",".join(names) + "\n"]
    for name, row in zip(names, matrix):
        lines.append(name + "," + ",".join(format_number(v) for v in row) + "\n")
    return "".join(lines)


def rows_to_csv(rows, columns, meta):
    """List of dicts as CSV; floats use :func:`format_number`."""
    out = [_comment_header(meta), ",".join(columns) + "\n"]
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            if isinstance(v, (bool, np.bool_)):
                cells.append("true" if v else "false")
            elif isinstance(v, (float, np.floating)):
                cells.append(format_number(v))
            else:
                cells.append(str(v))
        out.append(",".join(cells) + "\n")
    return "".join(out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def dump_json(obj):
    """Deterministic JSON text (sorted keys, non-finite floats as null)."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
