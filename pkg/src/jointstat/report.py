"""Deterministic report serialization.

Reports are plain nested dicts.  ``json_doc`` writes sorted keys and floats at
17 significant digits (non-finite floats become ``null``).  ``csv_tables``
writes every matrix block (a dict with a ``matrix`` key) as a ``#`` header
line followed by row-major data rows, then one ``key,value`` table of the
remaining scalars.
"""

from __future__ import annotations

import json
import math

import numpy as np

REPORT_FORMATS = ("json_doc", "csv_tables")
SCHEMA_VERSION = 1


def _float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    return text if any(c in text for c in ".e") else text + ".0"


def to_plain(obj):
    """numpy scalars/arrays and tuples to builtin JSON-compatible values."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj, indent: int = 0) -> str:
    obj = to_plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def matrix_block(matrix, **meta) -> dict:
    matrix = np.asarray(matrix, dtype=float)
    return {"matrix": matrix.tolist(), "dim": int(matrix.shape[0]), **meta}


def matrix_csv(block: dict, name: str | None = None) -> str:
    head = [f"table={name}"] if name else []
    for key in sorted(k for k in block if k != "matrix"):
        value = block[key]
        if isinstance(value, dict):
            value = ";".join(f"{k}:{value[k]}" for k in sorted(value))
        head.append(f"{key}={value}")
    rows = [",".join(_float(float(v)) for v in row) for row in block["matrix"]]
    return "# " + " ".join(head) + "\n" + "\n".join(rows) + "\n"


def _walk(obj, path, tables, scalars):
    if isinstance(obj, dict):
        if "matrix" in obj:
            tables.append((path, obj))
            return
        for k in sorted(obj):
            _walk(obj[k], f"{path}.{k}" if path else k, tables, scalars)
    elif isinstance(obj, list) and obj and all(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            _walk(v, f"{path}[{i}]", tables, scalars)
    else:
        scalars.append((path, obj))


def csv_dumps(report: dict) -> str:
    tables, scalars = [], []
    _walk(to_plain(report), "", tables, scalars)
    parts = [matrix_csv(block, path) for path, block in tables]
    lines = ["# table=scalars", "key,value"]
    for path, value in scalars:
        if isinstance(value, list):
            value = " ".join(dumps(v) for v in value)
        else:
            value = dumps(value)
        lines.append(f"{path},{json.dumps(value) if ',' in value else value}")
    parts.append("\n".join(lines) + "\n")
    return "\n".join(parts)


def render(report: dict, fmt: str = "json_doc") -> str:
    if fmt == "json_doc":
        return dumps(report) + "\n"
    if fmt == "csv_tables":
        return csv_dumps(report)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report: dict, path, fmt: str = "json_doc") -> None:
    """Write ``report`` to ``path`` (``-`` for stdout)."""
    text = render(report, fmt)
    if str(path) == "-":
        import sys

        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
