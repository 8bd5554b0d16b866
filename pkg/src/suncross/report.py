"""Deterministic JSON and CSV output.

Floats are written with 17 significant digits so they round-trip exactly.
The standard ``json`` encoder always uses the shortest repr, hence the small
hand-rolled writer below.  Non-finite floats become the strings "nan",
"inf" and "-inf"; complex numbers become {"re": .., "im": ..}.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .checks import Check

REPORT_SCHEMA_VERSION = 1


def fmt(x) -> str:
    x = float(x)
    if x != x:
        return "nan"
    if x in (np.inf, -np.inf):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def to_plain(obj):
    """Convert numpy, complex and Check objects into JSON-ready Python values."""
    if isinstance(obj, Check):
        return to_plain(obj.as_dict())
    if hasattr(obj, "as_dict"):
        return to_plain(obj.as_dict())
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_write(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_write(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _write(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        s = fmt(obj)
        return s if s not in ("nan", "inf", "-inf") else json.dumps(s)
    if obj is None:
        return "null"
    return json.dumps(obj)


def dumps(obj, indent=2) -> str:
    return _write(to_plain(obj), indent, 0) + "\n"


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(obj))


def write_csv(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path):
    """(header, float array) for numeric CSVs written by ``write_csv``."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = [[float(v) for v in row] for row in rd]
    return header, np.array(data).reshape(-1, len(header))


def checks_summary(checks):
    """Count of passed checks as a value/threshold record."""
    failed = sum(not c.passed for c in checks)
    return Check("failed checks", failed, 0, "==")
