"""Deterministic result writers: atomic files, 17-digit floats, ``inf`` sentinels."""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x + 0.0:.17g}"  # +0.0 folds -0 into 0
    return str(x)


def jsonable(obj):
    """Convert numpy containers and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return fmt(x)
        return float(fmt(x))
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, columns, rows, comment: str | None = None) -> Path:
    """CSV with an optional ``#`` comment line (units and preset) above the header."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(",".join(columns))
    for r in rows:
        lines.append(",".join(fmt(v) for v in r))
    return atomic_write(path, "\n".join(lines) + "\n")


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_csv(path):
    """Parse a file written by :func:`write_csv` into ``(columns, rows)`` of strings."""
    with open(path) as fh:
        lines = [l.rstrip("\n") for l in fh if not l.startswith("#")]
    cols = lines[0].split(",")
    return cols, [l.split(",") for l in lines[1:] if l]
