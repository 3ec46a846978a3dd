"""Deterministic CSV / JSON writers; every file carries the config hash."""

from __future__ import annotations

import json
import math
import platform
from pathlib import Path

import numpy as np


def _num(v):
    """Shortest round-trip text for a float, fixed spellings for non-finite values."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else _num(v)
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, payload: dict, config_hash: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config_hash": config_hash}
    body.update(to_jsonable(payload))
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, columns, rows, config_hash: str):
    """Header comment with the config hash, then a column line, then one row per sample."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(columns):
        raise ValueError(f"{len(columns)} columns but rows have width {rows.shape[1]}")
    lines = [f"# config_hash: {config_hash}", ",".join(columns)]
    lines.extend(",".join(_num(v) for v in row) for row in rows if rows.size)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """(columns, array) from a file written by write_csv."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    cols = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]) if len(lines) > 1 \
        else np.zeros((0, len(cols)))
    return cols, data


def environment():
    """Library versions recorded in manifests (no clocks, so manifests stay reproducible)."""
    import scipy

    from . import __version__
    return {"eklab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "platform": platform.system().lower()}
