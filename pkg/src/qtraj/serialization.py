"""Plot-ready CSV and JSON artifacts.

Every file starts with (CSV) or contains (JSON) the config hash and seed.
Floats are written with 17 significant digits so parsing them back is
lossless, and nothing time-dependent is written, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import io
import json
import math
from pathlib import Path

import numpy as np

from .core import QTrajError

FLOAT_FMT = "%.17g"


def _header_line(config_hash: str, seed: int) -> str:
    return f"# qtraj config_hash={config_hash} seed={seed}"


def write_csv(path, columns: list[str], data: np.ndarray, config_hash: str, seed: int, int_columns: int = 0):
    """Write ``data`` (rows x columns); the first ``int_columns`` columns are written as integers."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise ValueError(f"data shape {data.shape} does not match {len(columns)} columns")
    fmt = ["%d"] * int_columns + [FLOAT_FMT] * (len(columns) - int_columns)
    buf = io.StringIO()
    buf.write(_header_line(config_hash, seed) + "\n")
    buf.write(",".join(columns) + "\n")
    np.savetxt(buf, data, fmt=fmt, delimiter=",")
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Returns ``(header, columns, data)`` where ``header`` holds config_hash and seed."""
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        columns = fh.readline().rstrip("\n").split(",")
    if not first.startswith("# qtraj") or columns == [""]:
        raise QTrajError(f"{path} is not a qtraj CSV file")
    header = dict(item.split("=", 1) for item in first[len("# qtraj"):].split())
    header["seed"] = int(header["seed"])
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(columns)))
    return header, columns, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        # keep the file strict JSON
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return obj


def write_json(path, payload: dict, config_hash: str, seed: int):
    body = {"config_hash": config_hash, "seed": seed, **payload}
    Path(path).write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
