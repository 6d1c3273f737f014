"""CSV and JSON reading and writing with round-trip exact floats."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import IO, Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError

__all__ = [
    "LONG_HEADER",
    "format_float",
    "read_observations",
    "write_matrix",
    "write_long_csv",
    "write_table",
    "dumps_json",
    "model_to_dict",
]

LONG_HEADER = ("scenario", "trial", "method", "metric", "value")


def format_float(v: float) -> str:
    """17 significant digits: enough to recover every IEEE-754 double exactly."""
    return "%.17g" % v


def _parse_row(fields: list[str]) -> list[float] | None:
    try:
        return [float(f) for f in fields]
    except ValueError:
        return None


def read_observations(path: str | Path) -> NDArray[np.float64]:
    """Read a numeric CSV with rows as observations.

    A first row that does not parse as numbers is treated as a header and
    skipped. Blank lines are ignored. Row numbers in error messages count
    file lines from 1.
    """
    with open(path, newline="") as fh:
        lines = [(i, [f.strip() for f in row]) for i, row in enumerate(csv.reader(fh), start=1)]
    lines = [(i, row) for i, row in lines if any(row)]
    if lines and _parse_row(lines[0][1]) is None:
        lines = lines[1:]
    if not lines:
        raise InvalidInputError(f"{path}: no data rows")
    width = len(lines[0][1])
    out = []
    for i, row in lines:
        if len(row) != width:
            raise InvalidInputError(f"{path}: row {i} has {len(row)} fields, expected {width}")
        vals = _parse_row(row)
        if vals is None:
            raise InvalidInputError(f"{path}: row {i} contains a non-numeric field")
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError(f"{path}: row {i} contains a non-finite value")
        out.append(vals)
    return np.array(out, dtype=np.float64)


def write_matrix(stream: IO[str], m: ArrayLike) -> None:
    for row in np.atleast_2d(np.asarray(m, dtype=np.float64)):
        stream.write(",".join(format_float(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def write_table(stream: IO[str], header: Iterable[str], rows: Iterable[Iterable]) -> None:
    """CSV with a header; floats at 17 significant digits, other cells via ``str``."""
    stream.write(",".join(header) + "\n")
    for row in rows:
        stream.write(",".join(_cell(v) for v in row) + "\n")


def write_long_csv(stream: IO[str], rows: Iterable[tuple]) -> None:
    write_table(stream, LONG_HEADER, rows)


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise InvalidInputError("JSON cannot represent non-finite numbers")
        return format_float(v)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _emit(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """JSON text in which every real is printed with 17 significant digits."""
    return _emit(obj, indent, 0) + "\n"


def model_to_dict(classes, seed=None, extra: dict | None = None) -> dict:
    """Serializable form of a list of :class:`~cernn.applications.GaussianClass`.

    Covariances are stored row-major as flat lists.
    """
    classes = list(classes)
    p = int(classes[0].mean.shape[0]) if classes else 0
    doc = {
        "classes": [
            {
                "prior": float(k.prior),
                "mean": np.asarray(k.mean, dtype=np.float64),
                "covariance": np.asarray(k.covariance.matrix, dtype=np.float64).ravel(),
                "lambda": float(k.lam),
                "alpha": None if k.alpha is None else float(k.alpha),
            }
            for k in classes
        ],
        "meta": {"p": p, "c": len(classes), "seed": seed},
    }
    if extra:
        doc["meta"].update(extra)
    return doc
