"""Plain-text matrix files and JSON reports.

Matrices are comma-separated numeric rows without a header: row ``i`` is
vertex ``i`` and column ``t`` is time instant ``t``. A first line starting
with ``#`` is treated as a comment. Floats are written with 17 significant
digits so that a save/load round trip reproduces every bit.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .metrics import edges_from_laplacian

FLOAT_FMT = "%.17g"


def parse_matrix(text: str, source: str = "<string>") -> np.ndarray:
    rows = []
    width = None
    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if lineno == 1 and line.startswith("#"):
            continue
        if not line:
            if any(s.strip() for s in lines[lineno:]):
                raise ParseError(f"{source}: empty row", lineno)
            continue
        fields = line.split(",")
        row = []
        for col, tok in enumerate(fields, start=1):
            try:
                row.append(float(tok))
            except ValueError:
                raise ParseError(f"{source}: cannot parse {tok.strip()!r} as a number", lineno, col) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"{source}: ragged row with {len(row)} fields, expected {width}", lineno)
        rows.append(row)
    if not rows:
        raise ParseError(f"{source}: no data rows")
    return np.array(rows, dtype=float)


def load_matrix(path) -> np.ndarray:
    """Read a CSV matrix file (see module docstring for the format)."""
    path = Path(path)
    return parse_matrix(path.read_text(), str(path))


def save_matrix(a, path) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    np.savetxt(path, a, delimiter=",", fmt=FLOAT_FMT)


def edge_list_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_edges" + (path.suffix or ".csv"))


def save_laplacian(l, path, tau_edge: float = 0.0) -> tuple[Path, Path]:
    """Write ``l`` as a dense CSV plus an ``i,j,weight`` edge list.

    The edge list sits next to the dense file with an ``_edges`` suffix and
    holds ``weight = -L[i, j]`` for every pair with ``-L[i, j] > tau_edge``.
    """
    l = np.asarray(l, dtype=float)
    path = Path(path)
    save_matrix(l, path)
    epath = edge_list_path(path)
    with open(epath, "w") as fh:
        for i, j in edges_from_laplacian(l, tau_edge).pairs():
            fh.write(f"{i},{j},{FLOAT_FMT % -l[i, j]}\n")
    return path, epath


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        # JSON has no NaN/inf; undefined scores are written as null
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


def save_report(report, path) -> None:
    """Write a report (dict or object with ``to_dict``) as indented JSON."""
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
