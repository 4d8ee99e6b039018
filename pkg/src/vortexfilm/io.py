"""Deterministic file formats: mask files, per-field CSV, summary JSON.

Mask file format (plain text):

    nx ny h x0 y0
    <ny rows of nx space-separated 0/1 values>

Rows are written bottom-up: text row k holds the cells with y-index j = k,
x running left to right.  1 marks an inside cell.  Mask-file grids get
staircase walls (no analytic cut-cell distances).

CSV exports list inside cells only, y-major (j outer, i inner), as
``x,y,value`` with 17 significant digits, so identical runs produce
byte-identical files.  summary.json is schema-versioned and written with
sorted keys for the same reason.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

import numpy as np

from .geometry import Grid2D

__all__ = [
    "read_mask",
    "write_mask",
    "write_field_csv",
    "write_vector_csv",
    "write_summary_json",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


def write_mask(path: str, grid: Grid2D) -> None:
    lines = [f"{grid.nx} {grid.ny} {grid.h!r} {grid.x0!r} {grid.y0!r}"]
    for j in range(grid.ny):
        lines.append(" ".join("1" if grid.inside[i, j] else "0" for i in range(grid.nx)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mask(path: str) -> Grid2D:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 5:
        raise ValueError(f"mask file {path!r}: truncated header")
    nx, ny = int(tokens[0]), int(tokens[1])
    h, x0, y0 = float(tokens[2]), float(tokens[3]), float(tokens[4])
    vals = tokens[5:]
    if len(vals) != nx * ny:
        raise ValueError(
            f"mask file {path!r}: expected {nx * ny} cell values, got {len(vals)}"
        )
    inside = np.zeros((nx, ny), dtype=bool)
    k = 0
    for j in range(ny):
        for i in range(nx):
            inside[i, j] = vals[k] == "1"
            k += 1
    theta = np.ones((4, nx, ny))
    return Grid2D(nx=nx, ny=ny, h=h, x0=x0, y0=y0, inside=inside, bdry_theta=theta)


def write_field_csv(path: str, grid: Grid2D, field: np.ndarray, header: str = "x,y,value") -> None:
    """Inside cells as x,y,value rows in fixed (j outer, i inner) order."""
    rows = [header]
    xs, ys = grid.xs, grid.ys
    for j in range(grid.ny):
        for i in range(grid.nx):
            if grid.inside[i, j]:
                rows.append(f"{xs[i]:.17g},{ys[j]:.17g},{field[i, j]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_vector_csv(
    path: str,
    grid: Grid2D,
    fx: np.ndarray,
    fy: np.ndarray,
    header: str = "x,y,vx,vy",
) -> None:
    """Two-component sibling of write_field_csv, same cell order."""
    rows = [header]
    xs, ys = grid.xs, grid.ys
    for j in range(grid.ny):
        for i in range(grid.nx):
            if grid.inside[i, j]:
                rows.append(
                    f"{xs[i]:.17g},{ys[j]:.17g},{fx[i, j]:.17g},{fy[i, j]:.17g}"
                )
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and obj != obj:  # NaN -> null, stable across runs
        return None
    return obj


def write_summary_json(path: str, payload: dict) -> None:
    body = dict(payload)
    body.setdefault("schema_version", SCHEMA_VERSION)
    with open(path, "w") as fh:
        json.dump(_jsonable(body), fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
