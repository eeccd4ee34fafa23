"""CSV and PGM serialization of grid functions, masks and measure fields.

CSV layout: header ``x[,y],value``, one row per node in row-major order
(first axis outermost). Measure fields may carry the literal ``inf``.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .grid import DomainMask, Grid, GridFunction, MeasureField, build_grid

FLOAT_FORMAT = ".9g"


def fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), FLOAT_FORMAT)


def round_sig(x: float) -> float:
    """Round to the 9 significant digits used in every output file."""
    return float(fmt(x))


def _write(path: Path | str, grid: Grid, values: np.ndarray) -> None:
    header = ["x", "y"][: grid.dim] + ["value"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for pt, v in zip(grid.points, values.ravel()):
            writer.writerow([fmt(c) for c in pt] + [fmt(v)])


def write_function(path: Path | str, u: GridFunction) -> None:
    _write(path, u.grid, u.values)


def write_mask(path: Path | str, mask: DomainMask) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y"][: mask.grid.dim] + ["value"])
        for pt, v in zip(mask.grid.points, mask.inside.ravel()):
            writer.writerow([fmt(c) for c in pt] + [int(v)])


def write_measure(path: Path | str, mu: MeasureField) -> None:
    _write(path, mu.grid, mu.beta)


def _read(path: Path | str) -> tuple[Grid, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if header not in (["x", "value"], ["x", "y", "value"]):
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    dim = len(header) - 1
    axes = [np.unique(data[:, k]) for k in range(dim)]
    n = [len(a) for a in axes]
    if int(np.prod(n)) != len(data):
        raise ValueError(f"{path}: {len(data)} rows do not form a {n} lattice")
    grid = build_grid([(a[0], a[-1]) for a in axes], n)
    idx = [np.searchsorted(a, data[:, k]) for k, a in enumerate(axes)]
    values = np.empty(grid.shape)
    values[tuple(idx)] = data[:, -1]
    for k, a in enumerate(axes):
        if not np.allclose(a, grid.axes[k], rtol=0, atol=1e-6 * grid.h[k]):
            raise ValueError(f"{path}: axis {k} is not uniformly spaced")
    return grid, values


def read_function(path: Path | str) -> GridFunction:
    grid, values = _read(path)
    return GridFunction(grid, values)


def read_mask(path: Path | str) -> DomainMask:
    grid, values = _read(path)
    return DomainMask(grid, values > 0.5)


def read_measure(path: Path | str) -> MeasureField:
    grid, values = _read(path)
    return MeasureField(grid, values)


def write_pgm(path: Path | str, u: GridFunction) -> None:
    """8-bit binary PGM, values rescaled linearly to [0, 255]; 2D only."""
    if u.grid.dim != 2:
        raise ValueError("PGM output needs a 2D grid")
    v = u.values
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo) * 255.0
    # image rows run top to bottom in y, columns along x
    img = np.rint(scaled.T[::-1]).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
