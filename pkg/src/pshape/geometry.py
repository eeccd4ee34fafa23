"""Set measure, level-set perimeter, thin-band diagnostics and component counts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .grid import DomainMask, Grid, GridFunction, box_mask


def measure(mask: DomainMask) -> float:
    """Number of cells with all corners in ``mask`` times the cell volume."""
    return float(mask.cells().sum()) * mask.grid.cell_volume


def _contour_length(values: np.ndarray, grid: Grid, level: float) -> float:
    v = values - level
    above = v > 0
    if grid.dim == 1:
        return float(np.count_nonzero(above[1:] != above[:-1]))
    hx, hy = grid.h
    v00, v10, v01, v11 = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
    a00, a10, a01, a11 = above[:-1, :-1], above[1:, :-1], above[:-1, 1:], above[1:, 1:]

    def cut(va, vb):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(va != vb, va / (va - vb), 0.5)

    # crossing points in cell-local coordinates, edges: bottom, right, top, left
    tb, tr, tt, tl = cut(v00, v10), cut(v10, v11), cut(v01, v11), cut(v00, v01)
    pts = {
        "b": (tb * hx, np.zeros_like(tb)),
        "r": (np.full_like(tr, hx), tr * hy),
        "t": (tt * hx, np.full_like(tt, hy)),
        "l": (np.zeros_like(tl), tl * hy),
    }
    hit = {"b": a00 != a10, "r": a10 != a11, "t": a01 != a11, "l": a00 != a01}
    nhit = sum(m.astype(int) for m in hit.values())

    def seg(e1, e2, sel):
        (x1, y1), (x2, y2) = pts[e1], pts[e2]
        return float(np.hypot(x1 - x2, y1 - y2)[sel].sum())

    total = 0.0
    two = nhit == 2
    names = ["b", "r", "t", "l"]
    for i in range(4):
        for j in range(i + 1, 4):
            sel = two & hit[names[i]] & hit[names[j]]
            if sel.any():
                total += seg(names[i], names[j], sel)
    saddle = nhit == 4
    if saddle.any():
        center_above = (v00 + v10 + v01 + v11) / 4 > 0
        joined = saddle & (center_above == a00)  # 00 and 11 connected through the center
        split = saddle & ~joined
        total += seg("b", "r", joined) + seg("t", "l", joined)
        total += seg("l", "b", split) + seg("r", "t", split)
    return total


def perimeter_estimate(u: GridFunction, delta: float) -> float:
    """Length of the contour {u = delta} (2D) or number of crossing points (1D).

    Marching squares with linear interpolation on cell edges; saddle cells are
    resolved by comparing the cell average with the level.
    """
    if not delta > 0:
        raise ValueError(f"level must be positive, got {delta}")
    return _contour_length(u.values, u.grid, delta)


def smoothed_indicator(mask: DomainMask, sigma: float = 1.0) -> np.ndarray:
    """Indicator of the mask blurred by a Gaussian of ``sigma`` node spacings.

    Nodes beyond the grid count as outside.
    """
    return ndimage.gaussian_filter(mask.inside.astype(float), sigma, mode="constant")


def mask_perimeter(mask: DomainMask, sigma: float = 1.0) -> float:
    """Perimeter of a node set: the 1/2 contour of its smoothed indicator."""
    if mask.empty:
        return 0.0
    grid = mask.grid
    s = np.pad(smoothed_indicator(mask, sigma), 1, mode="constant")
    padded = Grid(
        tuple((a - h, b + h) for (a, b), h in zip(grid.extent, grid.h)),
        tuple(k + 2 for k in grid.n),
    )
    return _contour_length(s, padded, 0.5)


# --- exact band measures of the piecewise-linear interpolant -------------------


def _fraction_below(vals: np.ndarray, t: float) -> np.ndarray:
    """Fraction of each simplex (last axis: vertex values) where the linear
    interpolant is < t. Segments (2 values) and triangles (3 values)."""
    v = np.sort(vals, axis=-1)
    lo, hi = v[..., 0], v[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        if v.shape[-1] == 2:
            frac = np.clip((t - lo) / (hi - lo), 0.0, 1.0)
        else:
            mid = v[..., 1]
            first = (t - lo) ** 2 / ((mid - lo) * (hi - lo))
            second = 1.0 - (hi - t) ** 2 / ((hi - lo) * (hi - mid))
            frac = np.where(t <= mid, first, second)
    frac = np.where(t <= lo, 0.0, frac)
    frac = np.where(t > hi, 1.0, frac)
    return np.nan_to_num(frac, nan=0.0)


def _simplices(u: GridFunction) -> tuple[np.ndarray, np.ndarray, float]:
    """Vertex values, gradient norms and volume of the simplices of the
    piecewise-linear interpolant (1D: cells; 2D: four triangles per cell
    meeting at the cell center, whose value is the corner mean)."""
    grid = u.grid
    v = u.values
    if grid.dim == 1:
        vals = np.stack([v[:-1], v[1:]], axis=-1)
        grad = np.abs(np.diff(v)) / grid.h[0]
        return vals, grad, grid.cell_volume
    hx, hy = grid.h
    v00, v10, v01, v11 = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
    c = (v00 + v10 + v01 + v11) / 4
    tris = [
        # (values, gx, gy)
        ((v00, v10, c), (v10 - v00) / hx, (2 * c - v00 - v10) / hy),
        ((v01, v11, c), (v11 - v01) / hx, (v01 + v11 - 2 * c) / hy),
        ((v00, v01, c), (2 * c - v00 - v01) / hx, (v01 - v00) / hy),
        ((v10, v11, c), (v10 + v11 - 2 * c) / hx, (v11 - v10) / hy),
    ]
    vals = np.stack([np.stack(t[0], axis=-1) for t in tris])
    grad = np.stack([np.hypot(t[1], t[2]) for t in tris])
    return vals, grad, grid.cell_volume / 4


def band_measure(u: GridFunction, lo: float, hi: float, weight_power: float | None = None) -> float:
    """Measure of {lo < u < hi} for the piecewise-linear interpolant of u,
    or, with ``weight_power=q``, the integral of |grad u|^q over that set."""
    vals, grad, vol = _simplices(u)
    frac = _fraction_below(vals, hi) - _fraction_below(vals, lo)
    # {u <= lo} also contains simplices where u == lo identically
    flat = np.all(vals == lo, axis=-1)
    frac = np.where(flat, 0.0, frac)
    w = 1.0 if weight_power is None else grad**weight_power
    return float(np.sum(np.clip(frac, 0.0, 1.0) * w) * vol)


@dataclass
class DiagnosticTable:
    epsilon: list[float]
    measure_omega_eps: list[float]
    grad_p_integral: list[float]
    perimeter: list[float]
    slope_measure: float = float("nan")
    slope_grad: float = float("nan")
    perimeter_ratio: float = float("nan")
    finite_perimeter: bool = False
    extra: dict = field(default_factory=dict)

    def rows(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.epsilon, self.measure_omega_eps, self.grad_p_integral, self.perimeter))

    def to_dict(self) -> dict:
        return {
            "slope_measure": self.slope_measure,
            "slope_grad": self.slope_grad,
            "perimeter_ratio": self.perimeter_ratio,
            "finite_perimeter": self.finite_perimeter,
        }


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def finite_perimeter_diagnostic(
    u: GridFunction, p: float, epsilons: Sequence[float]
) -> DiagnosticTable:
    """Thin-band table for Omega_eps = {0 < u < eps}.

    Rows hold |Omega_eps|, the integral of |grad u|^p over it and the length of
    {u = eps}. Slopes are least-squares fits in log-log. The perimeter is
    judged bounded when max/min over the four smallest levels is at most 4.
    """
    eps = [float(e) for e in epsilons]
    if any(e <= 0 for e in eps):
        raise ValueError("epsilons must be positive")
    if np.any(u.values < 0):
        raise ValueError("diagnostic expects u >= 0")
    meas = [band_measure(u, 0.0, e) for e in eps]
    gradp = [band_measure(u, 0.0, e, weight_power=p) for e in eps]
    per = [perimeter_estimate(u, e) for e in eps]
    table = DiagnosticTable(eps, meas, gradp, per)
    table.slope_measure = loglog_slope(eps, meas)
    table.slope_grad = loglog_slope(eps, gradp)
    smallest = [pv for _, pv in sorted(zip(eps, per))[:4]]
    lo, hi = min(smallest), max(smallest)
    if hi == 0:
        table.perimeter_ratio, table.finite_perimeter = 1.0, True
    elif lo == 0:
        table.perimeter_ratio, table.finite_perimeter = float("inf"), False
    else:
        table.perimeter_ratio = hi / lo
        table.finite_perimeter = hi / lo <= 4.0
    return table


def coarea_check(u: GridFunction, epsilons: Sequence[float]) -> tuple[float, float]:
    """(trapezoid of perimeter over [0, max eps], integral of |grad u| over the band).

    The perimeter at level 0 is taken from the smallest tested level.
    """
    eps = sorted(float(e) for e in epsilons)
    per = [perimeter_estimate(u, e) for e in eps]
    t = np.array([0.0] + eps)
    y = np.array([per[0]] + per)
    lhs = float(np.sum(np.diff(t) * (y[1:] + y[:-1]) / 2))
    rhs = band_measure(u, 0.0, eps[-1], weight_power=1.0)
    return lhs, rhs


def connected_components(mask: DomainMask, domain: DomainMask | None = None) -> int:
    """4-connected components of the closure of D minus Omega.

    The closure of D adds every node 8-adjacent to D (for the full box, the
    box faces); those boundary nodes never belong to Omega. The 8-adjacent
    layer keeps the frame of a curved D 4-connected.
    """
    grid = mask.grid
    domain = domain if domain is not None else box_mask(grid)
    structure = ndimage.generate_binary_structure(grid.dim, 1)
    full = ndimage.generate_binary_structure(grid.dim, grid.dim)
    interior = domain.inside & ~grid.boundary
    closure = ndimage.binary_dilation(interior, structure=full) | domain.inside
    omega = mask.inside & interior
    complement = closure & ~omega
    _, count = ndimage.label(complement, structure=structure)
    return int(count)
