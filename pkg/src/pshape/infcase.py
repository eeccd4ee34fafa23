"""The p = infinity limit: distance-function states and the lens example.

For p = infinity the state of a set is the distance to the part of the design
region it leaves out. With the supremal cost -max u on the unit disc and a
volume budget m, the best set is the disc slice B(0,1) cap B((1,0), r_m)
anchored at a boundary point; ``verify_lens_optimality`` checks that against
centered and offset discs of the same area.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import measure
from .grid import DomainMask, GridFunction, box_mask, build_grid, disc_mask

_CHUNK = 2048


def distance_function(
    omega: DomainMask, d_mask: DomainMask | None = None, mode: str = "mixed"
) -> GridFunction:
    """Exact distance from each node of omega to the nearest left-out node.

    ``mode="mixed"`` measures the distance to the nodes of D not in omega
    (the design-region boundary itself imposes nothing); ``mode="dirichlet"``
    also counts every node outside D. Values are zero off omega.
    """
    grid = omega.grid
    d_mask = d_mask if d_mask is not None else box_mask(grid)
    inside = omega.inside & d_mask.inside
    if mode == "mixed":
        complement = d_mask.inside & ~inside
    elif mode == "dirichlet":
        complement = ~inside
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not complement.any():
        raise ValueError("the complement of omega is empty: u_D may not be well-defined")

    # the nearest complement node always has a 4-neighbour outside the complement
    structure = ndimage.generate_binary_structure(grid.dim, 1)
    interior = ndimage.binary_erosion(complement, structure=structure, border_value=1)
    sources = grid.points[(complement & ~interior).ravel()]
    targets = np.flatnonzero(inside.ravel())
    out = np.zeros(grid.size)
    pts = grid.points
    for start in range(0, targets.size, _CHUNK):
        idx = targets[start : start + _CHUNK]
        diff = pts[idx, None, :] - sources[None, :, :]
        out[idx] = np.sqrt(np.min(np.einsum("ijk,ijk->ij", diff, diff), axis=1))
    return GridFunction(grid, out.reshape(grid.shape))


def disc_overlap_area(dist: float, radius: float, R: float = 1.0) -> float:
    """Area of B(0, R) cap B(c, radius) with |c| = dist."""
    if radius <= 0:
        return 0.0
    if dist >= R + radius:
        return 0.0
    if dist + radius <= R:
        return math.pi * radius**2
    if dist + R <= radius:
        return math.pi * R**2
    a1 = (dist**2 + radius**2 - R**2) / (2 * dist * radius)
    a2 = (dist**2 + R**2 - radius**2) / (2 * dist * R)
    k = (-dist + radius + R) * (dist + radius - R) * (dist - radius + R) * (dist + radius + R)
    return (
        radius**2 * math.acos(min(1.0, max(-1.0, a1)))
        + R**2 * math.acos(min(1.0, max(-1.0, a2)))
        - 0.5 * math.sqrt(max(k, 0.0))
    )


def lens_area(r: float) -> float:
    """Area of the unit disc intersected with B((1,0), r)."""
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    if r >= 2:
        return math.pi
    return r * r * math.acos(r / 2) + math.acos(1 - r * r / 2) - 0.5 * r * math.sqrt(4 - r * r)


def _bisect(fn, target: float, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of the increasing function ``fn(x) = target`` on [lo, hi]."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimal_lens_radius(m: float) -> float:
    """Radius r_m with lens_area(r_m) = m, for 0 < m <= pi."""
    if not 0 < m <= math.pi:
        raise ValueError(f"area must lie in (0, pi], got {m}")
    if m == math.pi:
        return 2.0
    return _bisect(lens_area, m, 0.0, 2.0)


def offset_disc_radius(t: float, m: float) -> float:
    """Radius rho with |B(0,1) cap B((t,0), rho)| = m."""
    if not 0 < m <= math.pi:
        raise ValueError(f"area must lie in (0, pi], got {m}")
    return _bisect(lambda rho: disc_overlap_area(t, rho), m, 0.0, 1.0 + t)


def sup_cost(u: GridFunction, mask: DomainMask) -> float:
    """-max of u over the mask nodes."""
    if mask.empty:
        raise ValueError("sup cost over an empty mask")
    return -float(u.values[mask.inside].max())


@dataclass
class LensReport:
    m: float
    r_m: float
    h: float
    values: dict[str, float]
    winner: str
    margins: dict[str, float]
    lens_sup: float
    areas: dict[str, float] = field(default_factory=dict)
    masks: dict[str, DomainMask] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "r_m": self.r_m,
            "h": self.h,
            "winner": self.winner,
            "lens_sup": self.lens_sup,
            "values": dict(self.values),
            "margins": dict(self.margins),
            "discrete_areas": dict(self.areas),
        }


def lens_candidates(m: float, offsets=None) -> dict[str, tuple[tuple[float, float], float]]:
    """Equal-area candidate discs (center, radius) clipped to the unit disc."""
    offsets = np.round(np.linspace(0.1, 0.9, 9), 10) if offsets is None else offsets
    out = {"lens": ((1.0, 0.0), optimal_lens_radius(m))}
    rho0 = math.sqrt(m / math.pi)
    if rho0 <= 1:
        out["centered_disc"] = ((0.0, 0.0), rho0)
    for t in offsets:
        out[f"offset_{float(t):.2f}"] = ((float(t), 0.0), offset_disc_radius(float(t), m))
    return out


def verify_lens_optimality(m: float, n: int, offsets=None) -> LensReport:
    """Compare the supremal cost of the lens with centered and offset discs
    of the same area, on an n x n grid over [-1, 1]^2."""
    grid = build_grid([(-1, 1), (-1, 1)], n)
    D = disc_mask(grid, (0.0, 0.0), 1.0)
    cands = lens_candidates(m, offsets)

    def evaluate(item):
        name, (center, radius) = item
        mask = disc_mask(grid, center, radius) & D
        try:
            u = distance_function(mask, D, mode="mixed")
        except ValueError:
            return name, float("nan"), mask
        return name, sup_cost(u, D), mask

    workers = max(1, int(os.environ.get("PSHAPE_THREADS", "1") or 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, cands.items()))
    else:
        results = [evaluate(item) for item in cands.items()]

    values = {name: v for name, v, _ in results}
    masks = {name: mk for name, _, mk in results}
    finite = {k: v for k, v in values.items() if math.isfinite(v)}
    winner = min(finite, key=finite.get) if finite else "none"
    lens_value = values["lens"]
    margins = {k: v - lens_value for k, v in values.items() if k != "lens"}
    return LensReport(
        m=m,
        r_m=cands["lens"][1],
        h=grid.h[0],
        values=values,
        winner=winner,
        margins=margins,
        lens_sup=-lens_value,
        areas={k: measure(mk) for k, mk in masks.items()},
        masks=masks,
    )
