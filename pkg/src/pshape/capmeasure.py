"""Discrete capacitary measures: densities with an infinite (Dirichlet) part.

A measure is stored as a per-node density ``beta`` in [0, inf]; nodes carrying
``np.inf`` are held at zero by the state solver. The gamma_p distance between
two measures is the L^p distance of their states for the unit load.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import measure
from .grid import DomainMask, GridFunction, MeasureField, box_mask, lp_norm
from .state import SolverOptions, StateProblem, solve_state

__all__ = [
    "MeasureField",
    "MonotonicityReport",
    "check_monotonicity",
    "finite_region",
    "gamma_distance",
    "infinity_on",
    "relaxed_state",
]


def threads() -> int:
    try:
        return max(1, int(os.environ.get("PSHAPE_THREADS", "1")))
    except ValueError:
        return 1


def infinity_on(k: DomainMask) -> MeasureField:
    """The measure that is infinite on ``k`` and zero elsewhere."""
    return MeasureField(k.grid, np.where(k.inside, np.inf, 0.0))


def relaxed_state(
    mu: MeasureField,
    f: GridFunction,
    p: float,
    domain: DomainMask | None = None,
    opts: SolverOptions | None = None,
) -> GridFunction:
    """State u_{mu,f} on ``domain`` (default: the whole box)."""
    domain = domain if domain is not None else box_mask(mu.grid)
    u, _ = solve_state(StateProblem.on_domain(p, f, domain, mu), opts)
    return u


def gamma_distance(
    mu: MeasureField,
    nu: MeasureField,
    p: float,
    domain: DomainMask | None = None,
    f: GridFunction | None = None,
    opts: SolverOptions | None = None,
) -> float:
    """||u_{mu,1} - u_{nu,1}||_{L^p(D)}.

    ``f`` replaces the unit load; it exists for testing the stronger
    convergence statement and is not part of the metric.
    """
    if mu.grid != nu.grid:
        raise ValueError("measures live on different grids")
    grid = mu.grid
    domain = domain if domain is not None else box_mask(grid)
    load = f if f is not None else GridFunction(grid, np.ones(grid.shape))
    if threads() > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            a, b = pool.map(lambda m: relaxed_state(m, load, p, domain, opts), (mu, nu))
    else:
        a = relaxed_state(mu, load, p, domain, opts)
        b = relaxed_state(nu, load, p, domain, opts)
    return lp_norm(a - b, p, domain)


def _dominates(mu1: MeasureField, mu2: MeasureField) -> bool:
    b1, b2 = mu1.beta, mu2.beta
    return bool(np.all(np.isposinf(b1) | (~np.isposinf(b2) & (b1 >= b2))))


@dataclass
class MonotonicityReport:
    """Largest positive part of u1 - u2 over the nodes, where u1 <= u2 is expected."""

    violation: float
    argmax: tuple[int, ...]
    u1: GridFunction
    u2: GridFunction


def check_monotonicity(
    mu1: MeasureField,
    mu2: MeasureField,
    f: GridFunction,
    p: float,
    f2: GridFunction | None = None,
    domain: DomainMask | None = None,
    opts: SolverOptions | None = None,
) -> MonotonicityReport:
    """Compare two states that should be ordered.

    With ``f2`` omitted this checks mu1 >= mu2 => u_{mu1,f} <= u_{mu2,f} (f >= 0).
    With ``f2`` given (and mu1 = mu2) it checks f <= f2 => u_{mu,f} <= u_{mu,f2}.
    """
    if f2 is None:
        if np.any(f.values < 0):
            raise ValueError("monotonicity in the measure needs f >= 0")
        if not _dominates(mu1, mu2):
            raise ValueError("expected mu1 >= mu2 nodewise")
        loads = (f, f)
    else:
        if not np.array_equal(mu1.beta, mu2.beta):
            raise ValueError("monotonicity in the load needs a single measure")
        if np.any(f.values > f2.values):
            raise ValueError("expected f1 <= f2 nodewise")
        loads = (f, f2)
    u1 = relaxed_state(mu1, loads[0], p, domain, opts)
    u2 = relaxed_state(mu2, loads[1], p, domain, opts)
    diff = u1.values - u2.values
    k = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return MonotonicityReport(max(0.0, float(diff[k])), tuple(int(i) for i in k), u1, u2)


def finite_region(mu: MeasureField) -> tuple[DomainMask, float]:
    """Nodes where beta is finite, and the Lebesgue measure of that set."""
    mask = DomainMask(mu.grid, ~np.isposinf(mu.beta))
    return mask, measure(mask)
