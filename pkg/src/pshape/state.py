"""Relaxed p-Laplace state equation on a grid.

Solves ``-div(|grad u|^{p-2} grad u) + beta |u|^{p-2} u = f`` with u = 0 on a
set of Dirichlet nodes by minimizing the convex discrete energy

    E(u) = sum_cells vol * mean_corners (1/p)|G_c u|^p
         + sum_nodes w (1/p) beta |u|^p  -  sum_nodes w f u,

where ``G_c u`` is the forward-difference gradient seen from corner ``c`` of a
cell and ``w`` are lumped node weights on the whole box (u vanishes off the
free nodes). At p = 2 the gradient term is exactly the 5-point Laplacian.

The minimizer is found by gradient descent in the discrete H^1_0 metric
(the p = 2 stiffness plus the beta mass) with Barzilai-Borwein step lengths
and Armijo backtracking. Singular/degenerate powers are first smoothed as
``(t^2 + eps^2)^{p/2} - eps^p``; a second pass with eps = 0 polishes the
result so the reported residual refers to the unsmoothed equations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    DomainMask,
    GridFunction,
    MeasureField,
    box_mask,
    corner_gradient_operators,
    node_weights,
)

logger = logging.getLogger(__name__)

_FP_SLACK = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class StateProblem:
    """Data of one state solve.

    ``dirichlet`` lists nodes pinned to zero; nodes on the faces of the grid box
    and nodes where ``beta`` is infinite are pinned as well.
    """

    p: float
    f: GridFunction
    beta: MeasureField
    dirichlet: DomainMask

    def __post_init__(self) -> None:
        if not (self.p > 1 and math.isfinite(self.p)):
            raise ValueError(f"state exponent must satisfy 1 < p < inf, got {self.p}")
        grid = self.f.grid
        if self.beta.grid != grid or self.dirichlet.grid != grid:
            raise ValueError("f, beta and dirichlet must share one grid")

    @classmethod
    def on_domain(
        cls, p: float, f: GridFunction, domain: DomainMask, beta: MeasureField | None = None
    ) -> StateProblem:
        if beta is None:
            beta = MeasureField.zero(f.grid)
        return cls(p, f, beta, ~domain)

    @property
    def grid(self):
        return self.f.grid

    @property
    def pinned(self) -> np.ndarray:
        """All nodes held at zero."""
        return self.dirichlet.inside | self.grid.boundary | np.isposinf(self.beta.beta)

    @property
    def free(self) -> np.ndarray:
        return ~self.pinned

    @property
    def data_scale(self) -> float:
        """Typical gradient size of the solution: (|f|_inf * diam)^(1/(p-1))."""
        fmax = float(np.abs(self.f.values).max())
        return max(fmax * self.grid.diameter, 1e-300) ** (1.0 / (self.p - 1.0))


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 50_000
    eps_reg: float | None = None  # None: 1e-6 * data scale
    polish: bool = True
    armijo: float = 1e-4


@dataclass
class SolveReport:
    iterations: int
    final_energy: float
    residual: float
    converged: bool
    eps_reg: float = 0.0
    tolerance: float = 0.0
    energy_history: list[float] = field(default_factory=list, repr=False)
    energy_slack: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_energy": self.final_energy,
            "residual": self.residual,
            "converged": self.converged,
            "eps_reg": self.eps_reg,
            "tolerance": self.tolerance,
        }


class Discretization:
    """Energy, gradient and Hessian restricted to the free nodes of a problem."""

    def __init__(self, prob: StateProblem):
        grid = prob.grid
        self.prob = prob
        self.p = float(prob.p)
        self.free = prob.free
        self.free_idx = np.flatnonzero(self.free.ravel())
        w = node_weights(box_mask(grid)).ravel()
        self.w = w[self.free_idx]
        self.corner_weight = grid.cell_volume / 2**grid.dim
        ops = corner_gradient_operators(grid)
        self.G = [op[:, self.free_idx].tocsr() for op in ops]
        self.wf = self.w * prob.f.values.ravel()[self.free_idx]
        self.wb = self.w * prob.beta.finite_part.ravel()[self.free_idx]

    @property
    def size(self) -> int:
        return self.free_idx.size

    def expand(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.prob.grid.size)
        out[self.free_idx] = x
        return out.reshape(self.prob.grid.shape)

    def restrict(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).ravel()[self.free_idx]

    def _smoothed(self, t: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
        """(1/p)[(t+eps^2)^{p/2} - eps^p] and its flux coefficient (t+eps^2)^{(p-2)/2}."""
        p = self.p
        s = t + eps * eps
        phi = (s ** (p / 2) - eps**p) / p
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(s > 0, s ** ((p - 2) / 2), 0.0)
        return phi, a

    def energy_terms(self, x: np.ndarray, eps: float = 0.0) -> tuple[float, float, float]:
        g = [Gi @ x for Gi in self.G]
        phi, _ = self._smoothed(sum(gi * gi for gi in g), eps)
        phib, _ = self._smoothed(x * x, eps)
        return (
            self.corner_weight * float(phi.sum()),
            float(self.wb @ phib),
            -float(self.wf @ x),
        )

    def energy(self, x: np.ndarray, eps: float = 0.0) -> float:
        return sum(self.energy_terms(x, eps))

    def energy_and_grad(self, x: np.ndarray, eps: float = 0.0) -> tuple[float, np.ndarray, float]:
        """Energy, its gradient and the magnitude scale of the summed terms."""
        g = [Gi @ x for Gi in self.G]
        phi, a = self._smoothed(sum(gi * gi for gi in g), eps)
        phib, ab = self._smoothed(x * x, eps)
        grad = self.corner_weight * sum(Gi.T @ (a * gi) for Gi, gi in zip(self.G, g))
        grad += self.wb * ab * x - self.wf
        e_grad = self.corner_weight * float(phi.sum())
        e_beta = float(self.wb @ phib)
        e_load = -float(self.wf @ x)
        scale = abs(e_grad) + abs(e_beta) + float(np.abs(self.wf * x).sum())
        return e_grad + e_beta + e_load, grad, scale

    def residual(self, grad: np.ndarray) -> float:
        """Sup norm of the nodal Euler-Lagrange residual (gradient / node weight)."""
        if grad.size == 0:
            return 0.0
        return float(np.abs(grad / self.w).max())

    def hessian(self, x: np.ndarray, eps: float) -> sp.csr_matrix:
        p = self.p
        g = [Gi @ x for Gi in self.G]
        s = sum(gi * gi for gi in g) + eps * eps
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(s > 0, s ** ((p - 2) / 2), 0.0)
            b = np.where(s > 0, (p - 2) * s ** ((p - 4) / 2), 0.0)
        cw = self.corner_weight
        H = sp.csr_matrix((self.size, self.size))
        for i, Gi in enumerate(self.G):
            for j, Gj in enumerate(self.G):
                coef = cw * (b * g[i] * g[j] + (a if i == j else 0.0))
                H = H + Gi.T @ sp.diags(coef) @ Gj
        sb = x * x + eps * eps
        with np.errstate(divide="ignore", invalid="ignore"):
            db = np.where(
                sb > 0, sb ** ((p - 2) / 2) + (p - 2) * x * x * sb ** ((p - 4) / 2), 0.0
            )
        return (H + sp.diags(self.wb * db)).tocsr()

    def metric(self) -> sp.csc_matrix:
        """p = 2 stiffness plus beta mass: the inner product of the descent."""
        cw = self.corner_weight
        K = sum(cw * (Gi.T @ Gi) for Gi in self.G)
        return (K + sp.diags(self.wb)).tocsc()


def energy(u: GridFunction, prob: StateProblem) -> float:
    """Unsmoothed discrete energy of ``u`` (which must vanish on pinned nodes)."""
    if u.grid != prob.grid:
        raise ValueError("u and problem live on different grids")
    inf_nodes = np.isposinf(prob.beta.beta)
    if np.any(u.values[inf_nodes] != 0):
        raise ValueError("u must vanish where beta is infinite")
    if np.any(u.values[prob.pinned] != 0):
        raise ValueError("u must vanish on Dirichlet nodes")
    disc = Discretization(prob)
    return disc.energy(disc.restrict(u.values))


def _descend(
    disc: Discretization,
    solve_metric,
    x: np.ndarray,
    eps: float,
    tol: float,
    max_iter: int,
    armijo: float,
    history: list[float],
    slack_log: list[float],
) -> tuple[np.ndarray, int, float]:
    """BB/Armijo descent in the metric; returns (x, iterations, residual)."""
    E, g, scale = disc.energy_and_grad(x, eps)
    res = disc.residual(g)
    d = -solve_metric(g)
    alpha = 1.0
    it = 0
    while res > tol and it < max_iter:
        gd = float(g @ d)
        if gd >= 0:  # metric direction lost descent through roundoff
            break
        slack = _FP_SLACK * (scale + 1e-300)
        while True:
            xn = x + alpha * d
            En, gn, scale_n = disc.energy_and_grad(xn, eps)
            if En <= E + armijo * alpha * gd:
                break
            # predicted decrease below floating-point resolution of E
            if -alpha * gd <= slack and En <= E + slack:
                break
            alpha *= 0.5
            if alpha < 1e-30:
                return x, it, res
        it += 1
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        sMs = alpha * alpha * (-gd)  # since M d = -g
        history.append(En)
        slack_log.append(slack)
        x, E, g, scale = xn, En, gn, scale_n
        res = disc.residual(g)
        d = -solve_metric(g)
        alpha = sMs / sy if sy > 0 else 1.0
    return x, it, res


def solve_state(
    prob: StateProblem,
    opts: SolverOptions | None = None,
    u0: GridFunction | None = None,
) -> tuple[GridFunction, SolveReport]:
    """Minimize the discrete energy over functions vanishing on pinned nodes.

    Non-convergence is reported through ``report.converged``; the last iterate
    is still returned.
    """
    opts = opts or SolverOptions()
    if np.isnan(prob.f.values).any() or np.isnan(prob.beta.beta).any():
        raise ValueError("NaN in state data")
    disc = Discretization(prob)
    fscale = max(1.0, float(np.abs(prob.f.values).max()))
    tol = opts.tol * fscale
    if disc.size == 0:
        return GridFunction(prob.grid, np.zeros(prob.grid.shape)), SolveReport(
            0, 0.0, 0.0, True, 0.0, tol
        )

    eps = opts.eps_reg if opts.eps_reg is not None else 1e-6 * prob.data_scale
    if prob.p == 2:
        eps = 0.0  # the smoothing is the identity at p = 2
    lu = spla.splu(disc.metric())

    x = np.zeros(disc.size) if u0 is None else disc.restrict(u0.values).copy()
    history: list[float] = [disc.energy(x, eps)]
    slack: list[float] = [0.0]
    x, it, res = _descend(disc, lu.solve, x, eps, tol, opts.max_iter, opts.armijo, history, slack)
    total = it
    final_eps = eps
    if opts.polish and eps > 0:
        history.append(disc.energy(x, 0.0))
        slack.append(np.inf)  # phase change: energies are not comparable
        x, it, res = _descend(
            disc, lu.solve, x, 0.0, tol, opts.max_iter - total, opts.armijo, history, slack
        )
        total += it
        final_eps = 0.0
    report = SolveReport(
        iterations=total,
        final_energy=disc.energy(x, final_eps),
        residual=res,
        converged=res <= tol,
        eps_reg=final_eps if not opts.polish else eps,
        tolerance=tol,
        energy_history=history,
        energy_slack=slack,
    )
    if not report.converged:
        logger.warning("state solve stopped at residual %.3e > %.3e after %d iterations", res, tol, total)
    return GridFunction(prob.grid, disc.expand(x)), report


def solve_on_set(
    omega: DomainMask,
    f: GridFunction,
    p: float,
    opts: SolverOptions | None = None,
) -> GridFunction:
    """State function of ``omega``: beta = 0 and Dirichlet data off ``omega``."""
    prob = StateProblem(p, f, MeasureField.zero(f.grid), ~omega)
    u, _ = solve_state(prob, opts)
    return u
