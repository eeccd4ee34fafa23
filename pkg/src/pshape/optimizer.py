"""Shape optimization for the model cost J(u) = -int g u + lambda |{u > 0}|.

Two routes:

* ``free_boundary_minimize`` (f = g): minimize the energy plus a volume
  penalty directly over functions, alternating state solves on the current
  support with truncations ``(u - eps)^+``.
* ``control_optimize`` (general f, g): projected gradient on a capacitary
  density beta in [0, B_cap] with adjoint sensitivities and a volume budget
  on {beta < B_cap}.

``check_hypotheses`` reports which existence/regularity results apply to a
given set of model data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .geometry import measure
from .grid import DomainMask, GridFunction, MeasureField, integrate
from .state import (
    Discretization,
    SolveReport,
    SolverOptions,
    StateProblem,
    energy as state_energy,
    solve_on_set,
    solve_state,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Model cost data plus the integrability exponents claimed for f and g.

    ``m=None`` means no volume budget (m = |D|).
    """

    g: GridFunction
    lam: float
    p: float
    q: float = math.inf
    ell: float = math.inf
    m: float | None = None

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.m is not None and not self.m > 0:
            raise ValueError(f"volume budget must be positive, got {self.m}")


@dataclass
class OptimizeOptions:
    state: SolverOptions = field(default_factory=SolverOptions)
    max_outer: int = 50
    octaves: int = 12
    eps0_fraction: float = 0.1
    support_rtol: float = 1e-8
    step_fraction: float = 0.25
    cap_scale: float = 1e6


@dataclass
class OptimizationReport:
    iterations: int
    objective: float
    converged: bool
    history: list[float] = field(default_factory=list)
    measure: float = 0.0
    state: SolveReport | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "iterations": self.iterations,
            "objective": self.objective,
            "converged": self.converged,
            "objective_history": list(self.history),
            "measure_omega": self.measure,
            "notes": list(self.notes),
        }
        if self.state is not None:
            out["state"] = self.state.to_dict()
        return out


def support(u: GridFunction, rtol: float = 1e-8) -> DomainMask:
    """Nodes where u exceeds ``rtol * max u`` (empty when max u <= 0)."""
    top = float(u.values.max())
    if top <= 0:
        return DomainMask(u.grid, np.zeros(u.grid.shape, dtype=bool))
    return DomainMask(u.grid, u.values > rtol * top)


def _zero(f: GridFunction) -> GridFunction:
    return GridFunction(f.grid, np.zeros(f.grid.shape))


# --- free boundary route -------------------------------------------------------


def free_boundary_energy(
    u: GridFunction, f: GridFunction, p: float, Lambda: float, domain: DomainMask, rtol: float = 1e-8
) -> float:
    """(1/p) int |grad u|^p - int f u + Lambda |{u > 0}|."""
    prob = StateProblem.on_domain(p, f, domain)
    return state_energy(u, prob) + Lambda * measure(support(u, rtol))


def free_boundary_minimize(
    f: GridFunction,
    p: float,
    Lambda: float,
    domain: DomainMask,
    opts: OptimizeOptions | None = None,
) -> tuple[GridFunction, DomainMask, OptimizationReport]:
    """Minimize the energy plus ``Lambda`` times the support measure.

    ``Lambda`` is the full coefficient of the volume term, i.e. (p-1)/p times
    the lambda of the shape cost.
    """
    opts = opts or OptimizeOptions()
    if np.any(f.values < 0):
        raise ValueError("free boundary route needs f >= 0")
    if Lambda < 0:
        raise ValueError(f"Lambda must be nonnegative, got {Lambda}")

    def E(v: GridFunction) -> float:
        return free_boundary_energy(v, f, p, Lambda, domain, opts.support_rtol)

    current = domain
    u = _zero(f)
    history = [0.0]
    state_report = None
    converged = False
    outer = 0
    for outer in range(1, opts.max_outer + 1):
        prob = StateProblem.on_domain(p, f, current)
        u, state_report = solve_state(prob, opts.state, u0=u)
        u = GridFunction(u.grid, np.maximum(u.values, 0.0))
        value = E(u)
        if value > history[-1] and outer > 1:
            logger.warning("free boundary energy rose from %.6e to %.6e", history[-1], value)
        history.append(value)

        top = u.max()
        accepted = False
        if top > 0:
            # the full truncation (u - max u)^+ = 0 is always a competitor
            schedule = [top] + [
                opts.eps0_fraction * top * 0.5**k for k in range(opts.octaves)
            ]
            for eps in schedule:
                v = GridFunction(u.grid, np.maximum(u.values - eps, 0.0))
                ev = E(v)
                if ev < value:
                    u, value, accepted = v, ev, True
                    history.append(value)
        new = support(u, opts.support_rtol) & domain
        if not accepted and new.inside.sum() == (current & domain).inside.sum():
            converged = state_report.converged
            break
        if not accepted:
            # support shrank only through roundoff-level nodes
            current = new
            continue
        current = new
        if current.empty:
            u = _zero(f)
            converged = True
            history.append(E(u))
            break

    omega = support(u, opts.support_rtol) & domain
    report = OptimizationReport(
        iterations=outer,
        objective=history[-1],
        converged=converged,
        history=history,
        measure=measure(omega),
        state=state_report,
    )
    return u, omega, report


# --- relaxed density route -----------------------------------------------------


def shape_cost(u: GridFunction, omega: DomainMask, cost: CostSpec, domain: DomainMask) -> float:
    """-int_D g u + lambda |omega|."""
    return -integrate(cost.g.values * u.values, domain) + cost.lam * measure(omega)


def _cap(f: GridFunction, cost: CostSpec, opts: OptimizeOptions) -> float:
    scale = max(1.0, float(np.abs(f.values).max()), float(np.abs(cost.g.values).max()))
    return opts.cap_scale * scale


def _eps_reg(prob: StateProblem, opts: OptimizeOptions) -> float:
    if prob.p == 2:
        return 0.0
    return opts.state.eps_reg if opts.state.eps_reg is not None else 1e-6 * prob.data_scale


def _fixed_reg(opts: OptimizeOptions, eps: float) -> SolverOptions:
    s = opts.state
    return SolverOptions(tol=s.tol, max_iter=s.max_iter, eps_reg=eps, polish=False, armijo=s.armijo)


def relaxed_objective(
    beta: MeasureField,
    f: GridFunction,
    cost: CostSpec,
    domain: DomainMask,
    opts: OptimizeOptions | None = None,
    b_cap: float | None = None,
) -> tuple[float, GridFunction]:
    """Smooth surrogate of J on densities: -int g u_beta + lambda sum w (1 - beta/B_cap).

    The state is the minimizer of the smoothed energy (smoothing held fixed).
    """
    opts = opts or OptimizeOptions()
    b_cap = b_cap if b_cap is not None else _cap(f, cost, opts)
    prob = StateProblem.on_domain(cost.p, f, domain, beta)
    u, _ = solve_state(prob, _fixed_reg(opts, _eps_reg(prob, opts)))
    disc = Discretization(prob)
    open_frac = 1.0 - np.minimum(disc.restrict(beta.beta), b_cap) / b_cap
    value = -float(disc.w @ (disc.restrict(cost.g.values) * disc.restrict(u.values)))
    value += cost.lam * float(disc.w @ open_frac)
    return value, u


def control_sensitivity(
    beta: MeasureField,
    f: GridFunction,
    cost: CostSpec,
    domain: DomainMask,
    opts: OptimizeOptions | None = None,
    b_cap: float | None = None,
    u: GridFunction | None = None,
) -> tuple[np.ndarray, GridFunction, GridFunction]:
    """Adjoint gradient of ``relaxed_objective`` with respect to nodal beta.

    Returns (gradient on the grid, state, adjoint). The adjoint solves
    H w = W g with H the Hessian of the smoothed state energy; then
    dJ/dbeta_i = W_i u_i (u_i^2 + eps^2)^{(p-2)/2} w_i - lambda W_i / B_cap.
    Pinned nodes carry zero.
    """
    opts = opts or OptimizeOptions()
    b_cap = b_cap if b_cap is not None else _cap(f, cost, opts)
    prob = StateProblem.on_domain(cost.p, f, domain, beta)
    eps = _eps_reg(prob, opts)
    if u is None:
        u, _ = solve_state(prob, _fixed_reg(opts, eps))
    disc = Discretization(prob)
    grad = np.zeros(f.grid.shape)
    adjoint = np.zeros(f.grid.shape)
    if disc.size == 0:
        return grad, u, GridFunction(f.grid, adjoint)
    x = disc.restrict(u.values)
    H = disc.hessian(x, eps).tocsc()
    rhs = disc.w * disc.restrict(cost.g.values)
    w = spla.spsolve(H, rhs)
    if not np.all(np.isfinite(w)):
        raise RuntimeError("adjoint solve failed")
    p = cost.p
    s = x * x + eps * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        dres = np.where(s > 0, x * s ** ((p - 2) / 2), 0.0)
    sens = disc.w * dres * w - cost.lam * disc.w / b_cap
    grad.ravel()[disc.free_idx] = sens
    adjoint.ravel()[disc.free_idx] = w
    return grad, u, GridFunction(f.grid, adjoint)


def _project_volume(
    trial: np.ndarray, free: np.ndarray, b_cap: float, budget: float | None, grid
) -> np.ndarray:
    """Clip to [0, B_cap]; then, if the open set {beta < B_cap} exceeds the
    budget, snap the highest-ranked open nodes (largest trial value, ties by
    node index) to B_cap. The cut is located by bisection on the rank."""
    beta = np.clip(trial, 0.0, b_cap)
    beta[~free] = b_cap
    if budget is None:
        return beta
    flat = beta.ravel()
    open_idx = np.flatnonzero((flat < b_cap) & free.ravel())
    # closing order: descending trial value, ascending index on ties
    order = open_idx[np.lexsort((open_idx, -trial.ravel()[open_idx]))]

    def open_measure(k: int) -> float:
        mask = (flat < b_cap) & free.ravel()
        mask[order[:k]] = False
        return measure(DomainMask(grid, mask.reshape(grid.shape)))

    if open_measure(0) <= budget:
        return beta
    lo, hi = 0, order.size  # open_measure(hi) == 0 <= budget
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if open_measure(mid) <= budget:
            hi = mid
        else:
            lo = mid
    flat = flat.copy()
    flat[order[:hi]] = b_cap
    return flat.reshape(grid.shape)


def control_optimize(
    f: GridFunction,
    cost: CostSpec,
    domain: DomainMask,
    opts: OptimizeOptions | None = None,
) -> tuple[MeasureField, DomainMask, GridFunction, OptimizationReport]:
    """Projected-gradient optimization of a density beta in [0, B_cap].

    Each step solves the state and the adjoint, moves beta against the
    sensitivity (step normalized so the largest move is ``step_fraction *
    B_cap``) and projects onto the bounds and the volume budget. The returned
    set is {beta < B_cap} intersected with {u > 0}; its state is recomputed with
    exact Dirichlet conditions. If the empty set has a lower cost it is
    returned instead.
    """
    opts = opts or OptimizeOptions()
    if np.any(f.values < 0):
        raise ValueError("control route needs f >= 0")
    grid = f.grid
    full = measure(domain)
    if cost.m is not None and cost.m > full * (1 + 1e-12):
        raise ValueError(f"volume budget {cost.m} exceeds |D| = {full}")
    budget = None if cost.m is None or cost.m >= full else cost.m
    b_cap = _cap(f, cost, opts)
    free = StateProblem.on_domain(cost.p, f, domain).free

    beta = np.where(free, 0.0, b_cap)
    history: list[float] = []
    notes: list[str] = []
    u = None
    converged = False
    it = 0
    for it in range(1, opts.max_outer + 1):
        mu = MeasureField(grid, beta)
        value, u = relaxed_objective(mu, f, cost, domain, opts, b_cap)
        history.append(value)
        grad, _, _ = control_sensitivity(mu, f, cost, domain, opts, b_cap, u=u)
        gmax = float(np.abs(grad).max())
        if gmax == 0:
            converged = True
            break
        step = opts.step_fraction * b_cap / gmax
        new = _project_volume(beta - step * grad, free, b_cap, budget, grid)
        if np.array_equal(new, beta):
            converged = True
            break
        beta = new

    mu = MeasureField(grid, beta)
    open_set = DomainMask(grid, (beta < b_cap) & free)
    if u is None:
        u = _zero(f)
    omega = open_set & support(u, opts.support_rtol)
    u_final = solve_on_set(omega, f, cost.p, opts.state)
    J = shape_cost(u_final, omega, cost, domain)
    if J > 0:
        notes.append(f"empty set beats the optimized set (J = {J:.6g} > 0)")
        omega = DomainMask(grid, np.zeros(grid.shape, dtype=bool))
        u_final, J = _zero(f), 0.0
    report = OptimizationReport(
        iterations=it,
        objective=J,
        converged=converged,
        history=history,
        measure=measure(omega),
        notes=notes,
    )
    return mu, omega, u_final, report


# --- hypothesis checker --------------------------------------------------------


@dataclass
class HypothesisReport:
    existence_open_p_gt_d: bool
    existence_quasiopen: bool
    openness: bool
    finite_perimeter: bool
    best_c: float
    reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "existence_open_p_gt_d": self.existence_open_p_gt_d,
            "existence_quasiopen": self.existence_quasiopen,
            "openness": self.openness,
            "finite_perimeter": self.finite_perimeter,
            "best_c": self.best_c,
            "reasons": list(self.reasons),
        }


def _fmt(x: float) -> str:
    return format(x, ".6g")


def check_hypotheses(
    f: GridFunction, cost: CostSpec, d: int, domain: DomainMask | None = None
) -> HypothesisReport:
    """Evaluate the existence, openness and finite-perimeter conditions for
    the model cost. Every flag comes with the inequalities it rests on."""
    from .grid import box_mask

    domain = domain if domain is not None else box_mask(f.grid)
    p, q, ell, lam = cost.p, cost.q, cost.ell, cost.lam
    g = cost.g.values
    fv = f.values
    reasons: list[str] = []

    g_l1 = integrate(np.abs(g), domain)
    g_integrable = math.isfinite(g_l1)
    f_nonneg = bool(np.all(fv >= 0))
    g_nonneg = bool(np.all(g >= 0))

    # existence of an optimal open set when p > d
    exist_open = p > d and g_integrable
    if exist_open:
        reasons.append(
            f"existence_open_p_gt_d: p = {_fmt(p)} > d = {d} (margin {_fmt(p - d)}); "
            f"a_M = M|g| + |lambda| is integrable, ||g||_1 = {_fmt(g_l1)}"
        )
    else:
        reasons.append(f"existence_open_p_gt_d: fails, p = {_fmt(p)} <= d = {d}")

    # existence among quasi-open sets
    exist_qo = g_nonneg and ell > 1 and lam >= 0 and f_nonneg
    if exist_qo:
        r = ell / (ell - 1) if math.isfinite(ell) else 1.0
        reasons.append(
            f"existence_quasiopen: min g = {_fmt(float(g.min()))} >= 0, ell = {_fmt(ell)} > 1 "
            f"(margin {_fmt(ell - 1)}), lambda = {_fmt(lam)} >= 0, min f = {_fmt(float(fv.min()))} >= 0; "
            f"growth bound with c = 1, r = {_fmt(r)}"
        )
    else:
        why = []
        if not g_nonneg:
            why.append(f"min g = {_fmt(float(g.min()))} < 0")
        if not ell > 1:
            why.append(f"ell = {_fmt(ell)} <= 1")
        if lam < 0:
            why.append(f"lambda = {_fmt(lam)} < 0")
        if not f_nonneg:
            why.append(f"min f = {_fmt(float(fv.min()))} < 0")
        reasons.append("existence_quasiopen: fails, " + ", ".join(why))

    # openness: g >= c f with c > 0, lambda > 0, q > d/p, no active volume budget
    pos = fv > 0
    if not pos.any():
        best_c = math.inf
    else:
        best_c = float(np.min(g[pos] / fv[pos]))
    full = measure(domain)
    budget_active = cost.m is not None and cost.m < full * (1 - 1e-12)
    opens = []
    if not best_c > 0:
        opens.append("no finite c with f <= C g (g vanishes where f > 0)")
    if not lam > 0:
        opens.append(f"lambda = {_fmt(lam)} is not > 0")
    if not q > d / p:
        opens.append(f"q = {_fmt(q)} <= d/p = {_fmt(d / p)}")
    if q < 1:
        opens.append(f"q = {_fmt(q)} < 1")
    if budget_active:
        opens.append(f"volume budget m = {_fmt(cost.m)} < |D| = {_fmt(full)} is active")
    openness = not opens
    if openness:
        reasons.append(
            f"openness: g >= c f with best c = {_fmt(best_c)} > 0, lambda = {_fmt(lam)} > 0, "
            f"q = {_fmt(q)} > d/p = {_fmt(d / p)} (margin {_fmt(q - d / p)})"
        )
    else:
        reasons.append("openness: fails, " + "; ".join(opens))

    # finite perimeter
    fin = []
    if not g_integrable:
        fin.append("g is not integrable")
    if not lam > 0:
        fin.append(f"lambda = {_fmt(lam)} is not > 0")
    if not f_nonneg:
        fin.append(f"min f = {_fmt(float(fv.min()))} < 0")
    finite_perimeter = not fin
    if finite_perimeter:
        reasons.append(
            f"finite_perimeter: a = |g| integrable (||g||_1 = {_fmt(g_l1)}), lambda = {_fmt(lam)} > 0, f >= 0"
        )
    else:
        reasons.append("finite_perimeter: fails, " + "; ".join(fin))

    return HypothesisReport(exist_open, exist_qo, openness, finite_perimeter, best_c, reasons)
