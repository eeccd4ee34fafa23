"""Command-line front end.

Every command reads a run config (``--config FILE``, ``--set key=value``
overrides, or the command-specific flags), writes its artifacts plus a
``manifest.json`` into ``output.dir`` and exits with 0 (ok), 2 (invalid
config or usage) or 3 (a solver did not converge).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .capmeasure import gamma_distance
from .config import COMMANDS, ConfigError, RunConfig
from .geometry import coarea_check, connected_components, finite_perimeter_diagnostic, mask_perimeter
from .grid import box_mask, build_grid
from .infcase import verify_lens_optimality
from .io import fmt, read_function, read_measure, round_sig, write_function, write_mask, write_measure, write_pgm
from .optimizer import CostSpec, OptimizeOptions, check_hypotheses, control_optimize, free_boundary_minimize
from .state import SolverOptions, StateProblem, solve_state

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3

logger = logging.getLogger("pshape")


def clean(obj):
    """JSON-ready copy: floats at 9 significant digits, non-finite as strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return round_sig(x) if math.isfinite(x) else fmt(x)
    return obj


def dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- option helpers --------------------------------------------------------------


def solver_options(cfg: RunConfig) -> SolverOptions:
    tol = cfg.float("solver.tol", 1e-8)
    max_iter = cfg.int("solver.max_iter", 50_000)
    if not tol > 0 or max_iter < 1:
        raise ConfigError("solver.tol must be > 0 and solver.max_iter >= 1")
    eps = cfg.float("solver.eps_reg") if cfg.has("solver.eps_reg") else None
    return SolverOptions(tol=tol, max_iter=max_iter, eps_reg=eps)


def optimize_options(cfg: RunConfig) -> OptimizeOptions:
    return OptimizeOptions(
        state=solver_options(cfg),
        max_outer=cfg.int("optimizer.max_outer", 50),
        step_fraction=cfg.float("optimizer.step_fraction", 0.25),
        cap_scale=cfg.float("optimizer.cap_scale", 1e6),
    )


def cost_spec(cfg: RunConfig, grid, g=None) -> CostSpec:
    lam = cfg.float("lambda", 0.0)
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    m = cfg.float("m") if cfg.has("m") else None
    if m is not None and m <= 0:
        raise ConfigError(f"m must be > 0, got {m}")
    return CostSpec(
        g=g if g is not None else cfg.data("g", grid),
        lam=lam,
        p=cfg.p(),
        q=cfg.float("q", math.inf),
        ell=cfg.float("ell", math.inf),
        m=m,
    )


def _nonneg(name: str, field) -> None:
    if np.any(field.values < 0):
        raise ConfigError(f"{name} must be >= 0 for this command")


# --- commands --------------------------------------------------------------------


def cmd_solve_state(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    grid = cfg.grid()
    domain = cfg.domain(grid)
    f = cfg.data("f", grid)
    u, report = solve_state(StateProblem.on_domain(cfg.p(), f, domain), solver_options(cfg))
    write_function(out / "u.csv", u)
    files = ["u.csv", "report.json"]
    data = report.to_dict() | {"max_u": u.max()}
    dump_json(out / "report.json", data)
    files += _pgm(cfg, out, u)
    return (EXIT_OK if report.converged else EXIT_NONCONVERGED), files


def _pgm(cfg: RunConfig, out: Path, u) -> list[str]:
    if cfg.str("output.pgm", "false").lower() in ("1", "true", "yes") and u.grid.dim == 2:
        write_pgm(out / "u.pgm", u)
        return ["u.pgm"]
    return []


def _set_summary(omega, domain) -> dict:
    return {
        "perimeter_omega": mask_perimeter(omega) if omega.grid.dim == 2 else float(omega.count),
        "components_complement": connected_components(omega, domain),
        "nodes_omega": omega.count,
    }


def cmd_optimize_fb(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    grid = cfg.grid()
    domain = cfg.domain(grid)
    f = cfg.data("f", grid)
    _nonneg("f", f)
    if cfg.has("g.kind") and not np.array_equal(cfg.data("g", grid).values, f.values):
        raise ConfigError("optimize-fb needs g = f (use optimize-control otherwise)")
    cost = cost_spec(cfg, grid, g=f)
    p = cost.p
    Lambda = (p - 1) * cost.lam / p
    u, omega, report = free_boundary_minimize(f, p, Lambda, domain, optimize_options(cfg))
    write_function(out / "u.csv", u)
    write_mask(out / "omega.csv", omega)
    data = report.to_dict() | {
        "Lambda": Lambda,
        "shape_cost": p / (p - 1) * report.objective,
        "hypotheses": check_hypotheses(f, cost, grid.dim, domain).to_dict(),
    }
    data |= _set_summary(omega, domain)
    dump_json(out / "report.json", data)
    files = ["u.csv", "omega.csv", "report.json"] + _pgm(cfg, out, u)
    return (EXIT_OK if report.converged else EXIT_NONCONVERGED), files


def cmd_optimize_control(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    grid = cfg.grid()
    domain = cfg.domain(grid)
    f = cfg.data("f", grid)
    _nonneg("f", f)
    cost = cost_spec(cfg, grid)
    try:
        mu, omega, u, report = control_optimize(f, cost, domain, optimize_options(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_function(out / "u.csv", u)
    write_mask(out / "omega.csv", omega)
    write_measure(out / "beta.csv", mu)
    data = report.to_dict() | {"hypotheses": check_hypotheses(f, cost, grid.dim, domain).to_dict()}
    data |= _set_summary(omega, domain)
    dump_json(out / "report.json", data)
    files = ["u.csv", "omega.csv", "beta.csv", "report.json"] + _pgm(cfg, out, u)
    return (EXIT_OK if report.converged else EXIT_NONCONVERGED), files


def cmd_gamma_distance(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    try:
        mu = read_measure(cfg.path("mu.path"))
        nu = read_measure(cfg.path("nu.path"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if mu.grid != nu.grid:
        raise ConfigError("mu and nu live on different grids")
    p = cfg.p() if cfg.has("p") else 2.0
    domain = cfg.domain(mu.grid)
    d = gamma_distance(mu, nu, p, domain, opts=solver_options(cfg))
    result = {"d_gamma_p": d}
    print(json.dumps(clean(result)))
    dump_json(out / "report.json", result | {"p": p})
    return EXIT_OK, ["report.json"]


def _default_epsilons(u) -> list[float]:
    top = u.max()
    return [top * 2.0**-k for k in range(1, 6)]


def cmd_perimeter_diag(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    try:
        u = read_function(cfg.path("u.path"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if np.any(u.values < 0):
        raise ConfigError("perimeter-diag expects u >= 0")
    if not u.max() > 0:
        raise ConfigError("perimeter-diag needs u with a positive maximum")
    p = cfg.p()
    eps = cfg.floats("diag.epsilons") if cfg.has("diag.epsilons") else _default_epsilons(u)
    if any(e <= 0 for e in eps):
        raise ConfigError("diag.epsilons must be positive")
    table = finite_perimeter_diagnostic(u, p, eps)
    with open(out / "diag.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epsilon,measure_omega_eps,grad_p_integral,perimeter\n")
        for row in table.rows():
            fh.write(",".join(fmt(v) for v in row) + "\n")
    lhs, rhs = coarea_check(u, eps)
    dump_json(out / "report.json", table.to_dict() | {"coarea_lhs": lhs, "coarea_rhs": rhs, "p": p})
    return EXIT_OK, ["diag.csv", "report.json"]


def cmd_inf_lens(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    m = cfg.float("lens.m")
    if not 0 < m <= math.pi:
        raise ConfigError(f"lens.m must lie in (0, pi], got {m}")
    n = cfg.int("lens.n", 257)
    if n < 5:
        raise ConfigError("lens.n must be at least 5")
    report = verify_lens_optimality(m, n)
    data = report.to_dict()
    print(json.dumps(clean({"r_m": report.r_m, "winner": report.winner, "margins": report.margins})))
    dump_json(out / "report.json", data)
    files = ["report.json"]
    if report.winner in report.masks:
        write_mask(out / "omega.csv", report.masks[report.winner])
        files.append("omega.csv")
    return EXIT_OK, files


def cmd_check_hypotheses(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    if cfg.has("grid.extent"):
        grid = cfg.grid()
    else:
        d = cfg.int("d", 2)
        if d < 1 or d > 2:
            raise ConfigError("d must be 1 or 2")
        grid = build_grid([(0.0, 1.0)] * d, 33)
    domain = cfg.domain(grid) if cfg.has("domain.kind") else box_mask(grid)
    f = cfg.data("f", grid)
    report = check_hypotheses(f, cost_spec(cfg, grid), grid.dim, domain)
    dump_json(out / "report.json", report.to_dict())
    print(json.dumps(clean(report.to_dict()), indent=2))
    return EXIT_OK, ["report.json"]


HANDLERS = {
    "solve-state": cmd_solve_state,
    "optimize-fb": cmd_optimize_fb,
    "optimize-control": cmd_optimize_control,
    "gamma-distance": cmd_gamma_distance,
    "perimeter-diag": cmd_perimeter_diag,
    "inf-lens": cmd_inf_lens,
    "check-hypotheses": cmd_check_hypotheses,
}


def run(cfg: RunConfig) -> int:
    """Dispatch ``cfg.command``; always leaves a manifest.json behind."""
    start = time.perf_counter()
    out = cfg.output_dir
    status, files, error = EXIT_CONFIG, [], None
    command = cfg.values.get("command", "")
    try:
        command = cfg.command
        out.mkdir(parents=True, exist_ok=True)
        status, files = HANDLERS[command](cfg, out)
    except ConfigError as exc:
        error = str(exc)
        print(f"pshape: invalid config: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    try:
        out.mkdir(parents=True, exist_ok=True)
        dump_json(
            out / "manifest.json",
            {
                "command": command,
                "config": cfg.echo(),
                "exit_status": status,
                "error": error,
                "outputs": files,
                "wall_time_s": time.perf_counter() - start,
                "versions": {
                    "pshape": __version__,
                    "python": platform.python_version(),
                    "numpy": np.__version__,
                    "scipy": scipy.__version__,
                },
            },
        )
    except OSError as exc:
        print(f"pshape: cannot write manifest: {exc}", file=sys.stderr)
    if status == EXIT_NONCONVERGED:
        print("pshape: solver did not converge, see report.json", file=sys.stderr)
    return status


# --- argument parsing ------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pshape", description="p-Laplacian shape optimization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(sp):
        sp.add_argument("--config", help="run config file (key = value lines)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--out", help="output directory (output.dir)")
        sp.add_argument("--p", type=float, help="exponent p (p)")

    run_p = sub.add_parser("run", help="run the command named in a config file")
    run_p.add_argument("config")
    run_p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    run_p.add_argument("--out")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        common(sp)
        if name == "gamma-distance":
            sp.add_argument("mu", nargs="?", help="measure CSV (mu.path)")
            sp.add_argument("nu", nargs="?", help="measure CSV (nu.path)")
        if name == "perimeter-diag":
            sp.add_argument("--u", help="state CSV (u.path)")
        if name == "inf-lens":
            sp.add_argument("--m", type=float, help="area budget (lens.m)")
            sp.add_argument("--n", type=int, help="grid nodes per side (lens.n)")
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    if args.command == "run":
        cfg = RunConfig.from_file(args.config)
    else:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        cfg.values["command"] = args.command
    cfg.update(args.set)
    flags = {
        "output.dir": getattr(args, "out", None),
        "p": getattr(args, "p", None),
        "mu.path": getattr(args, "mu", None),
        "nu.path": getattr(args, "nu", None),
        "u.path": getattr(args, "u", None),
        "lens.m": getattr(args, "m", None),
        "lens.n": getattr(args, "n", None),
    }
    for key, value in flags.items():
        if value is not None:
            cfg.values[key] = str(value)
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"pshape: invalid config: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    if cfg.values.get("command") not in COMMANDS:
        print(f"pshape: unknown command {cfg.values.get('command')!r}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        run(cfg)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
