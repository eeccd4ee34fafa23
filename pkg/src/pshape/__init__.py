"""Shape optimization for p-Laplacian state problems on uniform grids."""

from __future__ import annotations

__version__ = "0.1.0"

from .capmeasure import check_monotonicity, finite_region, gamma_distance, infinity_on, relaxed_state
from .geometry import (
    band_measure,
    coarea_check,
    connected_components,
    finite_perimeter_diagnostic,
    mask_perimeter,
    measure,
    perimeter_estimate,
)
from .grid import (
    DomainMask,
    Grid,
    GridFunction,
    MeasureField,
    box_mask,
    build_grid,
    disc_mask,
    integrate,
    lp_norm,
)
from .infcase import distance_function, optimal_lens_radius, verify_lens_optimality
from .optimizer import (
    CostSpec,
    OptimizeOptions,
    check_hypotheses,
    control_optimize,
    control_sensitivity,
    free_boundary_minimize,
)
from .state import SolverOptions, StateProblem, energy, solve_on_set, solve_state

__all__ = [
    "CostSpec",
    "DomainMask",
    "Grid",
    "GridFunction",
    "MeasureField",
    "OptimizeOptions",
    "SolverOptions",
    "StateProblem",
    "band_measure",
    "box_mask",
    "build_grid",
    "check_hypotheses",
    "check_monotonicity",
    "coarea_check",
    "connected_components",
    "control_optimize",
    "control_sensitivity",
    "disc_mask",
    "distance_function",
    "energy",
    "finite_perimeter_diagnostic",
    "finite_region",
    "free_boundary_minimize",
    "gamma_distance",
    "infinity_on",
    "integrate",
    "lp_norm",
    "mask_perimeter",
    "measure",
    "optimal_lens_radius",
    "perimeter_estimate",
    "relaxed_state",
    "solve_on_set",
    "solve_state",
    "verify_lens_optimality",
]
