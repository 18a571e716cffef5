"""Geodesic trajectories and optimal transport in nonuniform environments.

Thin Python surface over the C++ core: kernel evaluation with exact
derivatives, two-point geodesic solves, a-posteriori optimality
verification, pairwise cost matrices, and discrete optimal transport by
exact assignment or Sinkhorn iteration.
"""

from ._core import (
    Kernel,
    build_cost_matrix,
    path_cost,
    preset_names,
    run_preset,
    sinkhorn,
    solve_assignment,
    solve_geodesic,
    verify_minimizer,
)

__all__ = [
    "Kernel",
    "build_cost_matrix",
    "path_cost",
    "preset_names",
    "run_preset",
    "sinkhorn",
    "solve_assignment",
    "solve_geodesic",
    "verify_minimizer",
]

__version__ = "0.1.0"
