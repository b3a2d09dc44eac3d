"""Multiscale linear programming for optimal transport on grids."""

__version__ = "0.1.0"

from .barycenter import BarycenterResult, multiscale_barycenter, solve_barycenter
from .errors import (EmptyDomainError, InfeasibleSupportError, IterationLimitError,
                     MultiscaleError, TransportError, UnbalancedError)
from .grid import ChildMap, Grid, Mask, build_grid, neighbors, refine
from .lp_core import (Certificate, Plan, SolverOptions, SupportSet, read_plan, solve_full,
                      solve_partial, solve_sparse, verify_optimality, write_plan)
from .measure import CostSpec, DiscreteMeasure, cost_eval, discretize
from .multiscale import (LevelTrace, MultiscaleConfig, dilate, extract_support, lift_support,
                         multiscale_solve)
from .postprocess import (PointCloud, RasterDensity, TransportMap, analytic_map,
                          barycentric_project, error_metrics, pushforward, smooth)
from .presets import preset_density

__all__ = [
    "BarycenterResult", "Certificate", "ChildMap", "CostSpec", "DiscreteMeasure",
    "EmptyDomainError", "Grid", "InfeasibleSupportError", "IterationLimitError", "LevelTrace",
    "Mask", "MultiscaleConfig", "MultiscaleError", "Plan", "PointCloud", "RasterDensity",
    "SolverOptions", "SupportSet", "TransportError", "TransportMap", "UnbalancedError",
    "analytic_map", "barycentric_project", "build_grid", "cost_eval", "dilate",
    "discretize", "error_metrics", "extract_support", "lift_support", "multiscale_barycenter",
    "multiscale_solve", "neighbors", "preset_density", "pushforward", "read_plan", "refine",
    "smooth", "solve_barycenter", "solve_full", "solve_partial", "solve_sparse",
    "verify_optimality", "write_plan",
]
