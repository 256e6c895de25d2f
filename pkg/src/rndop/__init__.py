"""Far-field anchor placement by minimax range-normalized DOP."""

from .errors import RndopError
from .experiments import McCampaign, run_campaign, select_configs, timing_stats
from .geometry import AnchorMatrix, AnchorSet, Target, anchor_matrix, exact_dop, max_rndop, rndop, rndop_bounds
from .localize import RangeModel, nls_fix, simulate_ranges
from .pipeline import PlacementRun, run_algorithm1, run_algorithm2, run_placement
from .placement import BoxConstraint, PlacementProblem, SeparationConstraint
from .solver import SolverSettings, solve_anchor_subproblem

__version__ = "0.1.0"

__all__ = [
    "AnchorMatrix",
    "AnchorSet",
    "BoxConstraint",
    "McCampaign",
    "PlacementProblem",
    "PlacementRun",
    "RangeModel",
    "RndopError",
    "SeparationConstraint",
    "SolverSettings",
    "Target",
    "anchor_matrix",
    "exact_dop",
    "max_rndop",
    "nls_fix",
    "rndop",
    "rndop_bounds",
    "run_algorithm1",
    "run_algorithm2",
    "run_campaign",
    "run_placement",
    "select_configs",
    "simulate_ranges",
    "solve_anchor_subproblem",
    "timing_stats",
]
