"""Probabilistic controlled invariant sets for Markov controlled processes."""

from .discretize import (
    Abstraction,
    ErrorModel,
    InfeasibleGridError,
    abstract_model,
    approx_finite_pcis,
    build_grids,
    error_bound,
    normalized_density,
)
from .finite_horizon import (
    backward_reachable_set,
    build_finite_lp,
    dp_backward,
    extract_policy_from_lp,
    largest_finite_pcis,
    solve_finite,
)
from .infinite_horizon import (
    build_infinite_milp,
    check_existence_conditions,
    infinite_pcis_via_rcis,
    largest_infinite_pcis,
    rcis_discrete,
    solve_ginf_exact,
    value_iteration_ginf,
)
from .model import (
    Box,
    ContinuousModel,
    DiscreteModel,
    ModelError,
    Region,
    linear_gaussian_model,
    load_model,
    restrict,
    validate,
)
from .results import GTable, MarkovPolicy, PcisResult, StationaryPolicy, ValueTable
from .sim import SimReport, simulate_continuous, simulate_discrete

__all__ = [
    "Abstraction", "ErrorModel", "InfeasibleGridError", "abstract_model", "approx_finite_pcis",
    "build_grids", "error_bound", "normalized_density",
    "backward_reachable_set", "build_finite_lp", "dp_backward", "extract_policy_from_lp",
    "largest_finite_pcis", "solve_finite",
    "build_infinite_milp", "check_existence_conditions", "infinite_pcis_via_rcis",
    "largest_infinite_pcis", "rcis_discrete", "solve_ginf_exact", "value_iteration_ginf",
    "Box", "ContinuousModel", "DiscreteModel", "ModelError", "Region", "linear_gaussian_model",
    "load_model", "restrict", "validate",
    "GTable", "MarkovPolicy", "PcisResult", "StationaryPolicy", "ValueTable",
    "SimReport", "simulate_continuous", "simulate_discrete",
]
