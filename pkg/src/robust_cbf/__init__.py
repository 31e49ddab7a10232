"""Robust relative-degree-two barrier constraints under ball-bounded parameter uncertainty.

The minimum-norm safe control is computed from an exact semidefinite
reformulation and cross-checked by independent oracles.
"""
from ._accel import backend
from .constraint import (
    ConstraintData,
    GainPair,
    ParameterEstimate,
    TildeConstraint,
    assemble_constraint,
    assemble_hdot,
    normalize_constraint,
)
from .errors import (
    ConfigError,
    ContractViolation,
    InfeasibleError,
    NonConvergenceError,
    NumericalFailure,
    RobustCBFError,
    SetupError,
)
from .model import AgentState, ScenarioModel, check_jets_fd, make_scenario_model
from .oracle import solve_robust_qp_cutting_plane, solve_trs, worst_case_z
from .sdp import SolveStatus, SolverOptions, build_robust_lmi, solve_safe_control
from .sim import Scenario, run_simulation, safety_report

__version__ = "0.1.0"

__all__ = [
    "backend",
    "ConstraintData",
    "GainPair",
    "ParameterEstimate",
    "TildeConstraint",
    "assemble_constraint",
    "assemble_hdot",
    "normalize_constraint",
    "ConfigError",
    "ContractViolation",
    "InfeasibleError",
    "NonConvergenceError",
    "NumericalFailure",
    "RobustCBFError",
    "SetupError",
    "AgentState",
    "ScenarioModel",
    "check_jets_fd",
    "make_scenario_model",
    "solve_robust_qp_cutting_plane",
    "solve_trs",
    "worst_case_z",
    "SolveStatus",
    "SolverOptions",
    "build_robust_lmi",
    "solve_safe_control",
    "Scenario",
    "run_simulation",
    "safety_report",
]
