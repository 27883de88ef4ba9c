"""
DRMPC - Control Module
LQR synthesis, tightened sets and the receding-horizon controller.
"""

from src.control.regulator import (
    Plant,
    Regulator,
    finite_horizon_cost,
    lifted_cost_matrix,
    rollout_cost,
    synthesize,
)
from src.control.mpc import (
    Candidate,
    MpcConfig,
    MpcSolution,
    TerminalMode,
    TightenedSets,
    build_sets,
    candidate,
    candidate_solution,
    control_input,
    is_feasible,
    nominal_rollout,
    safe_update,
    shift_residual,
    solve_ocp,
    worst_case_sets,
)

__all__ = [
    # Regulator
    "Plant",
    "Regulator",
    "finite_horizon_cost",
    "lifted_cost_matrix",
    "rollout_cost",
    "synthesize",
    # MPC
    "Candidate",
    "MpcConfig",
    "MpcSolution",
    "TerminalMode",
    "TightenedSets",
    "build_sets",
    "candidate",
    "candidate_solution",
    "control_input",
    "is_feasible",
    "nominal_rollout",
    "safe_update",
    "shift_residual",
    "solve_ocp",
    "worst_case_sets",
]
