"""
DRMPC - Optimization Module
Dense conic interior-point solver for the LPs, QPs and SDPs of the library.
"""

from src.optimization.cones import (
    NonNegCone,
    PsdCone,
    ZeroCone,
    cone_violation,
    smat,
    svec,
    svec_dim,
    svec_index,
)
from src.optimization.conic_solver import (
    ConeProgram,
    ConeSolution,
    ConeStatus,
    SolverSettings,
    membership_violation,
    solve,
    solve_lp,
    solve_qp,
)

__all__ = [
    # Cones
    "ZeroCone",
    "NonNegCone",
    "PsdCone",
    "cone_violation",
    "svec",
    "smat",
    "svec_dim",
    "svec_index",
    # Solver
    "ConeProgram",
    "ConeSolution",
    "ConeStatus",
    "SolverSettings",
    "membership_violation",
    "solve",
    "solve_lp",
    "solve_qp",
]
