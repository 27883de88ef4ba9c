"""
DRMPC - Constants and Reference Data
Tolerances, default hyperparameters and the benchmark plant data used
throughout the library.
"""

from typing import Dict, List

# =============================================================================
# CONIC SOLVER
# =============================================================================

SOLVER_TOL: float = 1e-8
SOLVER_MAX_ITER: int = 200
SOLVER_STATIC_REG: float = 1e-9
SOLVER_MAX_REG: float = 1e-6
SOLVER_REDUCED_TOL: float = 1e-6
SOLVER_STEP_FRACTION: float = 0.99
PSD_MEMBERSHIP_TOL: float = 1e-7
PSD_CHOLESKY_TOL: float = 1e-10

# =============================================================================
# POLYTOPES
# =============================================================================

REDUNDANCY_TOL: float = 1e-9
MRPI_MAX_ITER: int = 200
MRPI_SAMPLED_INVARIANCE_TOL: float = 1e-9
RPI_ALPHA: float = 0.05
RPI_MAX_POWER: int = 1000

# =============================================================================
# REGULATOR
# =============================================================================

RICCATI_TOL: float = 1e-12
RICCATI_MAX_ITER: int = 10_000
RICCATI_RESIDUAL_TOL: float = 1e-8
RANK_REL_TOL: float = 1e-10

# =============================================================================
# ONLINE LEARNING (DPMM)
# =============================================================================

DPMM_KMAX: int = 20
DPMM_ALPHA: float = 1.0
DPMM_LAMBDA0: float = 0.01
DPMM_PSI0_SCALE: float = 0.01
DPMM_ELBO_TOL: float = 1e-6
DPMM_MAX_SWEEPS: int = 50
DPMM_CLUMP_THRESHOLD: float = 0.95
DPMM_PRUNE_WEIGHT: float = 1e-3
DPMM_COV_FLOOR: float = 1e-8
DPMM_SUPPORT_SHRINK: float = 1e-6
DPMM_MIN_COUNT: float = 1e-3

# =============================================================================
# CONSTRAINT TIGHTENING
# =============================================================================

ORACLE_GRID_DENSITY: int = 241
ORACLE_TOL: float = 1e-7
DOMINANCE_TOL: float = 1e-6

# =============================================================================
# MPC
# =============================================================================

SAFE_UPDATE_TOL: float = 1e-9
COST_DECREASE_TOL: float = 1e-7
SHIFT_IDENTITY_TOL: float = 1e-10

# =============================================================================
# BENCHMARK PLANTS
# =============================================================================

# Constrained sampled double integrator
DOUBLE_INTEGRATOR: Dict[str, List[List[float]]] = {
    "A": [[1.0, 1.0], [0.0, 1.0]],
    "B": [[0.5], [1.0]],
}

# Published LQR gain and closed loop for Q = I, R = 0.01
DOUBLE_INTEGRATOR_K: List[float] = [-0.6609, -1.3261]
DOUBLE_INTEGRATOR_PHI: List[List[float]] = [[0.6696, 0.3370], [-0.6609, -0.3261]]

# Four-state benchmark with a single input
FOUR_STATE_PLANT: Dict[str, List[List[float]]] = {
    "A": [
        [1.0, 0.0, 0.1, 0.0],
        [0.0, 1.0, 0.0, 0.1],
        [-2.0, 0.2, 1.0, 0.0],
        [0.5, -0.05, 0.0, 1.0],
    ],
    "B": [[0.0], [0.0], [0.2], [0.0]],
}
