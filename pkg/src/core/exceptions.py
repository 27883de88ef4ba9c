"""
DRMPC - Exceptions
One hierarchy for every failure the library reports.
"""

from typing import Any, Optional

import numpy as np


class DrmpcError(Exception):
    """Base class for all library errors."""


class ConfigError(DrmpcError, ValueError):
    """Invalid configuration or value-type invariant violation."""


class DimensionMismatchError(ConfigError):
    """Arrays whose shapes do not agree."""


# =============================================================================
# SOLVER
# =============================================================================

class SolverError(DrmpcError):
    """Conic solver could not produce a usable answer."""


class NumericalError(SolverError):
    """KKT factorization failed beyond recoverable regularization."""


class MaxIterError(SolverError):
    """Iteration cap reached before convergence."""


class UnboundedError(SolverError):
    """Objective unbounded below (dual infeasible)."""


class InfeasibleError(SolverError):
    """Constraint set is empty (primal infeasible)."""


class SolverFailedError(SolverError):
    """A tightening SDP row did not reach an acceptable solution."""

    def __init__(self, row: int, status: Any):
        super().__init__(f"tightening SDP for row {row} ended with status {status}")
        self.row = row
        self.status = status


# =============================================================================
# SETS
# =============================================================================

class EmptySetError(DrmpcError):
    """A constructed set turned out empty."""


class EmptyTerminalSetError(EmptySetError):
    """Terminal (MRPI) set is empty."""


class EmptyStageSetError(EmptySetError):
    """A tightened stage set is empty."""

    def __init__(self, stage: int, kind: str = "Z"):
        super().__init__(f"tightened set {kind}_{stage} is empty")
        self.stage = stage
        self.kind = kind


# =============================================================================
# REGULATOR
# =============================================================================

class NoConvergenceError(DrmpcError):
    """Riccati iteration did not converge within its cap."""


class UnstabilizableError(DrmpcError):
    """Resulting closed loop is not Schur stable."""


# =============================================================================
# LEARNING / TIGHTENING
# =============================================================================

class NonFiniteSampleError(DrmpcError, ValueError):
    """Disturbance sample contains NaN or inf."""


class InvalidRiskError(ConfigError):
    """Risk level outside its admissible interval."""


class InfeasibleMomentsError(DrmpcError):
    """No grid distribution matches the requested moments."""


class EmptyMixtureError(DrmpcError):
    """Mixture with no components."""


class TooFewSamplesError(DrmpcError, ValueError):
    """Not enough samples to estimate moments."""


# =============================================================================
# CONTROL LOOP
# =============================================================================

class InfeasibleStateError(DrmpcError):
    """Measured state lies outside the feasible region of the OCP."""

    def __init__(self, x: Optional[np.ndarray] = None, message: Optional[str] = None):
        self.x = None if x is None else np.asarray(x, dtype=float)
        super().__init__(message or f"optimal control problem infeasible at x = {self.x}")


class InitialInfeasibleError(InfeasibleStateError):
    """OCP infeasible at the initial state; the run cannot start."""


class UnsupportedSupportError(DrmpcError):
    """Sampling requested on a support the sampler cannot handle."""
