"""
DRMPC - LQR Regulator
Plant validation, discrete-time LQR synthesis by Riccati value iteration and
the quadratic cost of the perturbation sequence c under the LQR feedback.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np
from scipy import linalg

from src.core.constants import (
    RANK_REL_TOL,
    RICCATI_MAX_ITER,
    RICCATI_RESIDUAL_TOL,
    RICCATI_TOL,
)
from src.core.exceptions import (
    ConfigError,
    DimensionMismatchError,
    NoConvergenceError,
    UnstabilizableError,
)

logger = logging.getLogger(__name__)


def _rank(M: np.ndarray) -> int:
    sv = linalg.svdvals(M)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > RANK_REL_TOL * sv[0]))


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    vals, vecs = linalg.eigh(Q)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass(frozen=True)
class Plant:
    """Linear plant x+ = Ax + Bu + w with LQR weights Q and R."""
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        R = np.atleast_2d(np.array(self.R, dtype=float))
        n, m = B.shape

        if A.shape != (n, n):
            raise DimensionMismatchError(f"A has shape {A.shape}, expected {(n, n)}")
        if Q.shape != (n, n) or R.shape != (m, m):
            raise DimensionMismatchError("Q must be n x n and R m x m")
        for name, M in (("A", A), ("B", B), ("Q", Q), ("R", R)):
            if not np.all(np.isfinite(M)):
                raise ConfigError(f"{name} contains non-finite entries")
        if not np.allclose(Q, Q.T, atol=1e-12) or linalg.eigvalsh(Q)[0] < -1e-10:
            raise ConfigError("Q must be symmetric positive semidefinite")
        if not np.allclose(R, R.T, atol=1e-12) or linalg.eigvalsh(R)[0] <= 0:
            raise ConfigError("R must be symmetric positive definite")

        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        if _rank(ctrb) < n:
            raise ConfigError("(A, B) is not controllable")

        Qh = _psd_sqrt(Q)
        for lam in linalg.eigvals(A):
            if abs(lam) >= 1.0:
                pbh = np.vstack([A - lam * np.eye(n), Qh])
                if _rank(pbh) < n:
                    raise ConfigError(f"(A, Q^1/2) is not detectable: mode {lam} unobservable")

        for M in (A, B, Q, R):
            M.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
        }


@dataclass(frozen=True)
class Regulator:
    """LQR gain, Riccati solution, closed loop and stage weight R + B'PB."""
    K: np.ndarray
    P: np.ndarray
    Phi: np.ndarray
    PsiTilde: np.ndarray
    iterations: int = 0

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(linalg.eigvals(self.Phi))))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K.tolist(),
            "P": self.P.tolist(),
            "Phi": self.Phi.tolist(),
            "PsiTilde": self.PsiTilde.tolist(),
            "spectral_radius": self.spectral_radius,
            "iterations": self.iterations,
        }


def riccati_residual(plant: Plant, P: np.ndarray) -> float:
    A, B, Q, R = plant.A, plant.B, plant.Q, plant.R
    S = R + B.T @ P @ B
    res = A.T @ P @ A - A.T @ P @ B @ linalg.solve(S, B.T @ P @ A, assume_a="pos") + Q - P
    return float(np.max(np.abs(res)))


def lyapunov_residual(plant: Plant, reg: Regulator) -> float:
    res = reg.Phi.T @ reg.P @ reg.Phi + plant.Q + reg.K.T @ plant.R @ reg.K - reg.P
    return float(np.max(np.abs(res)))


def synthesize(plant: Plant) -> Regulator:
    """
    Infinite-horizon LQR by fixed-point Riccati iteration from P0 = Q.

    Raises:
        NoConvergenceError: iteration cap reached or residual checks failed
        UnstabilizableError: closed loop is not Schur stable
    """
    A, B, Q, R = plant.A, plant.B, plant.Q, plant.R
    P = Q.copy()
    for it in range(1, RICCATI_MAX_ITER + 1):
        S = R + B.T @ P @ B
        gain = linalg.solve(S, B.T @ P @ A, assume_a="pos")
        P_next = A.T @ P @ A - A.T @ P @ B @ gain + Q
        P_next = 0.5 * (P_next + P_next.T)
        change = float(np.max(np.abs(P_next - P)))
        P = P_next
        if change <= RICCATI_TOL * max(1.0, float(np.max(np.abs(P)))):
            break
    else:
        raise NoConvergenceError(f"Riccati iteration did not converge in {RICCATI_MAX_ITER} steps")

    S = R + B.T @ P @ B
    K = -linalg.solve(S, B.T @ P @ A, assume_a="pos")
    Phi = A + B @ K
    reg = Regulator(K=K, P=P, Phi=Phi, PsiTilde=0.5 * (S + S.T), iterations=it)

    if reg.spectral_radius >= 1.0:
        raise UnstabilizableError(f"closed-loop spectral radius {reg.spectral_radius:.6f} >= 1")
    scale = max(1.0, float(np.max(np.abs(P))))
    if riccati_residual(plant, P) > RICCATI_RESIDUAL_TOL * scale:
        raise NoConvergenceError("Riccati residual above tolerance")
    if lyapunov_residual(plant, reg) > RICCATI_RESIDUAL_TOL * scale:
        raise NoConvergenceError("Lyapunov identity violated")

    logger.debug(
        f"LQR synthesized in {it} iterations, spectral radius {reg.spectral_radius:.4f}"
    )
    return reg


def finite_horizon_cost(reg: Regulator, c: Sequence[float]) -> float:
    """sum_l c_l' (R + B'PB) c_l over the stacked perturbation sequence."""
    m = reg.PsiTilde.shape[0]
    c = np.asarray(c, dtype=float).reshape(-1, m)
    return float(np.einsum("li,ij,lj->", c, reg.PsiTilde, c))


def lifted_cost_matrix(plant: Plant, reg: Regulator, N: int) -> np.ndarray:
    """
    Cost matrix of the autonomous lifted system with state (z, c_0..c_{N-1}).

    z+ = Phi z + B c_0 and the c-blocks shift up with a zero fed in. The
    infinite-horizon cost is xi' Theta xi with Theta solving
    Theta - Psi' Theta Psi = Qbar.
    """
    n, m = plant.n, plant.m
    Xi = np.zeros((m, m * N))
    Xi[:, :m] = np.eye(m)
    Gamma = np.eye(m * N, k=m)

    Psi = np.block([
        [reg.Phi, plant.B @ Xi],
        [np.zeros((m * N, n)), Gamma],
    ])
    Kx = np.hstack([reg.K, Xi])
    Qbar = np.zeros((n + m * N, n + m * N))
    Qbar[:n, :n] = plant.Q
    Qbar += Kx.T @ plant.R @ Kx
    return linalg.solve_discrete_lyapunov(Psi.T, Qbar)


def rollout_cost(
    plant: Plant,
    reg: Regulator,
    x0: Sequence[float],
    c: Sequence[float],
    horizon: int = 200,
) -> float:
    """Truncated infinite-horizon cost of u_l = K x_l + c_l without disturbance."""
    x = np.asarray(x0, dtype=float).copy()
    c = np.asarray(c, dtype=float).reshape(-1, plant.m)
    total = 0.0
    for l in range(horizon):
        u = reg.K @ x + (c[l] if l < len(c) else 0.0)
        total += float(x @ plant.Q @ x + u @ plant.R @ u)
        x = plant.A @ x + plant.B @ u
    return total
