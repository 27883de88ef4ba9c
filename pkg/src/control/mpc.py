"""
DRMPC - Tube MPC with Safe Ambiguity-Set Updates
Tightened stage and terminal sets, the finite-horizon optimal control
problem over the LQR perturbation sequence c, candidate solutions and the
safe update rule that decides whether freshly learned sets may replace the
ones in force.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from src.core.constants import MRPI_MAX_ITER, SAFE_UPDATE_TOL
from src.core.exceptions import (
    ConfigError,
    DimensionMismatchError,
    EmptyStageSetError,
    EmptyTerminalSetError,
    InfeasibleError,
    InfeasibleStateError,
)
from src.control.regulator import Plant, Regulator, finite_horizon_cost, synthesize
from src.geometry.invariant_sets import mrpi
from src.geometry.polytope import HPolytope, tighten_rows
from src.geometry.tubes import error_tube_offsets, input_tube_offsets
from src.optimization.conic_solver import SolverSettings, solve_qp
from src.tightening.cvar_sdp import check_risk, worst_case_eta

logger = logging.getLogger(__name__)

ETA_BOUND_TOL = 1e-9


class TerminalMode(Enum):
    """How the terminal set follows the learned tightening."""
    ONLINE_MRPI = "online"
    OFFLINE_FALLBACK = "offline"


# =============================================================================
# CONFIGURATION AND SETS
# =============================================================================

@dataclass(frozen=True)
class MpcConfig:
    """Plant, LQR regulator, horizon, constraint sets and risk levels."""
    plant: Plant
    regulator: Regulator
    N: int
    X: HPolytope
    eps: np.ndarray
    U: HPolytope
    W: HPolytope
    terminal_mode: Optional[TerminalMode] = None
    safe_tol: float = SAFE_UPDATE_TOL
    mrpi_max_iter: int = MRPI_MAX_ITER
    beta_nonneg: bool = False
    degenerate_support: bool = False

    def __post_init__(self):
        n, m = self.plant.n, self.plant.m
        if self.N < 1:
            raise ConfigError("prediction horizon N must be at least 1")
        if self.X.dim != n or self.W.dim != n or self.U.dim != m:
            raise DimensionMismatchError("X and W must live in state space, U in input space")
        if np.any(self.X.d <= 0) or np.any(self.U.d <= 0):
            raise ConfigError("X and U must contain the origin in their interior")
        self.W.validate_support(self.degenerate_support)

        eps = np.atleast_1d(np.asarray(self.eps, dtype=float))
        if eps.size == 1:
            eps = np.full(self.X.n_rows, eps[0])
        if eps.size != self.X.n_rows:
            raise DimensionMismatchError(f"{eps.size} risk levels for {self.X.n_rows} state rows")
        for e in eps:
            check_risk(e)
        eps.setflags(write=False)
        object.__setattr__(self, "eps", eps)

        mode = self.terminal_mode
        if mode is None:
            mode = TerminalMode.ONLINE_MRPI if n <= 2 else TerminalMode.OFFLINE_FALLBACK
        object.__setattr__(self, "terminal_mode", TerminalMode(mode))

    @classmethod
    def build(
        cls,
        plant: Plant,
        N: int,
        X: HPolytope,
        U: HPolytope,
        W: HPolytope,
        eps,
        **kwargs,
    ) -> "MpcConfig":
        """Configuration with the LQR regulator synthesized from the plant."""
        return cls(plant=plant, regulator=synthesize(plant), N=N, X=X, eps=eps, U=U, W=W, **kwargs)

    @property
    def H(self) -> np.ndarray:
        return self.X.C

    @property
    def h(self) -> np.ndarray:
        return self.X.d

    @property
    def G(self) -> np.ndarray:
        return self.U.C

    @property
    def g(self) -> np.ndarray:
        return self.U.d

    def eta0(self) -> np.ndarray:
        """Worst-case back-off of every state row."""
        return worst_case_eta(self.W, self.H)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "plant": self.plant.to_dict(),
            "regulator": self.regulator.to_dict(),
            "N": self.N,
            "X": self.X.to_dict(),
            "U": self.U.to_dict(),
            "W": self.W.to_dict(),
            "eps": self.eps.tolist(),
            "terminal_mode": self.terminal_mode.value,
        }


@dataclass
class TightenedSets:
    """
    Stage sets Z_1..Z_N (Z[l-1] is Z_l), input sets V_0..V_{N-1}, terminal
    set Zf, the back-off eta they were built from and the time index at
    which they were certified.
    """
    eta: np.ndarray
    zeta: np.ndarray
    delta: np.ndarray
    Z: List[HPolytope]
    V: List[HPolytope]
    Zf: HPolytope
    epoch: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eta": self.eta.tolist(),
            "zeta": self.zeta.tolist(),
            "delta": self.delta.tolist(),
            "Z": [Z.to_dict() for Z in self.Z],
            "V": [V.to_dict() for V in self.V],
            "Zf": self.Zf.to_dict(),
            "epoch": self.epoch,
        }


def _terminal_set(cfg: MpcConfig, Z_N: HPolytope, delta_N: np.ndarray) -> HPolytope:
    Phi, K = cfg.regulator.Phi, cfg.regulator.K
    base = Z_N.intersect(HPolytope(cfg.G @ K, cfg.g - delta_N))
    Dmap = np.linalg.matrix_power(Phi, cfg.N)
    return mrpi(Phi, Dmap, cfg.W, base, max_iter=cfg.mrpi_max_iter)


def build_sets(
    cfg: MpcConfig,
    eta: Sequence[float],
    epoch: int = 0,
    terminal: Optional[HPolytope] = None,
) -> TightenedSets:
    """
    Tightened sets for back-off eta.

    Z_{l} = {H z <= h - eta - zeta_l}, V_l = {G v <= g - delta_l}. The
    terminal set is the MRPI subset of Z_N intersected with
    {G K z <= g - delta_N}, unless `terminal` supplies a precomputed one.
    Offline-fallback mode requires `terminal` (see worst_case_sets).

    Raises:
        ConfigError: offline-fallback mode without a terminal set
        EmptyStageSetError: some Z_l or V_l is empty
        EmptyTerminalSetError: the terminal set is empty
    """
    eta = np.asarray(eta, dtype=float).ravel()
    if eta.size != cfg.X.n_rows:
        raise DimensionMismatchError(f"{eta.size} back-offs for {cfg.X.n_rows} state rows")
    if np.any(eta < 0) or np.any(eta > cfg.eta0() + ETA_BOUND_TOL):
        raise ConfigError("back-off must satisfy 0 <= eta <= eta0")
    if terminal is None and cfg.terminal_mode == TerminalMode.OFFLINE_FALLBACK:
        raise ConfigError("offline-fallback mode needs the precomputed worst-case terminal set")

    Phi, K = cfg.regulator.Phi, cfg.regulator.K
    Ztilde = tighten_rows(cfg.X, eta)
    zeta = error_tube_offsets(Phi, cfg.W, cfg.H, cfg.N)
    delta = input_tube_offsets(Phi, K, cfg.W, cfg.G, cfg.N + 1)

    Z = [tighten_rows(Ztilde, zeta[l]) for l in range(1, cfg.N + 1)]
    V = [tighten_rows(cfg.U, delta[l]) for l in range(cfg.N)]
    for l, Zl in enumerate(Z, start=1):
        if Zl.is_empty():
            raise EmptyStageSetError(l, "Z")
    for l, Vl in enumerate(V):
        if Vl.is_empty():
            raise EmptyStageSetError(l, "V")

    Zf = terminal if terminal is not None else _terminal_set(cfg, Z[-1], delta[cfg.N])
    if Zf.is_empty():
        raise EmptyTerminalSetError("terminal set is empty")

    return TightenedSets(eta=eta.copy(), zeta=zeta, delta=delta, Z=Z, V=V, Zf=Zf, epoch=epoch)


def worst_case_sets(cfg: MpcConfig) -> TightenedSets:
    """
    Sets built with the worst-case back-off eta0. Their terminal set is
    contained in every terminal set built with a smaller back-off and can
    stand in for it.
    """
    eta0 = cfg.eta0()
    Phi, K = cfg.regulator.Phi, cfg.regulator.K
    zeta = error_tube_offsets(Phi, cfg.W, cfg.H, cfg.N)
    delta = input_tube_offsets(Phi, K, cfg.W, cfg.G, cfg.N + 1)
    Z_N = tighten_rows(tighten_rows(cfg.X, eta0), zeta[cfg.N])
    Zf = _terminal_set(cfg, Z_N, delta[cfg.N])
    logger.info(f"worst-case terminal set computed with {Zf.n_rows} rows")
    return build_sets(cfg, eta0, terminal=Zf)


# =============================================================================
# OPTIMAL CONTROL PROBLEM
# =============================================================================

@dataclass
class MpcSolution:
    """Optimal perturbation sequence with its nominal trajectory and cost."""
    c: np.ndarray
    z: np.ndarray
    v: np.ndarray
    J: float
    status: str = "Optimal"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c": self.c.tolist(),
            "z": self.z.tolist(),
            "v": self.v.tolist(),
            "J": self.J,
            "status": self.status,
        }


@dataclass
class Candidate:
    """Shifted optimizer padded with zero, rolled out from the new state."""
    c_tilde: np.ndarray
    z_tilde: np.ndarray
    v_tilde: np.ndarray = field(default=None)


def _prediction_matrices(cfg: MpcConfig) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """z_l = Sx[l] x + Sc[l] c for l = 0..N."""
    n, m, N = cfg.plant.n, cfg.plant.m, cfg.N
    Phi, B = cfg.regulator.Phi, cfg.plant.B
    Sx = [np.eye(n)]
    Sc = [np.zeros((n, m * N))]
    for l in range(N):
        Sx.append(Phi @ Sx[-1])
        nxt = Phi @ Sc[-1]
        nxt[:, l * m:(l + 1) * m] += B
        Sc.append(nxt)
    return Sx, Sc


def nominal_rollout(cfg: MpcConfig, x: Sequence[float], c: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Nominal states z_0..z_N and inputs v_l = K z_l + c_l from z_0 = x."""
    m = cfg.plant.m
    c = np.asarray(c, dtype=float).reshape(cfg.N, m)
    z = np.zeros((cfg.N + 1, cfg.plant.n))
    v = np.zeros((cfg.N, m))
    z[0] = np.asarray(x, dtype=float)
    for l in range(cfg.N):
        v[l] = cfg.regulator.K @ z[l] + c[l]
        z[l + 1] = cfg.plant.A @ z[l] + cfg.plant.B @ v[l]
    return z, v


def _ocp_constraints(cfg: MpcConfig, sets: TightenedSets, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked (C, d) with C c <= d over all stage, input and terminal rows."""
    m, N = cfg.plant.m, cfg.N
    K = cfg.regulator.K
    Sx, Sc = _prediction_matrices(cfg)
    C_rows, d_rows = [], []
    for l in range(1, N + 1):
        Zl = sets.Z[l - 1]
        C_rows.append(Zl.C @ Sc[l])
        d_rows.append(Zl.d - Zl.C @ Sx[l] @ x)
    for l in range(N):
        Vl = sets.V[l]
        select = np.zeros((m, m * N))
        select[:, l * m:(l + 1) * m] = np.eye(m)
        C_rows.append(Vl.C @ (K @ Sc[l] + select))
        d_rows.append(Vl.d - Vl.C @ K @ Sx[l] @ x)
    C_rows.append(sets.Zf.C @ Sc[N])
    d_rows.append(sets.Zf.d - sets.Zf.C @ Sx[N] @ x)
    return np.vstack(C_rows), np.concatenate(d_rows)


def solve_ocp(
    cfg: MpcConfig,
    sets: TightenedSets,
    x: Sequence[float],
    opts: Optional[SolverSettings] = None,
) -> MpcSolution:
    """
    Minimize sum_l c_l' (R + B'PB) c_l subject to the tightened stage, input
    and terminal constraints, with the nominal states eliminated.

    Raises:
        InfeasibleStateError: x lies outside the feasible region
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != cfg.plant.n:
        raise DimensionMismatchError(f"state has {x.size} entries, expected {cfg.plant.n}")
    C, d = _ocp_constraints(cfg, sets, x)
    P = 2.0 * linalg.block_diag(*([cfg.regulator.PsiTilde] * cfg.N))
    try:
        _, c = solve_qp(P, np.zeros(P.shape[0]), C, d, opts)
    except InfeasibleError as e:
        raise InfeasibleStateError(x) from e
    z, v = nominal_rollout(cfg, x, c)
    return MpcSolution(c=c, z=z, v=v, J=finite_horizon_cost(cfg.regulator, c))


def is_feasible(
    cfg: MpcConfig,
    sets: TightenedSets,
    x: Sequence[float],
    c: Sequence[float],
    tol: float = SAFE_UPDATE_TOL,
) -> bool:
    """Whether the perturbation sequence c is admissible from x under `sets`."""
    C, d = _ocp_constraints(cfg, sets, np.asarray(x, dtype=float).ravel())
    return bool(np.all(C @ np.asarray(c, dtype=float) <= d + tol))


def control_input(sol: MpcSolution) -> np.ndarray:
    """First nominal input v_0 = K x + c_0."""
    return sol.v[0].copy()


# =============================================================================
# CANDIDATE AND SAFE UPDATE
# =============================================================================

def candidate(prev: MpcSolution, x_new: Sequence[float], cfg: MpcConfig) -> Candidate:
    """c_tilde = (c_1, ..., c_{N-1}, 0) rolled out from the measured state."""
    m = cfg.plant.m
    c_tilde = np.concatenate([prev.c[m:], np.zeros(m)])
    z_tilde, v_tilde = nominal_rollout(cfg, x_new, c_tilde)
    return Candidate(c_tilde=c_tilde, z_tilde=z_tilde, v_tilde=v_tilde)


def candidate_solution(cand: Candidate, cfg: MpcConfig) -> MpcSolution:
    """The candidate as an MpcSolution."""
    return MpcSolution(
        c=cand.c_tilde.copy(),
        z=cand.z_tilde.copy(),
        v=cand.v_tilde.copy(),
        J=finite_horizon_cost(cfg.regulator, cand.c_tilde),
        status="Candidate",
    )


def safe_update(
    cand: Candidate,
    fresh: TightenedSets,
    held: TightenedSets,
    tol: float = SAFE_UPDATE_TOL,
) -> Tuple[int, TightenedSets]:
    """
    Accept the freshly built sets only if the candidate stays feasible under them.

    flag = 1 iff z_tilde_l is in fresh Z_l for l = 1..N-1 and z_tilde_N is in
    fresh Zf; the active sets are then `fresh`, otherwise `held` unchanged.
    """
    N = len(fresh.Z)
    ok = all(fresh.Z[l - 1].contains(cand.z_tilde[l], tol) for l in range(1, N))
    ok = ok and fresh.Zf.contains(cand.z_tilde[N], tol)
    if ok:
        return 1, fresh
    logger.info(
        f"safe update rejected sets of epoch {fresh.epoch}; keeping epoch {held.epoch}"
    )
    return 0, held


def shift_residual(prev: MpcSolution, cand: Candidate, w: Sequence[float], cfg: MpcConfig) -> float:
    """
    Largest deviation from z_tilde_l = z*_{l+1} + Phi^l w (l = 0..N-1) and
    v_tilde_l = v*_{l+1} + K Phi^l w (l = 0..N-2).
    """
    w = np.asarray(w, dtype=float).ravel()
    Phi, K = cfg.regulator.Phi, cfg.regulator.K
    worst = 0.0
    e = w.copy()
    for l in range(cfg.N):
        worst = max(worst, float(np.max(np.abs(cand.z_tilde[l] - prev.z[l + 1] - e))))
        if l < cfg.N - 1:
            worst = max(worst, float(np.max(np.abs(cand.v_tilde[l] - prev.v[l + 1] - K @ e))))
        e = Phi @ e
    return worst
