"""
DRMPC - Distributionally Robust CVaR Tightening
Per-row semidefinite programs giving the back-off eta_i such that the
nominal constraint H_i z <= h_i - eta_i implies the worst-case CVaR
constraint over the ambiguity set.

Variables of one row program, in order:
    eta, beta, then per component j: t_j, omega_j (n), svec(Omega_j),
    phi1_j (n_f), phi2_j (n_f)
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.constants import DOMINANCE_TOL, SOLVER_REDUCED_TOL
from src.core.exceptions import DimensionMismatchError, InvalidRiskError, SolverFailedError
from src.geometry.polytope import HPolytope, row_supports
from src.optimization.cones import NonNegCone, PsdCone, smat, svec, svec_dim
from src.optimization.conic_solver import ConeProgram, ConeStatus, SolverSettings, solve
from src.tightening.ambiguity import AmbiguitySet

logger = logging.getLogger(__name__)

ETA_ZERO_TOL = 1e-12


@dataclass
class TighteningResult:
    """Back-off per state constraint row with the solver outcome behind it."""
    eta: np.ndarray
    status: List[str] = field(default_factory=list)
    dual_objective: np.ndarray = None
    fallback_rows: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eta": self.eta.tolist(),
            "status": list(self.status),
            "dual_objective": [float(v) for v in self.dual_objective],
            "fallback_rows": list(self.fallback_rows),
        }


def check_risk(eps: float) -> float:
    eps = float(eps)
    if not (0.0 < eps <= 1.0):
        raise InvalidRiskError(f"risk level {eps} outside (0, 1]")
    return eps


class _Layout:
    """Column offsets of the row program."""

    def __init__(self, n: int, n_f: int, m: int):
        self.n = n
        self.n_f = n_f
        self.m = m
        self.sv = svec_dim(n)
        self.block = 1 + n + self.sv + 2 * n_f
        self.n_vars = 2 + m * self.block

    eta = 0
    beta = 1

    def t(self, j: int) -> int:
        return 2 + j * self.block

    def omega(self, j: int) -> slice:
        start = self.t(j) + 1
        return slice(start, start + self.n)

    def Omega(self, j: int) -> slice:
        start = self.omega(j).stop
        return slice(start, start + self.sv)

    def phi1(self, j: int) -> slice:
        start = self.Omega(j).stop
        return slice(start, start + self.n_f)

    def phi2(self, j: int) -> slice:
        start = self.phi1(j).stop
        return slice(start, start + self.n_f)


def _lmi(
    lay: _Layout,
    j: int,
    E: np.ndarray,
    f: np.ndarray,
    phi: slice,
    corner_vars: Sequence[int],
    shift: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rows of the (n+1)-order LMI

        [ Omega_j                       1/2 (omega_j + shift + E'phi) ]
        [ 1/2 (omega_j + shift + E'phi)'  sum(corner_vars) - f'phi   ]  >= 0

    in the form s = b - A x.
    """
    n = lay.n
    order = n + 1
    rows = svec_dim(order)
    A = np.zeros((rows, lay.n_vars))

    def put(col: int, M: np.ndarray) -> None:
        A[:, col] -= svec(M)

    basis = np.eye(lay.sv)
    for t, col in enumerate(range(lay.Omega(j).start, lay.Omega(j).stop)):
        M = np.zeros((order, order))
        M[:n, :n] = smat(basis[t])
        put(col, M)
    for i, col in enumerate(range(lay.omega(j).start, lay.omega(j).stop)):
        M = np.zeros((order, order))
        M[i, n] = M[n, i] = 0.5
        put(col, M)
    for r, col in enumerate(range(phi.start, phi.stop)):
        M = np.zeros((order, order))
        M[:n, n] = M[n, :n] = 0.5 * E[r]
        M[n, n] = -f[r]
        put(col, M)
    for col in corner_vars:
        M = np.zeros((order, order))
        M[n, n] = 1.0
        put(col, M)

    M0 = np.zeros((order, order))
    M0[:n, n] = M0[n, :n] = 0.5 * shift
    return A, svec(M0)


def build_sdp(
    amb: AmbiguitySet,
    Hrow: Sequence[float],
    eps: float,
    beta_nonneg: bool = False,
) -> ConeProgram:
    """
    Conic program whose optimal value is the back-off for one constraint row.

    Blocks, in order: the scalar risk inequality, then per component the two
    (n+1)-order LMIs, Omega_j >= 0, phi1_j >= 0 and phi2_j >= 0, and finally
    beta >= 0 when `beta_nonneg` is set.

    Raises:
        InvalidRiskError: eps outside (0, 1]
    """
    eps = check_risk(eps)
    Hrow = np.asarray(Hrow, dtype=float).ravel()
    if Hrow.size != amb.dim:
        raise DimensionMismatchError(f"constraint row has {Hrow.size} entries, expected {amb.dim}")

    E, f = amb.W.C, amb.W.d
    mix = amb.mix
    lay = _Layout(amb.dim, f.size, mix.m)
    second = mix.second_moments()

    A_blocks: List[np.ndarray] = []
    b_blocks: List[np.ndarray] = []
    cones = []

    risk = np.zeros(lay.n_vars)
    risk[lay.beta] = eps
    for j in range(mix.m):
        risk[lay.t(j)] = mix.gamma[j]
        risk[lay.omega(j)] = mix.gamma[j] * mix.mu[j]
        risk[lay.Omega(j)] = mix.gamma[j] * svec(second[j])
    A_blocks.append(risk[None, :])
    b_blocks.append(np.zeros(1))
    cones.append(NonNegCone(1))

    for j in range(mix.m):
        A1, b1 = _lmi(lay, j, E, f, lay.phi1(j), [lay.t(j)], np.zeros(lay.n))
        A2, b2 = _lmi(lay, j, E, f, lay.phi2(j), [lay.t(j), lay.beta, lay.eta], -Hrow)
        A_blocks += [A1, A2]
        b_blocks += [b1, b2]
        cones += [PsdCone(lay.n + 1), PsdCone(lay.n + 1)]

        for sl, cone in (
            (lay.Omega(j), PsdCone(lay.n)),
            (lay.phi1(j), NonNegCone(lay.n_f)),
            (lay.phi2(j), NonNegCone(lay.n_f)),
        ):
            A = np.zeros((sl.stop - sl.start, lay.n_vars))
            A[:, sl] = -np.eye(sl.stop - sl.start)
            A_blocks.append(A)
            b_blocks.append(np.zeros(sl.stop - sl.start))
            cones.append(cone)

    if beta_nonneg:
        A = np.zeros((1, lay.n_vars))
        A[0, lay.beta] = -1.0
        A_blocks.append(A)
        b_blocks.append(np.zeros(1))
        cones.append(NonNegCone(1))

    q = np.zeros(lay.n_vars)
    q[lay.eta] = 1.0
    return ConeProgram(
        P=None,
        q=q,
        A=np.vstack(A_blocks),
        b=np.concatenate(b_blocks),
        cones=tuple(cones),
    )


def worst_case_eta(W: HPolytope, H: np.ndarray) -> np.ndarray:
    """eta0_i = max over W of H_i w; valid back-off for any distribution on W."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[1] != W.dim:
        raise DimensionMismatchError(f"H has {H.shape[1]} columns, support dimension {W.dim}")
    return row_supports(W, H)


def _broadcast_risk(eps, rows: int) -> np.ndarray:
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if eps.size == 1:
        eps = np.full(rows, eps[0])
    if eps.size != rows:
        raise DimensionMismatchError(f"{eps.size} risk levels for {rows} constraint rows")
    for e in eps:
        check_risk(e)
    return eps


def _solve_rows(
    amb: AmbiguitySet,
    H: np.ndarray,
    eps,
    opts: Optional[SolverSettings],
    beta_nonneg: bool,
    fallback: bool,
) -> TighteningResult:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    eps = _broadcast_risk(eps, H.shape[0])
    eta0 = worst_case_eta(amb.W, H)

    eta = np.zeros(H.shape[0])
    duals = np.full(H.shape[0], np.nan)
    statuses: List[str] = []
    fallback_rows: List[int] = []

    for i, row in enumerate(H):
        if eta0[i] <= ETA_ZERO_TOL:
            statuses.append("Skipped")
            continue

        sol = solve(build_sdp(amb, row, eps[i], beta_nonneg), opts)
        statuses.append(sol.status.value)
        if sol.status != ConeStatus.OPTIMAL:
            if sol.is_acceptable(SOLVER_REDUCED_TOL):
                logger.warning(
                    f"tightening row {i}: accepting {sol.status.value} at reduced tolerance"
                )
            elif fallback:
                logger.warning(
                    f"tightening row {i}: solver ended with {sol.status.value}, "
                    f"falling back to worst-case back-off {eta0[i]:.6g}"
                )
                eta[i] = eta0[i]
                fallback_rows.append(i)
                continue
            else:
                raise SolverFailedError(i, sol.status.value)

        duals[i] = sol.dual_objective
        raw = float(sol.x[0])
        if raw > eta0[i] + DOMINANCE_TOL:
            logger.warning(
                f"tightening row {i}: optimum {raw:.6g} exceeds worst-case back-off "
                f"{eta0[i]:.6g}, clamping"
            )
        eta[i] = min(max(raw, 0.0), eta0[i])

    logger.debug(f"tightening: eta = {np.array2string(eta, precision=6)}")
    return TighteningResult(
        eta=eta, status=statuses, dual_objective=duals, fallback_rows=fallback_rows
    )


def solve_eta(
    amb: AmbiguitySet,
    H: np.ndarray,
    eps,
    opts: Optional[SolverSettings] = None,
    beta_nonneg: bool = False,
) -> TighteningResult:
    """
    Back-off of every state constraint row.

    Each row is an independent SDP. The optimum is clamped into [0, eta0_i];
    a negative optimum means the row needs no tightening.

    Raises:
        SolverFailedError: a row SDP did not reach an acceptable solution
        InvalidRiskError: a risk level outside (0, 1]
    """
    return _solve_rows(amb, H, eps, opts, beta_nonneg, fallback=False)


def solve_eta_with_fallback(
    amb: AmbiguitySet,
    H: np.ndarray,
    eps,
    opts: Optional[SolverSettings] = None,
    beta_nonneg: bool = False,
) -> TighteningResult:
    """Like solve_eta, but a failed row takes its worst-case value eta0_i."""
    return _solve_rows(amb, H, eps, opts, beta_nonneg, fallback=True)
