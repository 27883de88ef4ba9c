"""
DRMPC - Conic Interior-Point Solver
Dense primal-dual interior-point method for small conic programs

    minimize    1/2 x'Px + q'x
    subject to  Ax + s = b,  s in K

where K is a product of zero, nonnegative and PSD cones. The iteration runs
on the homogeneous self-dual embedding so infeasibility and unboundedness
come out as certificates instead of divergence. Directions use
Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from src.core.config import settings
from src.core.constants import (
    PSD_CHOLESKY_TOL,
    PSD_MEMBERSHIP_TOL,
    SOLVER_MAX_ITER,
    SOLVER_MAX_REG,
    SOLVER_REDUCED_TOL,
    SOLVER_STATIC_REG,
    SOLVER_STEP_FRACTION,
    SOLVER_TOL,
)
from src.core.exceptions import (
    ConfigError,
    DimensionMismatchError,
    InfeasibleError,
    MaxIterError,
    NumericalError,
    UnboundedError,
)
from src.optimization.cones import (
    Cone,
    NonNegCone,
    Scaling,
    ZeroCone,
    cone_from_dict,
    cone_slices,
    cone_violation,
)

logger = logging.getLogger(__name__)


class ConeStatus(Enum):
    """Outcome of a conic solve."""
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL = "Numerical"


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and limits of the interior-point method."""
    tol: float = SOLVER_TOL
    max_iter: int = SOLVER_MAX_ITER
    static_reg: float = SOLVER_STATIC_REG
    max_reg: float = SOLVER_MAX_REG
    step_fraction: float = SOLVER_STEP_FRACTION
    refine_steps: int = 3

    @classmethod
    def from_settings(cls) -> "SolverSettings":
        """Defaults taken from the process-level settings."""
        return cls(
            tol=settings.solver_tol,
            max_iter=settings.solver_max_iter,
            static_reg=settings.solver_reg,
        )


@dataclass(frozen=True)
class ConeProgram:
    """
    Standard-form conic program with quadratic objective.

    Arrays are copied, validated and frozen at construction, so instances
    can be shared between threads.
    """
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: Tuple[Cone, ...]

    def __post_init__(self):
        q = np.array(self.q, dtype=float).ravel()
        n = q.size
        P = np.zeros((n, n)) if self.P is None else np.array(self.P, dtype=float)
        A = np.array(self.A, dtype=float).reshape(-1, n)
        b = np.array(self.b, dtype=float).ravel()
        cones = tuple(self.cones)

        if P.shape != (n, n):
            raise DimensionMismatchError(f"P has shape {P.shape}, expected {(n, n)}")
        if b.size != A.shape[0]:
            raise DimensionMismatchError(f"b has {b.size} entries but A has {A.shape[0]} rows")
        if sum(c.dim for c in cones) != A.shape[0]:
            raise DimensionMismatchError("cone dimensions do not add up to the row count of A")
        for name, arr in (("P", P), ("q", q), ("A", A), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} contains non-finite entries")
        if not np.allclose(P, P.T, atol=1e-12, rtol=0.0):
            raise ConfigError("P is not symmetric")
        if n and np.any(P):
            try:
                linalg.cholesky(P + PSD_CHOLESKY_TOL * np.eye(n), lower=True)
            except linalg.LinAlgError as e:
                raise ConfigError("P is not positive semidefinite") from e

        for arr in (P, q, A, b):
            arr.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "cones", cones)

    @property
    def n_vars(self) -> int:
        return self.q.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def to_dict(self) -> Dict[str, Any]:
        return {
            "P": self.P.tolist(),
            "q": self.q.tolist(),
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "cones": [c.to_dict() for c in self.cones],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ConeProgram":
        n = len(data["q"])
        A = np.array(data["A"], dtype=float).reshape(-1, n)
        return cls(
            P=np.array(data["P"], dtype=float).reshape(n, n),
            q=np.array(data["q"], dtype=float),
            A=A,
            b=np.array(data["b"], dtype=float),
            cones=tuple(cone_from_dict(c) for c in data["cones"]),
        )


@dataclass
class ConeSolution:
    """Solver output; for infeasibility statuses x or y hold the certificate."""
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: ConeStatus
    primal_residual: float
    dual_residual: float
    duality_gap: float
    objective: float = math.nan
    dual_objective: float = math.nan
    iterations: int = 0

    def is_acceptable(self, tol: float = SOLVER_REDUCED_TOL) -> bool:
        """Optimal, or stopped early with every residual within `tol`."""
        if self.status == ConeStatus.OPTIMAL:
            return True
        if self.status not in (ConeStatus.MAX_ITER, ConeStatus.NUMERICAL):
            return False
        if not np.all(np.isfinite(self.x)):
            return False
        return max(self.primal_residual, self.dual_residual, self.duality_gap) <= tol

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "s": self.s.tolist(),
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "duality_gap": self.duality_gap,
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "iterations": self.iterations,
        }


@dataclass
class _Direction:
    dx: np.ndarray
    dz: np.ndarray
    ds: np.ndarray
    dtau: float
    dkappa: float


class _HomogeneousSolver:
    """Single-use solver state for one ConeProgram."""

    def __init__(self, prog: ConeProgram, opts: SolverSettings):
        self.prog = prog
        self.opts = opts
        self.n = prog.n_vars
        self.m = prog.n_rows
        self.blocks = [(c, sl) for c, sl in cone_slices(prog.cones) if not isinstance(c, ZeroCone)]
        self.zero_rows = np.zeros(self.m, dtype=bool)
        for cone, sl in cone_slices(prog.cones):
            if isinstance(cone, ZeroCone):
                self.zero_rows[sl] = True
        self.degree = sum(c.degree for c, _ in self.blocks)
        self.norm_b = _inf_norm(prog.b)
        self.norm_q = _inf_norm(prog.q)
        self.reg = opts.static_reg

    # ------------------------------------------------------------------
    # linear algebra
    # ------------------------------------------------------------------

    def _assemble(self, H: np.ndarray, reg: float) -> Tuple[np.ndarray, np.ndarray]:
        """Regularized KKT matrix and its unregularized reference."""
        n, m = self.n, self.m
        K = np.zeros((n + m, n + m))
        K[:n, :n] = self.prog.P
        K[:n, n:] = self.prog.A.T
        K[n:, :n] = self.prog.A
        K[n:, n:] = -H
        K_reg = K.copy()
        idx = np.arange(n + m)
        K_reg[idx[:n], idx[:n]] += reg
        K_reg[idx[n:], idx[n:]] -= reg
        return K_reg, K

    def _factor(self, H: np.ndarray) -> Tuple[Any, np.ndarray]:
        """LU-factor the KKT system, raising regularization on failure."""
        reg = self.reg
        while reg <= self.opts.max_reg:
            K_reg, K = self._assemble(H, reg)
            if np.all(np.isfinite(K_reg)):
                lu, piv = linalg.lu_factor(K_reg, check_finite=False)
                pivots = np.abs(np.diag(lu))
                if pivots.size == 0 or pivots.min() > 1e-14 * max(1.0, pivots.max()):
                    return (lu, piv), K
            reg *= 100.0
            logger.debug(f"KKT factorization failed, regularization raised to {reg:.1e}")
        raise NumericalError("KKT factorization failed beyond recoverable regularization")

    def _solve(self, factor, K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        sol = linalg.lu_solve(factor, rhs, check_finite=False)
        scale = 1.0 + _inf_norm(rhs)
        for _ in range(self.opts.refine_steps):
            resid = rhs - K @ sol
            if _inf_norm(resid) <= 1e-14 * scale:
                break
            sol = sol + linalg.lu_solve(factor, resid, check_finite=False)
        return sol

    # ------------------------------------------------------------------
    # starting point
    # ------------------------------------------------------------------

    def _initial_point(self):
        n, m = self.n, self.m
        H = np.diag(np.where(self.zero_rows, 0.0, 1.0))
        factor, K = self._factor(H)

        primal = self._solve(factor, K, np.concatenate([np.zeros(n), self.prog.b]))
        x = primal[:n]
        s = np.where(self.zero_rows, 0.0, -primal[n:])

        dual = self._solve(factor, K, np.concatenate([-self.prog.q, np.zeros(m)]))
        z = dual[n:].copy()

        s = self._shift_into_cone(s)
        z = self._shift_into_cone(z)
        return x, s, z

    def _shift_into_cone(self, v: np.ndarray) -> np.ndarray:
        v = v.copy()
        if not self.blocks:
            return v
        lo = min(cone.min_eig(v[sl]) for cone, sl in self.blocks)
        if lo < 1.0:
            for cone, sl in self.blocks:
                v[sl] += (1.0 - lo) * cone.identity()
        return v

    # ------------------------------------------------------------------
    # cone-blockwise helpers
    # ------------------------------------------------------------------

    def _scalings(self, s: np.ndarray, z: np.ndarray) -> List[Scaling]:
        return [cone.nt_scaling(s[sl], z[sl]) for cone, sl in self.blocks]

    def _WtW(self, scalings: Sequence[Scaling]) -> np.ndarray:
        H = np.zeros((self.m, self.m))
        for (_, sl), sc in zip(self.blocks, scalings):
            H[sl, sl] = sc.W.T @ sc.W
        return H

    def _max_step(self, s, z, tau, kappa, d: _Direction) -> float:
        alpha = math.inf
        for cone, sl in self.blocks:
            alpha = min(alpha, cone.max_step(s[sl], d.ds[sl]), cone.max_step(z[sl], d.dz[sl]))
        if d.dtau < 0:
            alpha = min(alpha, -tau / d.dtau)
        if d.dkappa < 0:
            alpha = min(alpha, -kappa / d.dkappa)
        return alpha

    def _direction(self, x, z, tau, kappa, factor, K, sol2, scalings,
                   d_x, d_z, d_tau, d_s, d_kappa) -> _Direction:
        """
        Newton direction of the embedding for given right-hand sides.

        `d_s` is the target of lam o (W^{-T} ds + W dz) per cone block.
        """
        P, q, b = self.prog.P, self.prog.q, self.prog.b
        n = self.n

        corr = np.zeros(self.m)
        for (cone, sl), sc in zip(self.blocks, scalings):
            corr[sl] = sc.W.T @ cone.jordan_div(sc, d_s[sl])

        sol1 = self._solve(factor, K, np.concatenate([d_x, d_z - corr]))
        x1, z1 = sol1[:n], sol1[n:]
        x2, z2 = sol2[:n], sol2[n:]

        Px = P @ x
        c = 2.0 * Px / tau + q
        h = (x @ Px) / tau ** 2 + kappa / tau
        denom = c @ x2 + b @ z2 - h
        dtau = (d_tau - d_kappa / tau - c @ x1 - b @ z1) / denom

        dx = x1 + dtau * x2
        dz = z1 + dtau * z2
        ds = np.zeros(self.m)
        for (cone, sl), sc in zip(self.blocks, scalings):
            ds[sl] = corr[sl] - sc.W.T @ (sc.W @ dz[sl])
        dkappa = (d_kappa - kappa * dtau) / tau
        return _Direction(dx=dx, dz=dz, ds=ds, dtau=float(dtau), dkappa=float(dkappa))

    # ------------------------------------------------------------------
    # main loop
    # ------------------------------------------------------------------

    def run(self) -> ConeSolution:
        P, q, A, b = self.prog.P, self.prog.q, self.prog.A, self.prog.b
        opts = self.opts

        try:
            x, s, z = self._initial_point()
        except NumericalError:
            return self._numerical(np.zeros(self.n), np.zeros(self.m), np.zeros(self.m), 1.0, 0)
        tau, kappa = 1.0, 1.0

        for it in range(opts.max_iter + 1):
            Px = P @ x
            r_x = Px + A.T @ z + q * tau
            r_z = A @ x + s - b * tau
            r_tau = (x @ Px) / tau + q @ x + b @ z + kappa

            done = self._check_termination(x, s, z, tau, it)
            if done is not None:
                return done
            if it == opts.max_iter:
                break

            cone_gap = sum(s[sl] @ z[sl] for _, sl in self.blocks)
            mu = (cone_gap + tau * kappa) / (self.degree + 1)

            try:
                scalings = self._scalings(s, z)
                factor, K = self._factor(self._WtW(scalings))
                sol2 = self._solve(factor, K, np.concatenate([-q, b]))

                lam_sq = np.zeros(self.m)
                for (cone, sl), sc in zip(self.blocks, scalings):
                    lam_sq[sl] = cone.jordan(sc.lam, sc.lam)

                # predictor
                aff = self._direction(
                    x, z, tau, kappa, factor, K, sol2, scalings,
                    -r_x, -r_z, -r_tau, -lam_sq, -tau * kappa,
                )
                alpha_aff = min(1.0, self._max_step(s, z, tau, kappa, aff))
                sigma = (1.0 - alpha_aff) ** 3

                # corrector
                d_s = -lam_sq
                for (cone, sl), sc in zip(self.blocks, scalings):
                    d_s[sl] -= cone.jordan(sc.W_inv_T @ aff.ds[sl], sc.W @ aff.dz[sl])
                    d_s[sl] += sigma * mu * cone.identity()
                d_kappa = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu
                step = 1.0 - sigma
                comb = self._direction(
                    x, z, tau, kappa, factor, K, sol2, scalings,
                    -step * r_x, -step * r_z, -step * r_tau, d_s, d_kappa,
                )
            except (NumericalError, linalg.LinAlgError, FloatingPointError):
                logger.debug(f"numerical breakdown at iteration {it}")
                return self._numerical(x, s, z, tau, it, kappa)

            alpha = min(1.0, opts.step_fraction * self._max_step(s, z, tau, kappa, comb))
            if not math.isfinite(alpha) or alpha < 1e-10:
                logger.debug(f"step length collapsed at iteration {it}")
                return self._numerical(x, s, z, tau, it, kappa)

            x = x + alpha * comb.dx
            s = s + alpha * comb.ds
            z = z + alpha * comb.dz
            tau = tau + alpha * comb.dtau
            kappa = kappa + alpha * comb.dkappa
            s[self.zero_rows] = 0.0

            logger.debug(
                f"iter {it:3d}  mu={mu:.3e}  alpha={alpha:.3f}  sigma={sigma:.3f}  "
                f"tau={tau:.3e}  kappa={kappa:.3e}"
            )

        sol = self._scaled_solution(x, s, z, tau, ConeStatus.MAX_ITER, opts.max_iter)
        logger.debug(f"iteration cap {opts.max_iter} reached")
        return sol

    # ------------------------------------------------------------------
    # termination
    # ------------------------------------------------------------------

    def _metrics(self, x, s, z, tau):
        P, q, A, b = self.prog.P, self.prog.q, self.prog.A, self.prog.b
        xs, ss, zs = x / tau, s / tau, z / tau
        Px, Ax, Atz = P @ xs, A @ xs, A.T @ zs
        pres = _inf_norm(Ax + ss - b) / max(1.0, self.norm_b, _inf_norm(Ax), _inf_norm(ss))
        dres = _inf_norm(Px + Atz + q) / max(1.0, self.norm_q, _inf_norm(Px), _inf_norm(Atz))
        xPx = xs @ Px
        pobj = 0.5 * xPx + q @ xs
        dobj = -0.5 * xPx - b @ zs
        gap = abs(pobj - dobj) / max(1.0, min(abs(pobj), abs(dobj)))
        return xs, ss, zs, pres, dres, gap, pobj, dobj

    def _check_termination(self, x, s, z, tau, it) -> Optional[ConeSolution]:
        tol = self.opts.tol
        P, q, A, b = self.prog.P, self.prog.q, self.prog.A, self.prog.b

        _, _, _, pres, dres, gap, _, _ = self._metrics(x, s, z, tau)
        if max(pres, dres, gap) <= tol:
            return self._scaled_solution(x, s, z, tau, ConeStatus.OPTIMAL, it)

        btz = b @ z
        if btz < 0:
            if _inf_norm(A.T @ z) <= tol * (-btz):
                y = z / (-btz)
                logger.debug(f"primal infeasibility certificate at iteration {it}")
                return ConeSolution(
                    x=np.full(self.n, np.nan), y=y, s=np.zeros(self.m),
                    status=ConeStatus.PRIMAL_INFEASIBLE,
                    primal_residual=_inf_norm(A.T @ y), dual_residual=0.0, duality_gap=0.0,
                    iterations=it,
                )
        qtx = q @ x
        if qtx < 0:
            scale = -qtx
            if _inf_norm(P @ x) <= tol * scale and _inf_norm(A @ x + s) <= tol * scale:
                xr = x / scale
                logger.debug(f"dual infeasibility certificate at iteration {it}")
                return ConeSolution(
                    x=xr, y=np.full(self.m, np.nan), s=s / scale,
                    status=ConeStatus.DUAL_INFEASIBLE,
                    primal_residual=_inf_norm(A @ xr + s / scale), dual_residual=0.0,
                    duality_gap=0.0, iterations=it,
                )
        return None

    def _scaled_solution(self, x, s, z, tau, status, it) -> ConeSolution:
        xs, ss, zs, pres, dres, gap, pobj, dobj = self._metrics(x, s, z, tau)
        return ConeSolution(
            x=xs, y=zs, s=ss, status=status,
            primal_residual=float(pres), dual_residual=float(dres), duality_gap=float(gap),
            objective=float(pobj), dual_objective=float(dobj), iterations=it,
        )

    def _numerical(self, x, s, z, tau, it, kappa=0.0) -> ConeSolution:
        if tau <= 0 or not math.isfinite(tau):
            nan_n, nan_m = np.full(self.n, np.nan), np.full(self.m, np.nan)
            return ConeSolution(
                x=nan_n, y=nan_m, s=nan_m.copy(), status=ConeStatus.NUMERICAL,
                primal_residual=math.inf, dual_residual=math.inf, duality_gap=math.inf,
                iterations=it,
            )
        return self._scaled_solution(x, s, z, tau, ConeStatus.NUMERICAL, it)


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


# =============================================================================
# PUBLIC API
# =============================================================================

def solve(prog: ConeProgram, opts: Optional[SolverSettings] = None) -> ConeSolution:
    """
    Solve a conic program.

    Args:
        prog: Validated conic program
        opts: Tolerances and iteration cap (process settings when omitted)

    Returns:
        ConeSolution; statuses other than OPTIMAL are reported, not raised
    """
    opts = opts or SolverSettings.from_settings()
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        sol = _HomogeneousSolver(prog, opts).run()
    if sol.status == ConeStatus.OPTIMAL:
        violation = membership_violation(prog, sol)
        if violation > PSD_MEMBERSHIP_TOL:
            logger.warning(
                f"conic solve: optimal point leaves its cone by {violation:.3e}, "
                f"reporting {ConeStatus.NUMERICAL.value}"
            )
            sol.status = ConeStatus.NUMERICAL
    logger.debug(
        f"conic solve: {sol.status.value} after {sol.iterations} iterations "
        f"(n={prog.n_vars}, rows={prog.n_rows})"
    )
    return sol


def membership_violation(prog: ConeProgram, sol: ConeSolution) -> float:
    """Worst cone violation of the slack s and the dual y, relative to their size."""
    scale = max(1.0, _inf_norm(sol.s), _inf_norm(sol.y))
    return max(
        cone_violation(prog.cones, sol.s),
        cone_violation(prog.cones, sol.y, dual=True),
    ) / scale


def _raise_for_status(sol: ConeSolution, what: str) -> None:
    if sol.status == ConeStatus.PRIMAL_INFEASIBLE:
        raise InfeasibleError(f"{what} is infeasible")
    if sol.status == ConeStatus.DUAL_INFEASIBLE:
        raise UnboundedError(f"{what} is unbounded")
    if sol.is_acceptable():
        if sol.status != ConeStatus.OPTIMAL:
            logger.debug(f"{what}: accepting {sol.status.value} at reduced tolerance")
        return
    if sol.status == ConeStatus.MAX_ITER:
        raise MaxIterError(f"{what} hit the iteration cap")
    raise NumericalError(f"{what} failed numerically")


def lp_program(C: np.ndarray, d: np.ndarray, q: np.ndarray) -> ConeProgram:
    """min q'x s.t. Cx <= d as a ConeProgram."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = np.asarray(d, dtype=float).ravel()
    return ConeProgram(P=None, q=q, A=C, b=d, cones=(NonNegCone(d.size),))


def solve_lp(
    C: np.ndarray,
    d: np.ndarray,
    q: np.ndarray,
    opts: Optional[SolverSettings] = None,
) -> Tuple[float, np.ndarray]:
    """
    Solve min q'x s.t. Cx <= d.

    Returns:
        (optimal value, argmin)

    Raises:
        InfeasibleError: the region {Cx <= d} is empty
        UnboundedError: q'x is unbounded below on the region
    """
    sol = solve(lp_program(C, d, q), opts)
    _raise_for_status(sol, "LP")
    return float(np.asarray(q, dtype=float) @ sol.x), sol.x


def solve_qp(
    P: np.ndarray,
    q: np.ndarray,
    C: np.ndarray,
    d: np.ndarray,
    opts: Optional[SolverSettings] = None,
) -> Tuple[float, np.ndarray]:
    """
    Solve min 1/2 x'Px + q'x s.t. Cx <= d.

    Raises the same errors as solve_lp.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = np.asarray(d, dtype=float).ravel()
    prog = ConeProgram(P=P, q=q, A=C, b=d, cones=(NonNegCone(d.size),))
    sol = solve(prog, opts)
    _raise_for_status(sol, "QP")
    x = sol.x
    return float(0.5 * x @ prog.P @ x + prog.q @ x), x
