"""
DRMPC - Invariant Sets
Maximal robust positively invariant sets by predecessor recursion, and
outer bounds on the minimal RPI set through support functions.
"""

import logging
from typing import Sequence

import numpy as np

from src.core.constants import (
    MRPI_MAX_ITER,
    MRPI_SAMPLED_INVARIANCE_TOL,
    REDUNDANCY_TOL,
    RPI_ALPHA,
    RPI_MAX_POWER,
)
from src.core.exceptions import (
    DimensionMismatchError,
    EmptySetError,
    EmptyTerminalSetError,
    InfeasibleError,
    MaxIterError,
    UnboundedError,
)
from src.geometry.polytope import HPolytope, row_supports
from src.optimization.conic_solver import solve_lp

logger = logging.getLogger(__name__)


def _is_redundant(C: np.ndarray, d: np.ndarray, row: np.ndarray, rhs: float, tol: float) -> bool:
    """Whether row'z <= rhs holds on {Cz <= d}."""
    try:
        value, _ = solve_lp(C, d, -row)
    except UnboundedError:
        return False
    except InfeasibleError as e:
        raise EmptyTerminalSetError("MRPI iterate is empty") from e
    return -value <= rhs + tol


def mrpi(
    Phi: np.ndarray,
    Dmap: np.ndarray,
    W: HPolytope,
    base: HPolytope,
    max_iter: int = MRPI_MAX_ITER,
    tol: float = REDUNDANCY_TOL,
) -> HPolytope:
    """
    Maximal robust positively invariant subset of `base` for z+ = Phi z + Dmap w.

    The k-th iterate keeps the rows C Phi^t z <= d - sum_{i<t} h_W(Dmap' (Phi^i)' C_j')
    for t <= k. The recursion stops when every row of the next level is
    redundant, which makes the current iterate invariant.

    Args:
        Phi: Autonomous dynamics
        Dmap: Disturbance injection matrix
        W: Disturbance support
        base: Constraint set the invariant set must lie in
        max_iter: Cap on the number of predecessor levels
        tol: Slack accepted in the redundancy LPs

    Returns:
        Invariant polytope with redundant rows removed

    Raises:
        EmptyTerminalSetError: base or an iterate is empty
        MaxIterError: no fixed point within max_iter levels
    """
    Phi = np.asarray(Phi, dtype=float)
    Dmap = np.atleast_2d(np.asarray(Dmap, dtype=float))
    n = Phi.shape[0]
    if base.dim != n or Dmap.shape[0] != n or Dmap.shape[1] != W.dim:
        raise DimensionMismatchError("Phi, Dmap, W and base dimensions disagree")

    if base.is_empty():
        raise EmptyTerminalSetError("MRPI base set is empty")

    C_base, d_base = base.C, base.d
    C, d = C_base.copy(), d_base.copy()

    level_rows = C_base.copy()
    offsets = np.zeros(len(d_base))
    for k in range(1, max_iter + 1):
        # disturbance entering k steps back, propagated through the previous level
        offsets = offsets + row_supports(W, level_rows @ Dmap)
        level_rows = level_rows @ Phi
        rhs = d_base - offsets

        new_rows, new_rhs = [], []
        for row, value in zip(level_rows, rhs):
            norm = np.linalg.norm(row)
            if norm <= 1e-12:
                if value < -tol:
                    raise EmptyTerminalSetError("MRPI iterate is empty")
                continue
            if not _is_redundant(C, d, row / norm, value / norm, tol):
                new_rows.append(row / norm)
                new_rhs.append(value / norm)

        if not new_rows:
            logger.debug(f"MRPI converged after {k} predecessor levels with {len(d)} rows")
            try:
                return HPolytope(C, d).remove_redundant(tol)
            except EmptySetError as e:
                raise EmptyTerminalSetError("MRPI set is empty") from e

        C = np.vstack([C, np.array(new_rows)])
        d = np.concatenate([d, np.array(new_rhs)])

    raise MaxIterError(f"MRPI recursion found no fixed point within {max_iter} levels")


def sampled_invariance_violations(
    Omega: HPolytope,
    Phi: np.ndarray,
    Dmap: np.ndarray,
    W: HPolytope,
    rng: np.random.Generator,
    samples: int = 10_000,
    tol: float = MRPI_SAMPLED_INVARIANCE_TOL,
) -> int:
    """
    Count sampled (z, w) pairs with z in Omega, w in W but Phi z + Dmap w outside.

    Points are drawn by rejection from the bounding boxes of Omega and W.
    """
    z = _sample_polytope(Omega, rng, samples)
    w = _sample_polytope(W, rng, samples)
    succ = z @ np.asarray(Phi).T + w @ np.atleast_2d(Dmap).T
    return int(np.sum(~Omega.contains_points(succ, tol)))


def _sample_polytope(P: HPolytope, rng: np.random.Generator, count: int) -> np.ndarray:
    n = P.dim
    lo = np.array([-P.support(-e) for e in np.eye(n)])
    hi = np.array([P.support(e) for e in np.eye(n)])
    out = np.empty((0, n))
    while len(out) < count:
        cand = rng.uniform(lo, hi, size=(4 * count, n))
        out = np.vstack([out, cand[P.contains_points(cand)]])
    return out[:count]


def minimal_rpi_support(
    Phi: np.ndarray,
    W: HPolytope,
    directions: Sequence[Sequence[float]],
    alpha: float = RPI_ALPHA,
    max_power: int = RPI_MAX_POWER,
) -> np.ndarray:
    """
    Outer bounds on the support of the minimal RPI set along `directions`.

    Picks the smallest s with h_W((Phi^s)' e) <= a_s h_W(e) for every row e of
    W's constraint matrix and a_s <= alpha, then returns
    sum_{i<s} h_W((Phi^i)' a) / (1 - a_s).

    Raises:
        MaxIterError: Phi is not contractive enough within max_power
    """
    Phi = np.asarray(Phi, dtype=float)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    E = W.C
    base = row_supports(W, E)

    power = np.eye(Phi.shape[0])
    partial = np.zeros(len(directions))
    for s in range(1, max_power + 1):
        partial = partial + row_supports(W, directions @ power)
        power = power @ Phi
        shrink = _contraction(W, E, base, power)
        if shrink <= alpha:
            logger.debug(f"minimal RPI bound uses s = {s}, alpha_s = {shrink:.3e}")
            return partial / (1.0 - shrink)
    raise MaxIterError(f"no admissible power s <= {max_power} for alpha = {alpha}")


def _contraction(W: HPolytope, E: np.ndarray, base: np.ndarray, power: np.ndarray) -> float:
    """Smallest a with Phi^s W contained in a W."""
    shifted = row_supports(W, E @ power)
    ratios = np.where(base > 0, shifted / np.where(base > 0, base, 1.0), np.inf)
    ratios[(base <= 0) & (shifted <= 0)] = 0.0
    return float(max(0.0, ratios.max()))

