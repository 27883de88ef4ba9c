"""
DRMPC - Discretized CVaR Oracle
Brute-force worst-case CVaR back-off on a grid of atoms over W, used to
check the SDP tightening on low-dimensional fixtures.
"""

import logging
import math
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from src.core.constants import ORACLE_GRID_DENSITY, ORACLE_TOL
from src.core.exceptions import ConfigError, InfeasibleMomentsError
from src.geometry.polytope import HPolytope
from src.tightening.ambiguity import AmbiguitySet
from src.tightening.cvar_sdp import check_risk

logger = logging.getLogger(__name__)

ORACLE_MAX_DIM = 2
ORACLE_MAX_CUTS = 60
MOMENT_PSD_TOL = 1e-9
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def grid_atoms(W: HPolytope, density: int = ORACLE_GRID_DENSITY) -> np.ndarray:
    """Uniform grid over the bounding box of W, restricted to W."""
    n = W.dim
    if n > ORACLE_MAX_DIM:
        raise ConfigError(f"oracle grid supports dimension <= {ORACLE_MAX_DIM}, got {n}")
    eye = np.eye(n)
    lo = np.array([-W.support(-eye[k]) for k in range(n)])
    hi = np.array([W.support(eye[k]) for k in range(n)])
    axes = [np.linspace(lo[k], hi[k], density) for k in range(n)]
    atoms = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return atoms[W.contains_points(atoms, tol=1e-12)]


def _worst_expectation(
    atoms: np.ndarray,
    loss: np.ndarray,
    mu: np.ndarray,
    second: np.ndarray,
) -> float:
    """
    max_p sum p_a loss_a over atom masses with sum 1, mean mu and second
    moment below `second`. The matrix bound enters as eigenvector cuts
    v' S(p) v <= v' second v, added until S(p) satisfies it.
    """
    n = atoms.shape[1]
    A_eq = np.vstack([np.ones(len(atoms)), atoms.T])
    b_eq = np.concatenate([[1.0], mu])
    cuts = [np.eye(n)[k] for k in range(n)]

    for _ in range(ORACLE_MAX_CUTS):
        A_ub = np.array([(atoms @ v) ** 2 for v in cuts])
        b_ub = np.array([v @ second @ v for v in cuts])
        res = linprog(
            -loss, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
            bounds=(0.0, None), method="highs",
        )
        if res.status != 0:
            raise InfeasibleMomentsError(f"no grid distribution matches the moments: {res.message}")
        p = res.x
        S = (atoms * p[:, None]).T @ atoms
        vals, vecs = linalg.eigh(second - S)
        if vals[0] >= -MOMENT_PSD_TOL:
            return float(-res.fun)
        cuts.append(vecs[:, 0])
    raise InfeasibleMomentsError("second-moment cuts did not settle")


def wc_cvar_oracle(
    amb: AmbiguitySet,
    Hrow: Sequence[float],
    eps: float,
    grid_density: int = ORACLE_GRID_DENSITY,
    tol: float = ORACLE_TOL,
) -> float:
    """
    Least eta with sup over the gridded ambiguity set of CVaR_eps(H w - eta) <= 0.

    CVaR is translation equivariant, so the least eta equals the worst-case
    CVaR of H w itself: min over beta of beta + (1/eps) sum_j gamma_j E_j[(H w - beta)+],
    minimized by golden-section search over a bracket of the support.

    Raises:
        InfeasibleMomentsError: no grid distribution matches a component's moments
    """
    eps = check_risk(eps)
    Hrow = np.asarray(Hrow, dtype=float).ravel()
    atoms = grid_atoms(amb.W, grid_density)
    values = atoms @ Hrow
    mix = amb.mix
    second = mix.second_moments()

    def objective(beta: float) -> float:
        loss = np.maximum(values - beta, 0.0)
        worst = sum(
            mix.gamma[j] * _worst_expectation(atoms, loss, mix.mu[j], second[j])
            for j in range(mix.m)
        )
        return beta + worst / eps

    reach = max(amb.W.support(Hrow), amb.W.support(-Hrow))
    a, b = -reach - 1.0, reach + 1.0
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = objective(c), objective(d)
    evaluations = 2
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = objective(d)
        evaluations += 1

    eta = min(fc, fd)
    logger.debug(f"CVaR oracle: eta = {eta:.6f} after {evaluations} evaluations on {len(atoms)} atoms")
    return float(eta)


def empirical_cvar(samples: Sequence[float], eps: float) -> float:
    """CVaR at level eps of an empirical loss sample."""
    eps = check_risk(eps)
    L = np.asarray(samples, dtype=float).ravel()
    if L.size == 0:
        raise ConfigError("empirical CVaR of an empty sample")
    best = math.inf
    for method in ("lower", "higher"):
        beta = float(np.quantile(L, 1.0 - eps, method=method))
        best = min(best, beta + float(np.mean(np.maximum(L - beta, 0.0))) / eps)
    return best
