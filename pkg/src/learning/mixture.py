"""
DRMPC - Mixture Estimates
Weights, means and covariances of the learned disturbance mixture; the
parameters of the moment ambiguity set.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from src.core.constants import DPMM_COV_FLOOR, DPMM_SUPPORT_SHRINK
from src.core.exceptions import ConfigError, DimensionMismatchError, EmptyMixtureError
from src.geometry.polytope import HPolytope


@dataclass(frozen=True)
class MixtureEstimate:
    """m components with weights gamma, means mu (m x n) and covariances Sigma (m x n x n)."""
    gamma: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float).ravel()
        mu = np.array(self.mu, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(gamma.size, -1)
        n = mu.shape[1] if mu.ndim == 2 else 0
        Sigma = np.array(self.Sigma, dtype=float).reshape(gamma.size, n, n)

        if gamma.size == 0:
            raise EmptyMixtureError("mixture has no components")
        if mu.shape != (gamma.size, n):
            raise DimensionMismatchError(f"mu has shape {mu.shape}, expected {(gamma.size, n)}")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(Sigma))):
            raise ConfigError("mixture contains non-finite entries")
        if np.any(gamma <= 0) or abs(gamma.sum() - 1.0) > 1e-9:
            raise ConfigError("mixture weights must be positive and sum to one")
        for S in Sigma:
            if not np.allclose(S, S.T, atol=1e-12):
                raise ConfigError("covariances must be symmetric")
            if np.linalg.eigvalsh(S)[0] < -1e-12:
                raise ConfigError("covariances must be positive semidefinite")

        for arr in (gamma, mu, Sigma):
            arr.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)

    @property
    def m(self) -> int:
        return self.gamma.size

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    def second_moments(self) -> np.ndarray:
        """Sigma_j + mu_j mu_j' per component."""
        return self.Sigma + np.einsum("ji,jk->jik", self.mu, self.mu)

    def mean(self) -> np.ndarray:
        return self.gamma @ self.mu

    def scaled(self, factor: float) -> "MixtureEstimate":
        """Same weights and means with covariances multiplied by `factor`."""
        return MixtureEstimate(self.gamma, self.mu, self.Sigma * factor)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "gamma": self.gamma.tolist(),
            "mu": self.mu.tolist(),
            "Sigma": self.Sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MixtureEstimate":
        gamma = np.array(data["gamma"], dtype=float)
        if "m" in data and int(data["m"]) != gamma.size:
            raise DimensionMismatchError(f"m = {data['m']} but {gamma.size} weights given")
        return cls(gamma=gamma, mu=np.array(data["mu"], dtype=float),
                   Sigma=np.array(data["Sigma"], dtype=float))

    @classmethod
    def single(cls, mu, Sigma) -> "MixtureEstimate":
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        Sigma = np.asarray(Sigma, dtype=float).reshape(mu.size, mu.size)
        return cls(gamma=np.ones(1), mu=mu[None, :], Sigma=Sigma[None, :, :])


def floor_covariance(S: np.ndarray, floor: float = DPMM_COV_FLOOR) -> np.ndarray:
    """Symmetrize and lift eigenvalues below `floor`."""
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def project_into_support(
    point: np.ndarray,
    anchor: np.ndarray,
    W: HPolytope,
    shrink: float = DPMM_SUPPORT_SHRINK,
) -> np.ndarray:
    """
    Pull `point` radially toward `anchor` until it lies in W with d scaled by (1 - shrink).

    The anchor must lie in the shrunk support.
    """
    point = np.asarray(point, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    d = W.d * (1.0 - shrink)
    step = W.C @ (point - anchor)
    room = d - W.C @ anchor
    t = 1.0
    moving = step > 0
    if np.any(moving):
        t = min(1.0, float(np.min(np.maximum(room[moving], 0.0) / step[moving])))
    return anchor + t * (point - anchor)
