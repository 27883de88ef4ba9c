"""
DRMPC - Disturbance Generators
Gaussian mixtures truncated to the disturbance support, and the single
moment baseline estimated from raw samples.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.stats import truncnorm

from src.core.constants import DPMM_COV_FLOOR
from src.core.exceptions import (
    ConfigError,
    DimensionMismatchError,
    TooFewSamplesError,
    UnsupportedSupportError,
)
from src.geometry.polytope import HPolytope
from src.learning.mixture import MixtureEstimate, floor_covariance, project_into_support

logger = logging.getLogger(__name__)

REJECTION_CAP = 100_000


@dataclass(frozen=True)
class GaussianComponent:
    """Axis-aligned Gaussian before truncation."""
    weight: float
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        std = np.broadcast_to(np.array(self.std, dtype=float), mean.shape).copy()
        if self.weight <= 0:
            raise ConfigError("component weight must be positive")
        if np.any(std < 0):
            raise ConfigError("standard deviations must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def to_dict(self) -> Dict[str, Any]:
        return {"weight": self.weight, "mean": self.mean.tolist(), "std": self.std.tolist()}


@dataclass(frozen=True)
class DisturbanceSpec:
    """Mixture of axis-aligned Gaussians truncated to `support`."""
    components: Tuple[GaussianComponent, ...]
    support: HPolytope

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise ConfigError("disturbance spec needs at least one component")
        total = sum(c.weight for c in components)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"component weights sum to {total}, expected 1")
        for c in components:
            if c.mean.size != self.support.dim:
                raise DimensionMismatchError("component mean and support dimensions differ")
            if not self.support.contains(c.mean, tol=1e-12):
                raise ConfigError(f"component mean {c.mean.tolist()} lies outside the support")
        object.__setattr__(self, "components", components)

    @classmethod
    def gaussian(cls, mean, std, support: HPolytope) -> "DisturbanceSpec":
        return cls((GaussianComponent(1.0, mean, std),), support)

    @property
    def dim(self) -> int:
        return self.support.dim

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "components": [c.to_dict() for c in self.components],
            "support": self.support.to_dict(),
        }


def _truncated_draws(
    comp: GaussianComponent,
    lo: np.ndarray,
    hi: np.ndarray,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    out = np.empty((count, comp.mean.size))
    for k in range(comp.mean.size):
        mu, sigma = comp.mean[k], comp.std[k]
        if sigma == 0.0:
            out[:, k] = mu
            continue
        a, b = (lo[k] - mu) / sigma, (hi[k] - mu) / sigma
        out[:, k] = truncnorm.rvs(a, b, loc=mu, scale=sigma, size=count, random_state=rng)
    return np.clip(out, lo, hi)


def _rejection_draws(
    comp: GaussianComponent,
    support: HPolytope,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    accepted = []
    tries = 0
    while len(accepted) < count:
        if tries >= REJECTION_CAP:
            raise UnsupportedSupportError(
                f"rejection sampling accepted {len(accepted)} of {count} draws "
                f"within {REJECTION_CAP} tries"
            )
        w = comp.mean + comp.std * rng.standard_normal(comp.mean.size)
        tries += 1
        if support.contains(w):
            accepted.append(w)
    return np.array(accepted).reshape(count, comp.mean.size)


def sample_disturbances(spec: DisturbanceSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """
    `count` draws from the truncated mixture, each inside the support exactly.

    Boxes use per-dimension inverse-CDF truncated normals; other supports
    fall back to rejection sampling.

    Raises:
        UnsupportedSupportError: rejection sampling exhausted its try budget
    """
    labels = rng.choice(len(spec.components), size=count, p=spec.weights)
    out = np.empty((count, spec.dim))
    box = spec.support.as_box()
    for j, comp in enumerate(spec.components):
        idx = np.flatnonzero(labels == j)
        if idx.size == 0:
            continue
        if box is not None:
            out[idx] = _truncated_draws(comp, box[0], box[1], idx.size, rng)
        else:
            out[idx] = _rejection_draws(comp, spec.support, idx.size, rng)
    return out


def sample_disturbance(spec: DisturbanceSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw from the truncated mixture."""
    return sample_disturbances(spec, rng, 1)[0]


def global_moment_baseline(samples: Sequence[Sequence[float]], W: HPolytope) -> MixtureEstimate:
    """
    Single-component ambiguity parameters from the sample mean and covariance.

    Raises:
        TooFewSamplesError: fewer than two samples
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[0] < 2:
        raise TooFewSamplesError(f"need at least 2 samples, got {X.shape[0]}")
    if X.shape[1] != W.dim:
        raise DimensionMismatchError(f"samples have dimension {X.shape[1]}, support {W.dim}")
    mu = project_into_support(X.mean(axis=0), np.zeros(W.dim), W)
    Sigma = floor_covariance(np.atleast_2d(np.cov(X, rowvar=False)), DPMM_COV_FLOOR)
    return MixtureEstimate.single(mu, Sigma)
