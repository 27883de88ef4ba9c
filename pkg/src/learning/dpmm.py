"""
DRMPC - Online Dirichlet Process Mixture
Streaming variational inference for a truncated Dirichlet-process Gaussian
mixture with Normal-Wishart components.

Model building: every incoming batch joins the retained data as singlets
and coordinate ascent runs over clumps + singlets until the evidence lower
bound settles. Compression: confidently assigned singlets are folded into
per-component clumps that keep only count, sum and sum of outer products.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from src.core.constants import (
    DPMM_ALPHA,
    DPMM_CLUMP_THRESHOLD,
    DPMM_ELBO_TOL,
    DPMM_KMAX,
    DPMM_LAMBDA0,
    DPMM_MAX_SWEEPS,
    DPMM_MIN_COUNT,
    DPMM_PRUNE_WEIGHT,
    DPMM_PSI0_SCALE,
)
from src.core.exceptions import (
    ConfigError,
    DimensionMismatchError,
    EmptyMixtureError,
    NonFiniteSampleError,
)
from src.geometry.polytope import HPolytope
from src.learning.mixture import MixtureEstimate, floor_covariance, project_into_support

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


# =============================================================================
# DATA TYPES
# =============================================================================

@dataclass(frozen=True)
class NwPrior:
    """Normal-Wishart base measure, DP concentration and truncation level."""
    theta0: np.ndarray
    lambda0: float = DPMM_LAMBDA0
    omega0: Optional[float] = None
    Psi0: Optional[np.ndarray] = None
    alpha: float = DPMM_ALPHA
    Kmax: int = DPMM_KMAX

    def __post_init__(self):
        theta0 = np.atleast_1d(np.array(self.theta0, dtype=float))
        n = theta0.size
        omega0 = float(n + 2) if self.omega0 is None else float(self.omega0)
        Psi0 = DPMM_PSI0_SCALE * np.eye(n) if self.Psi0 is None else np.array(self.Psi0, dtype=float)
        Psi0 = np.atleast_2d(Psi0)

        if self.lambda0 <= 0:
            raise ConfigError("lambda0 must be positive")
        if omega0 <= n - 1:
            raise ConfigError(f"omega0 must exceed n - 1 = {n - 1}")
        if Psi0.shape != (n, n):
            raise DimensionMismatchError(f"Psi0 has shape {Psi0.shape}, expected {(n, n)}")
        if not np.allclose(Psi0, Psi0.T) or np.linalg.eigvalsh(Psi0)[0] <= 0:
            raise ConfigError("Psi0 must be symmetric positive definite")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.Kmax < 1:
            raise ConfigError("Kmax must be at least 1")

        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "omega0", omega0)
        object.__setattr__(self, "Psi0", Psi0)

    @classmethod
    def default(cls, n: int) -> "NwPrior":
        """Diffuse origin-centred prior."""
        return cls(theta0=np.zeros(n))

    @property
    def dim(self) -> int:
        return self.theta0.size

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta0": self.theta0.tolist(),
            "lambda0": self.lambda0,
            "omega0": self.omega0,
            "Psi0": self.Psi0.tolist(),
            "alpha": self.alpha,
            "Kmax": self.Kmax,
        }


@dataclass(frozen=True)
class Clump:
    """Sufficient statistics of samples that share one assignment."""
    count: int
    sum: np.ndarray
    sumsq: np.ndarray

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("clump count must be at least 1")
        scatter = self.sumsq - np.outer(self.sum, self.sum) / self.count
        scale = max(1.0, float(np.max(np.abs(self.sumsq))))
        if np.linalg.eigvalsh(0.5 * (scatter + scatter.T))[0] < -1e-9 * scale:
            raise ConfigError("clump statistics are inconsistent")

    @classmethod
    def of(cls, x: np.ndarray) -> "Clump":
        x = np.asarray(x, dtype=float)
        return cls(count=1, sum=x.copy(), sumsq=np.outer(x, x))

    def add(self, x: np.ndarray) -> "Clump":
        return Clump(count=self.count + 1, sum=self.sum + x, sumsq=self.sumsq + np.outer(x, x))

    @property
    def mean(self) -> np.ndarray:
        return self.sum / self.count

    def to_dict(self) -> Dict[str, Any]:
        return {"count": self.count, "sum": self.sum.tolist(), "sumsq": self.sumsq.tolist()}


@dataclass
class Posterior:
    """
    Variational posterior over sticks and components plus retained data.

    Arrays are indexed by component k = 0..Kmax-1. `clump_resp` and
    `singlet_resp` hold the responsibilities of the last coordinate-ascent
    sweep and drive compression.
    """
    prior: NwPrior
    a: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    Psi: np.ndarray
    counts: np.ndarray
    clumps: List[Clump] = field(default_factory=list)
    singlets: np.ndarray = None
    clump_resp: np.ndarray = None
    singlet_resp: np.ndarray = None
    elbo: float = -math.inf
    sweeps: int = 0

    def __post_init__(self):
        n, K = self.prior.dim, self.prior.Kmax
        if self.singlets is None:
            self.singlets = np.zeros((0, n))
        if self.clump_resp is None:
            self.clump_resp = np.zeros((len(self.clumps), K))
        if self.singlet_resp is None:
            self.singlet_resp = np.zeros((len(self.singlets), K))

    @property
    def dim(self) -> int:
        return self.prior.dim

    @property
    def Kmax(self) -> int:
        return self.prior.Kmax

    @property
    def total_count(self) -> int:
        return int(sum(c.count for c in self.clumps) + len(self.singlets))

    def stored_scalars(self) -> int:
        """Memory measure: (n^2+3n)/2 + 1 per clump plus n per singlet."""
        n = self.dim
        return len(self.clumps) * ((n * n + 3 * n) // 2 + 1) + n * len(self.singlets)

    def copy(self) -> "Posterior":
        return replace(
            self,
            a=self.a.copy(), b=self.b.copy(), theta=self.theta.copy(), lam=self.lam.copy(),
            omega=self.omega.copy(), Psi=self.Psi.copy(), counts=self.counts.copy(),
            clumps=list(self.clumps), singlets=self.singlets.copy(),
            clump_resp=self.clump_resp.copy(), singlet_resp=self.singlet_resp.copy(),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "prior": self.prior.to_dict(),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "theta": self.theta.tolist(),
            "lambda": self.lam.tolist(),
            "omega": self.omega.tolist(),
            "Psi": self.Psi.tolist(),
            "counts": self.counts.tolist(),
            "clumps": [c.to_dict() for c in self.clumps],
            "singlets": self.singlets.tolist(),
            "elbo": self.elbo,
            "sweeps": self.sweeps,
        }


@dataclass
class _Units:
    """Data units (clumps then singlets) as weighted sufficient statistics."""
    weight: np.ndarray   # (u,)
    sum: np.ndarray      # (u, n)
    sumsq: np.ndarray    # (u, n, n)

    @classmethod
    def build(cls, clumps: Sequence[Clump], points: np.ndarray) -> "_Units":
        n = points.shape[1]
        weight = np.array([c.count for c in clumps] + [1] * len(points), dtype=float)
        sums = np.vstack([np.array([c.sum for c in clumps]).reshape(-1, n), points])
        sumsq = np.concatenate([
            np.array([c.sumsq for c in clumps]).reshape(-1, n, n),
            np.einsum("ui,uj->uij", points, points),
        ])
        return cls(weight=weight, sum=sums, sumsq=sumsq)

    def __len__(self) -> int:
        return self.weight.size


# =============================================================================
# VARIATIONAL UPDATES
# =============================================================================

def _component_params(prior: NwPrior, N: np.ndarray, S1: np.ndarray, S2: np.ndarray):
    """Normal-Wishart posterior per component from weighted statistics."""
    lam = prior.lambda0 + N
    theta = (prior.lambda0 * prior.theta0[None, :] + S1) / lam[:, None]
    omega = prior.omega0 + N
    Psi = (
        prior.Psi0[None, :, :]
        + S2
        + prior.lambda0 * np.outer(prior.theta0, prior.theta0)[None, :, :]
        - lam[:, None, None] * np.einsum("ki,kj->kij", theta, theta)
    )
    Psi = 0.5 * (Psi + np.transpose(Psi, (0, 2, 1)))
    return theta, lam, omega, Psi


def _sticks(prior: NwPrior, N: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = 1.0 + N
    tail = np.concatenate([np.cumsum(N[::-1])[::-1][1:], [0.0]])
    b = prior.alpha + tail
    return a, b


def _expected_log_pi(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dig_ab = special.digamma(a + b)
    e_log_v = special.digamma(a) - dig_ab
    e_log_1mv = special.digamma(b) - dig_ab
    # truncation: the last stick takes all remaining mass
    e_log_v[-1] = 0.0
    return e_log_v + np.concatenate([[0.0], np.cumsum(e_log_1mv[:-1])])


def _expected_log_det(omega: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    n = Psi.shape[1]
    i = np.arange(1, n + 1)
    dig = special.digamma((omega[:, None] + 1.0 - i[None, :]) / 2.0).sum(axis=1)
    _, logdet_psi = np.linalg.slogdet(Psi)
    return dig + n * math.log(2.0) - logdet_psi


def _expected_loglik(units: _Units, theta, lam, omega, Psi) -> np.ndarray:
    """Average expected log-likelihood per sample of every unit under every component."""
    n = theta.shape[1]
    W = np.linalg.inv(Psi)
    mean = units.sum / units.weight[:, None]
    second = units.sumsq / units.weight[:, None, None]
    Wtheta = np.einsum("kij,kj->ki", W, theta)
    quad = (
        np.einsum("uij,kij->uk", second, W)
        - 2.0 * mean @ Wtheta.T
        + np.einsum("ki,ki->k", theta, Wtheta)[None, :]
    )
    e_log_det = _expected_log_det(omega, Psi)
    return (
        0.5 * e_log_det[None, :]
        - 0.5 * n / lam[None, :]
        - 0.5 * omega[None, :] * quad
        - 0.5 * n * LOG_2PI
    )


def _statistics(units: _Units, resp: np.ndarray):
    N = resp.T @ units.weight
    S1 = resp.T @ units.sum
    S2 = np.einsum("uk,uij->kij", resp, units.sumsq)
    return N, S1, S2


def _log_wishart_norm(omega: float, Psi: np.ndarray) -> float:
    """ln B(Psi^{-1}, omega) of the Wishart normalizer."""
    n = Psi.shape[0]
    _, logdet_psi = np.linalg.slogdet(Psi)
    return 0.5 * omega * logdet_psi - 0.5 * omega * n * math.log(2.0) - special.multigammaln(0.5 * omega, n)


def _elbo(prior: NwPrior, units: _Units, resp, a, b, theta, lam, omega, Psi, e_log_pi, loglik) -> float:
    n = prior.dim
    K = prior.Kmax
    w = units.weight[:, None]

    data = float(np.sum(w * resp * (loglik + e_log_pi[None, :])))
    safe = np.where(resp > 0, resp, 1.0)
    entropy = -float(np.sum(w * resp * np.log(safe)))

    # sticks k < K against Beta(1, alpha)
    a_, b_ = a[:-1], b[:-1]
    dig_ab = special.digamma(a_ + b_)
    kl_sticks = float(np.sum(
        special.betaln(1.0, prior.alpha) - special.betaln(a_, b_)
        + (a_ - 1.0) * (special.digamma(a_) - dig_ab)
        + (b_ - prior.alpha) * (special.digamma(b_) - dig_ab)
    ))

    e_log_det = _expected_log_det(omega, Psi)
    W = np.linalg.inv(Psi)
    diff = theta - prior.theta0[None, :]
    maha = np.einsum("ki,kij,kj->k", diff, W, diff)
    trace = np.einsum("ij,kji->k", prior.Psi0, W)

    log_b0 = _log_wishart_norm(prior.omega0, prior.Psi0)
    e_log_p = 0.0
    e_log_q = 0.0
    for k in range(K):
        e_log_p += (
            0.5 * n * math.log(prior.lambda0 / (2.0 * math.pi))
            + 0.5 * e_log_det[k]
            - 0.5 * n * prior.lambda0 / lam[k]
            - 0.5 * prior.lambda0 * omega[k] * maha[k]
            + log_b0
            + 0.5 * (prior.omega0 - n - 1.0) * e_log_det[k]
            - 0.5 * omega[k] * trace[k]
        )
        log_bk = _log_wishart_norm(omega[k], Psi[k])
        entropy_wishart = -log_bk - 0.5 * (omega[k] - n - 1.0) * e_log_det[k] + 0.5 * omega[k] * n
        e_log_q += (
            0.5 * e_log_det[k]
            + 0.5 * n * math.log(lam[k] / (2.0 * math.pi))
            - 0.5 * n
            - entropy_wishart
        )
    kl_nw = e_log_q - e_log_p
    return data + entropy - kl_sticks - kl_nw


def _responsibilities(loglik: np.ndarray, e_log_pi: np.ndarray) -> np.ndarray:
    logits = loglik + e_log_pi[None, :]
    return np.exp(logits - special.logsumexp(logits, axis=1, keepdims=True))


# =============================================================================
# PUBLIC OPERATIONS
# =============================================================================

def init(prior: NwPrior) -> Posterior:
    """Posterior with every component at the prior and no retained data."""
    K, n = prior.Kmax, prior.dim
    N = np.zeros(K)
    theta, lam, omega, Psi = _component_params(prior, N, np.zeros((K, n)), np.zeros((K, n, n)))
    return Posterior(
        prior=prior,
        a=np.ones(K),
        b=np.full(K, prior.alpha),
        theta=theta,
        lam=lam,
        omega=omega,
        Psi=Psi,
        counts=N,
    )


def _validate_batch(post: Posterior, batch) -> np.ndarray:
    X = np.asarray(batch, dtype=float)
    if X.size == 0:
        return np.zeros((0, post.dim))
    if X.ndim == 1:
        X = X.reshape(1, -1) if post.dim > 1 or X.size == 1 else X.reshape(-1, 1)
    if X.shape[1] != post.dim:
        raise DimensionMismatchError(f"samples have dimension {X.shape[1]}, expected {post.dim}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteSampleError("disturbance sample contains NaN or inf")
    return X


def _seed(post: Posterior, units: _Units, n_old: int, X: np.ndarray) -> np.ndarray:
    """
    Sequential hard assignment of new points over the occupied components
    plus the first empty one; old units keep their stored responsibilities.
    """
    prior = post.prior
    K = prior.Kmax
    old_resp = np.vstack([post.clump_resp, post.singlet_resp])
    old_units = _Units(units.weight[:n_old], units.sum[:n_old], units.sumsq[:n_old])
    N, S1, S2 = _statistics(old_units, old_resp)

    new_resp = np.zeros((len(X), K))
    for i, x in enumerate(X):
        occupied = N > DPMM_MIN_COUNT
        allowed = occupied.copy()
        empty = np.flatnonzero(~occupied)
        if empty.size:
            allowed[empty[0]] = True
        theta, lam, omega, Psi = _component_params(prior, N, S1, S2)
        a, b = _sticks(prior, N)
        point = _Units(np.ones(1), x[None, :], np.outer(x, x)[None, :, :])
        score = _expected_loglik(point, theta, lam, omega, Psi)[0] + _expected_log_pi(a, b)
        score[~allowed] = -np.inf
        k = int(np.argmax(score))
        new_resp[i, k] = 1.0
        N[k] += 1.0
        S1[k] += x
        S2[k] += np.outer(x, x)
    return np.vstack([old_resp, new_resp])


def observe(
    post: Posterior,
    batch,
    tol: float = DPMM_ELBO_TOL,
    max_sweeps: int = DPMM_MAX_SWEEPS,
) -> Posterior:
    """
    Add a batch of disturbance samples and rerun coordinate ascent.

    Only the retained clumps, singlets and the new batch are touched. The
    batch is sorted lexicographically first, so the result does not depend
    on the order of samples within a batch.

    Raises:
        DimensionMismatchError: samples of the wrong dimension
        NonFiniteSampleError: NaN or inf in the batch
    """
    X = _validate_batch(post, batch)
    if len(X) == 0:
        return post.copy()
    X = X[np.lexsort(X.T[::-1])]

    prior = post.prior
    points = np.vstack([post.singlets, X])
    units = _Units.build(post.clumps, points)
    n_old = len(post.clumps) + len(post.singlets)
    resp = _seed(post, units, n_old, X)

    elbo_prev = -math.inf
    elbo = -math.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        N, S1, S2 = _statistics(units, resp)
        theta, lam, omega, Psi = _component_params(prior, N, S1, S2)
        a, b = _sticks(prior, N)
        e_log_pi = _expected_log_pi(a, b)
        loglik = _expected_loglik(units, theta, lam, omega, Psi)
        resp = _responsibilities(loglik, e_log_pi)
        elbo = _elbo(prior, units, resp, a, b, theta, lam, omega, Psi, e_log_pi, loglik)
        if abs(elbo - elbo_prev) <= tol * max(1.0, abs(elbo)):
            break
        elbo_prev = elbo

    N, S1, S2 = _statistics(units, resp)
    theta, lam, omega, Psi = _component_params(prior, N, S1, S2)
    a, b = _sticks(prior, N)
    n_clumps = len(post.clumps)
    logger.debug(
        f"DPMM observe: {len(X)} new samples, {int(np.sum(N > DPMM_MIN_COUNT))} occupied "
        f"components, {sweeps} sweeps, ELBO {elbo:.6f}"
    )
    return Posterior(
        prior=prior, a=a, b=b, theta=theta, lam=lam, omega=omega, Psi=Psi, counts=N,
        clumps=list(post.clumps),
        singlets=points,
        clump_resp=resp[:n_clumps],
        singlet_resp=resp[n_clumps:],
        elbo=float(elbo),
        sweeps=sweeps,
    )


def compress(post: Posterior, threshold: float = DPMM_CLUMP_THRESHOLD) -> Posterior:
    """
    Fold singlets whose largest responsibility is at least `threshold` into
    the clump of their dominant component. Variational parameters are left
    as they are; only the retained data changes shape.
    """
    if len(post.singlets) == 0:
        return post.copy()

    best = np.argmax(post.singlet_resp, axis=1)
    confident = post.singlet_resp.max(axis=1) >= threshold
    if not np.any(confident):
        return post.copy()

    clumps = list(post.clumps)
    clump_resp = [row for row in post.clump_resp]
    owner = {int(np.argmax(r)): j for j, r in reversed(list(enumerate(clump_resp)))}

    for i in np.flatnonzero(confident):
        k = int(best[i])
        x = post.singlets[i]
        if k in owner:
            j = owner[k]
            clumps[j] = clumps[j].add(x)
        else:
            owner[k] = len(clumps)
            clumps.append(Clump.of(x))
            clump_resp.append(post.singlet_resp[i].copy())

    keep = ~confident
    merged = int(confident.sum())
    logger.debug(f"DPMM compress: {merged} singlets merged, {len(clumps)} clumps retained")
    out = post.copy()
    out.clumps = clumps
    out.clump_resp = np.array(clump_resp).reshape(len(clumps), post.Kmax)
    out.singlets = post.singlets[keep]
    out.singlet_resp = post.singlet_resp[keep]
    return out


def expected_weights(post: Posterior) -> np.ndarray:
    """E[pi_k] under the Beta posteriors; the last stick is fixed at one."""
    ev = post.a / (post.a + post.b)
    ev[-1] = 1.0
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - ev[:-1])])
    return ev * remaining


def extract(post: Posterior, W: HPolytope, prune: float = DPMM_PRUNE_WEIGHT) -> MixtureEstimate:
    """
    Moment estimates for the ambiguity set.

    Weights are expected stick weights; the mass of components without
    data is folded into the last occupied one, then components below
    `prune` are dropped and the rest renormalized. Means are pulled into W,
    covariances are inverse-Wishart means floored to positive definite.

    Raises:
        EmptyMixtureError: the truncation level is zero
    """
    if post.Kmax < 1:
        raise EmptyMixtureError("posterior has no components")
    n = post.dim
    weights = expected_weights(post)
    occupied = post.counts > DPMM_MIN_COUNT
    if not np.any(occupied):
        occupied[0] = True
    last = int(np.flatnonzero(occupied)[-1])
    gamma = np.where(occupied, weights, 0.0)
    gamma[last] += weights[~occupied].sum()

    keep = gamma >= prune
    if not np.any(keep):
        keep[int(np.argmax(gamma))] = True
    idx = np.flatnonzero(keep)
    gamma = gamma[idx] / gamma[idx].sum()

    mu = np.array([project_into_support(post.theta[k], post.prior.theta0, W) for k in idx])
    Sigma = []
    for k in idx:
        dof = post.omega[k] - n - 1.0
        S = post.Psi[k] / dof if dof > 0 else post.Psi[k] / post.omega[k]
        Sigma.append(floor_covariance(S))
    return MixtureEstimate(gamma=gamma, mu=mu, Sigma=np.array(Sigma))


class OnlineDpmm:
    """Owns one posterior and runs the observe -> compress -> extract cycle."""

    def __init__(self, prior: NwPrior, W: HPolytope):
        if W.dim != prior.dim:
            raise DimensionMismatchError("prior and support dimensions differ")
        self.prior = prior
        self.W = W
        self.posterior = init(prior)

    def update(self, batch) -> MixtureEstimate:
        self.posterior = compress(observe(self.posterior, batch))
        return self.estimate()

    def estimate(self) -> MixtureEstimate:
        return extract(self.posterior, self.W)

    @property
    def memory(self) -> int:
        return self.posterior.stored_scalars()
