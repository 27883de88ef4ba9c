"""
DRMPC - Cone Blocks
Zero, nonnegative and positive semidefinite cones with the operations the
interior-point method needs (identity, Nesterov-Todd scaling, Jordan
product, step length).

PSD blocks use the symmetric vectorization `svec`: lower triangle, column
by column, off-diagonal entries scaled by sqrt(2) so that
svec(A) @ svec(B) == trace(A @ B).
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

SQRT2 = math.sqrt(2.0)


# =============================================================================
# SYMMETRIC VECTORIZATION
# =============================================================================

def svec_dim(order: int) -> int:
    """Length of the packed vector of an order-k symmetric matrix."""
    return order * (order + 1) // 2


def svec_order(dim: int) -> int:
    """Matrix order whose packing has length `dim`."""
    order = int(round((math.sqrt(8 * dim + 1) - 1) / 2))
    if svec_dim(order) != dim:
        raise ValueError(f"{dim} is not a triangular number")
    return order


def svec_index(i: int, j: int, order: int) -> int:
    """Position of entry (i, j) of an order-k matrix inside svec."""
    if i < j:
        i, j = j, i
    # columns 0..j-1 contribute order, order-1, ... entries
    return j * order - j * (j - 1) // 2 + (i - j)


@lru_cache(maxsize=None)
def _svec_maps(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Linear maps between svec and column-major vec coordinates.

    Returns (S, E) with svec(X) = S @ vec(X) and vec(smat(v)) = E @ v.
    S averages the two mirrored entries, so it also symmetrizes.
    """
    dim = svec_dim(order)
    S = np.zeros((dim, order * order))
    E = np.zeros((order * order, dim))
    t = 0
    for j in range(order):
        for i in range(j, order):
            if i == j:
                S[t, i + i * order] = 1.0
                E[i + i * order, t] = 1.0
            else:
                S[t, i + j * order] = S[t, j + i * order] = SQRT2 / 2.0
                E[i + j * order, t] = E[j + i * order, t] = 1.0 / SQRT2
            t += 1
    S.setflags(write=False)
    E.setflags(write=False)
    return S, E


def svec(matrix: np.ndarray) -> np.ndarray:
    """Pack a symmetric matrix."""
    matrix = np.asarray(matrix, dtype=float)
    S, _ = _svec_maps(matrix.shape[0])
    return S @ matrix.ravel(order="F")


def smat(vector: np.ndarray) -> np.ndarray:
    """Unpack svec into a full symmetric matrix."""
    vector = np.asarray(vector, dtype=float)
    order = svec_order(vector.size)
    _, E = _svec_maps(order)
    return (E @ vector).reshape((order, order), order="F")


def congruence_matrix(M: np.ndarray) -> np.ndarray:
    """Matrix of X -> M X M' acting on svec coordinates."""
    S, E = _svec_maps(M.shape[0])
    return S @ np.kron(M, M) @ E


# =============================================================================
# CONES
# =============================================================================

@dataclass(frozen=True)
class ZeroCone:
    """{0}^dim; its dual is the free space."""
    dim: int

    @property
    def degree(self) -> int:
        return 0

    def to_dict(self) -> dict:
        return {"type": "zero", "dim": self.dim}


@dataclass(frozen=True)
class NonNegCone:
    """Nonnegative orthant R^dim_+."""
    dim: int

    @property
    def degree(self) -> int:
        return self.dim

    def identity(self) -> np.ndarray:
        return np.ones(self.dim)

    def min_eig(self, v: np.ndarray) -> float:
        return float(np.min(v)) if self.dim else math.inf

    def nt_scaling(self, s: np.ndarray, z: np.ndarray) -> "Scaling":
        w = np.sqrt(s / z)
        lam = np.sqrt(s * z)
        return Scaling(W=np.diag(w), W_inv_T=np.diag(1.0 / w), lam=lam, lam_eigs=lam)

    def jordan(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return u * v

    def jordan_div(self, scaling: "Scaling", v: np.ndarray) -> np.ndarray:
        """Solve lam o x = v for x."""
        return v / scaling.lam_eigs

    def max_step(self, v: np.ndarray, dv: np.ndarray) -> float:
        neg = dv < 0
        if not np.any(neg):
            return math.inf
        return float(np.min(-v[neg] / dv[neg]))

    def to_dict(self) -> dict:
        return {"type": "nonneg", "dim": self.dim}


@dataclass(frozen=True)
class PsdCone:
    """Cone of order-k positive semidefinite matrices, packed with svec."""
    order: int

    @property
    def dim(self) -> int:
        return svec_dim(self.order)

    @property
    def degree(self) -> int:
        return self.order

    def identity(self) -> np.ndarray:
        return svec(np.eye(self.order))

    def min_eig(self, v: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(smat(v))[0])

    def nt_scaling(self, s: np.ndarray, z: np.ndarray) -> "Scaling":
        S, Z = smat(s), smat(z)
        Ls = linalg.cholesky(S, lower=True)
        Lz = linalg.cholesky(Z, lower=True)
        _, lam, Vt = linalg.svd(Lz.T @ Ls)
        inv_sqrt = 1.0 / np.sqrt(lam)
        # R' Z R = diag(lam) = R^{-1} S R^{-T}
        R = Ls @ Vt.T @ np.diag(inv_sqrt)
        Ls_inv = linalg.solve_triangular(Ls, np.eye(self.order), lower=True)
        R_inv = np.diag(np.sqrt(lam)) @ Vt @ Ls_inv
        # W z = svec(R' Z R), W^{-T} s = svec(R^{-1} S R^{-T})
        return Scaling(
            W=congruence_matrix(R.T),
            W_inv_T=congruence_matrix(R_inv),
            lam=svec(np.diag(lam)),
            lam_eigs=lam,
        )

    def jordan(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        U, V = smat(u), smat(v)
        return svec(0.5 * (U @ V + V @ U))

    def jordan_div(self, scaling: "Scaling", v: np.ndarray) -> np.ndarray:
        """Solve lam o X = V for X with lam diagonal in the scaled frame."""
        lam = scaling.lam_eigs
        V = smat(v)
        return svec(2.0 * V / (lam[:, None] + lam[None, :]))

    def max_step(self, v: np.ndarray, dv: np.ndarray) -> float:
        L = linalg.cholesky(smat(v), lower=True)
        T = linalg.solve_triangular(L, smat(dv), lower=True)
        T = linalg.solve_triangular(L, T.T, lower=True)
        lo = float(np.linalg.eigvalsh(0.5 * (T + T.T))[0])
        if lo >= 0:
            return math.inf
        return -1.0 / lo

    def to_dict(self) -> dict:
        return {"type": "psd", "order": self.order}


Cone = Union[ZeroCone, NonNegCone, PsdCone]


@dataclass
class Scaling:
    """Nesterov-Todd scaling of one cone block: lam = W z = W^{-T} s."""
    W: np.ndarray
    W_inv_T: np.ndarray
    lam: np.ndarray
    lam_eigs: np.ndarray


def cone_slices(cones: Sequence[Cone]) -> List[Tuple[Cone, slice]]:
    """Pair each cone with its row range."""
    out = []
    start = 0
    for cone in cones:
        out.append((cone, slice(start, start + cone.dim)))
        start += cone.dim
    return out


def cone_from_dict(data: dict) -> Cone:
    kind = data["type"]
    if kind == "zero":
        return ZeroCone(int(data["dim"]))
    if kind == "nonneg":
        return NonNegCone(int(data["dim"]))
    if kind == "psd":
        return PsdCone(int(data["order"]))
    raise ValueError(f"unknown cone type {kind!r}")


def cone_violation(cones: Sequence[Cone], v: np.ndarray, dual: bool = False) -> float:
    """
    Distance-like measure of how far `v` is outside the cone product.

    Zero blocks are checked for |v| (primal) or ignored (dual: free space).
    Returns 0 for members.
    """
    worst = 0.0
    for cone, sl in cone_slices(cones):
        block = v[sl]
        if isinstance(cone, ZeroCone):
            if not dual and block.size:
                worst = max(worst, float(np.max(np.abs(block))))
        elif isinstance(cone, NonNegCone):
            if block.size:
                worst = max(worst, float(max(0.0, -np.min(block))))
        else:
            worst = max(worst, max(0.0, -cone.min_eig(block)))
    return worst
