"""
DRMPC - Tube Offsets
Row offsets that turn Minkowski sums of propagated disturbance sets into
plain right-hand-side shifts of H-polytopes.
"""

import numpy as np

from src.core.exceptions import DimensionMismatchError
from src.geometry.polytope import HPolytope, row_supports


def error_tube_offsets(Phi: np.ndarray, W: HPolytope, H: np.ndarray, N: int) -> np.ndarray:
    """
    Offsets of the state constraint rows along the prediction horizon.

    Row l+1 holds sum_{j=1}^{l} h_W((Phi^j)' H_i') for l = 0..N-1; rows 0 and
    1 are zero. The nominal state z_{l+1} must satisfy H z <= h - eta - row l+1.

    Args:
        Phi: Closed-loop matrix A + BK
        W: Disturbance support
        H: State constraint rows (p x n)
        N: Prediction horizon

    Returns:
        (N+1) x p array, nondecreasing down each column
    """
    Phi = np.asarray(Phi, dtype=float)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[1] != Phi.shape[0] or W.dim != Phi.shape[0]:
        raise DimensionMismatchError("Phi, W and H dimensions disagree")
    zeta = np.zeros((N + 1, H.shape[0]))
    power = np.eye(Phi.shape[0])
    for l in range(1, N):
        power = power @ Phi
        zeta[l + 1] = zeta[l] + row_supports(W, H @ power)
    return zeta


def input_tube_offsets(
    Phi: np.ndarray,
    K: np.ndarray,
    W: HPolytope,
    G: np.ndarray,
    N: int,
) -> np.ndarray:
    """
    Offsets of the input constraint rows: delta_l = sum_{j=0}^{l-1} h_W((K Phi^j)' G_i').

    Returns:
        N x q array with delta_0 = 0
    """
    Phi = np.asarray(Phi, dtype=float)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[1] != K.shape[0] or K.shape[1] != Phi.shape[0]:
        raise DimensionMismatchError("K and G dimensions disagree")
    delta = np.zeros((N, G.shape[0]))
    power = np.eye(Phi.shape[0])
    for l in range(1, N):
        delta[l] = delta[l - 1] + row_supports(W, G @ K @ power)
        power = power @ Phi
    return delta
