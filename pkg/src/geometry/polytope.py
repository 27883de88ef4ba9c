"""
DRMPC - Halfspace Polytopes
H-representation polytopes {x : Cx <= d} handled through support functions
and LPs: membership, row tightening, redundancy removal and the text
format used by the command-line tools.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.constants import REDUNDANCY_TOL
from src.core.exceptions import (
    ConfigError,
    DimensionMismatchError,
    EmptySetError,
    InfeasibleError,
    UnboundedError,
)
from src.optimization.conic_solver import solve_lp

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HPolytope:
    """Polytope {x : Cx <= d}, one halfspace per row."""
    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        if C.ndim == 1:
            C = C.reshape(-1, 1)
        d = np.array(self.d, dtype=float).ravel()
        if C.shape[0] < 1:
            raise ConfigError("polytope needs at least one row")
        if C.shape[0] != d.size:
            raise DimensionMismatchError(f"C has {C.shape[0]} rows but d has {d.size} entries")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise ConfigError("polytope data must be finite")
        C.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def box(cls, lo, hi, dim: Optional[int] = None) -> "HPolytope":
        """Axis-aligned box lo <= x <= hi; scalars broadcast to `dim`."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        n = dim or max(lo.size, hi.size)
        lo = np.broadcast_to(lo, (n,))
        hi = np.broadcast_to(hi, (n,))
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def from_text(cls, text: str) -> "HPolytope":
        """Parse rows of the form `c1 c2 ... cn <= d`."""
        rows: List[List[float]] = []
        rhs: List[float] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "<=" not in line:
                raise ConfigError(f"line {lineno}: expected 'c1 ... cn <= d', got {raw!r}")
            lhs, right = line.split("<=", 1)
            try:
                coeffs = [float(tok) for tok in lhs.split()]
                value = float(right.strip())
            except ValueError as e:
                raise ConfigError(f"line {lineno}: {e}") from e
            if rows and len(coeffs) != len(rows[0]):
                raise ConfigError(
                    f"line {lineno}: {len(coeffs)} coefficients, expected {len(rows[0])}"
                )
            rows.append(coeffs)
            rhs.append(value)
        if not rows:
            raise ConfigError("polytope text contains no rows")
        return cls(np.array(rows), np.array(rhs))

    def to_text(self) -> str:
        lines = []
        for row, value in zip(self.C, self.d):
            coeffs = " ".join(repr(float(c)) for c in row)
            lines.append(f"{coeffs} <= {float(value)!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict[str, Any]:
        return {"C": self.C.tolist(), "d": self.d.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HPolytope":
        return cls(np.array(data["C"], dtype=float), np.array(data["d"], dtype=float))

    # ------------------------------------------------------------------
    # basic properties
    # ------------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def n_rows(self) -> int:
        return self.C.shape[0]

    @cached_property
    def _box_bounds(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        n = self.dim
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for row, value in zip(self.C, self.d):
            nz = np.flatnonzero(row)
            if nz.size != 1:
                return None
            k = nz[0]
            bound = value / row[k]
            if row[k] > 0:
                hi[k] = min(hi[k], bound)
            else:
                lo[k] = max(lo[k], bound)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            return None
        return lo, hi

    def as_box(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """(lo, hi) when every row bounds a single coordinate, else None."""
        bounds = self._box_bounds
        if bounds is None:
            return None
        return bounds[0].copy(), bounds[1].copy()

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def support(self, a: Sequence[float]) -> float:
        """h(a) = max a'x over the polytope."""
        a = np.asarray(a, dtype=float).ravel()
        if a.size != self.dim:
            raise DimensionMismatchError(f"direction has {a.size} entries, polytope dim {self.dim}")
        if not np.any(a):
            return 0.0
        bounds = self._box_bounds
        if bounds is not None:
            lo, hi = bounds
            if np.any(lo > hi):
                raise InfeasibleError("support of an empty box")
            return float(np.sum(np.where(a > 0, a * hi, a * lo)))
        value, _ = solve_lp(self.C, self.d, -a)
        return -value

    def contains(self, x: Sequence[float], tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise DimensionMismatchError(f"point has {x.size} entries, polytope dim {self.dim}")
        return bool(np.all(self.C @ x <= self.d + tol))

    def contains_points(self, X: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Row-wise membership for a batch of points."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all(X @ self.C.T <= self.d + tol, axis=1)

    def is_empty(self) -> bool:
        bounds = self._box_bounds
        if bounds is not None:
            return bool(np.any(bounds[0] > bounds[1]))
        try:
            solve_lp(self.C, self.d, np.zeros(self.dim))
        except InfeasibleError:
            return True
        return False

    def is_bounded(self) -> bool:
        if self._box_bounds is not None:
            return True
        try:
            for k in range(self.dim):
                e = np.eye(self.dim)[k]
                self.support(e)
                self.support(-e)
        except UnboundedError:
            return False
        return True

    def chebyshev_center(self) -> Tuple[np.ndarray, float]:
        """Center and radius of the largest inscribed ball."""
        norms = np.linalg.norm(self.C, axis=1)
        C = np.hstack([self.C, norms[:, None]])
        C = np.vstack([C, np.eye(self.dim + 1)[-1:] * -1.0])
        d = np.concatenate([self.d, [0.0]])
        q = np.zeros(self.dim + 1)
        q[-1] = -1.0
        try:
            _, sol = solve_lp(C, d, q)
        except InfeasibleError as e:
            raise EmptySetError("polytope has no interior point") from e
        return sol[:-1], float(sol[-1])

    # ------------------------------------------------------------------
    # set operations
    # ------------------------------------------------------------------

    def tighten(self, offsets: Sequence[float]) -> "HPolytope":
        return tighten_rows(self, offsets)

    def intersect(self, other: "HPolytope") -> "HPolytope":
        if other.dim != self.dim:
            raise DimensionMismatchError("intersecting polytopes of different dimension")
        return HPolytope(np.vstack([self.C, other.C]), np.concatenate([self.d, other.d]))

    def remove_redundant(self, tol: float = REDUNDANCY_TOL) -> "HPolytope":
        """
        Drop rows implied by the others.

        Raises:
            EmptySetError: the polytope is empty
        """
        C, d = self.C, self.d
        norms = np.linalg.norm(C, axis=1)
        zero = norms <= 1e-12
        if np.any(d[zero] < -tol):
            raise EmptySetError("polytope has an infeasible constant row")
        keep = np.flatnonzero(~zero)
        if keep.size == 0:
            # every row is 0 <= d with d >= 0; keep one to stay a valid polytope
            return HPolytope(C[:1], d[:1])
        C = C[keep] / norms[keep, None]
        d = d[keep] / norms[keep]

        # duplicates keep the tightest offset
        order = np.lexsort((d,) + tuple(np.round(C, 12).T))
        C, d = C[order], d[order]
        unique = np.ones(len(d), dtype=bool)
        for i in range(1, len(d)):
            if np.allclose(C[i], C[i - 1], atol=1e-12, rtol=0.0):
                unique[i] = False
        C, d = C[unique], d[unique]

        active = np.ones(len(d), dtype=bool)
        for i in range(len(d)):
            active[i] = False
            A = np.vstack([C[active], C[i]])
            b = np.concatenate([d[active], [d[i] + 1.0]])
            try:
                value, _ = solve_lp(A, b, -C[i])
            except InfeasibleError as e:
                raise EmptySetError("polytope is empty") from e
            except UnboundedError:
                active[i] = True
                continue
            if -value > d[i] + tol:
                active[i] = True
        logger.debug(f"redundancy removal kept {int(active.sum())} of {self.n_rows} rows")
        return HPolytope(C[active], d[active])

    def validate_support(self, allow_degenerate: bool = False) -> None:
        """
        Check the polytope can serve as a disturbance support: bounded with
        the origin in its interior (every d_i > 0).

        With allow_degenerate, rows with d_i = 0 are accepted; the origin then
        lies on the boundary and supports such as W = {0} become possible.
        """
        if np.any(self.d < 0):
            raise ConfigError("disturbance support must contain the origin")
        if not allow_degenerate and np.any(self.d <= 0):
            raise ConfigError(
                "disturbance support must contain the origin in its interior (d > 0)"
            )
        if not self.is_bounded():
            raise ConfigError("disturbance support must be bounded")


# =============================================================================
# MODULE-LEVEL OPERATIONS
# =============================================================================

def support(P: HPolytope, a: Sequence[float]) -> float:
    """
    Support function h_P(a) = max_{x in P} a'x.

    Raises:
        UnboundedError: P is unbounded in direction a
    """
    return P.support(a)


def contains(P: HPolytope, x: Sequence[float], tol: float = 0.0) -> bool:
    """True iff Cx <= d + tol elementwise."""
    return P.contains(x, tol)


def tighten_rows(P: HPolytope, offsets: Sequence[float]) -> HPolytope:
    """Same rows with right-hand side d - offsets; emptiness is not checked."""
    offsets = np.asarray(offsets, dtype=float).ravel()
    if offsets.size != P.n_rows:
        raise DimensionMismatchError(f"{offsets.size} offsets for {P.n_rows} rows")
    if np.any(offsets < 0):
        raise ConfigError("tightening offsets must be nonnegative")
    return HPolytope(P.C, P.d - offsets)


def row_supports(W: HPolytope, directions: np.ndarray) -> np.ndarray:
    """Support of W along every row of `directions`."""
    directions = np.atleast_2d(directions)
    return np.array([W.support(a) for a in directions])
