"""
DRMPC - Geometry Module
H-polytope algebra, tube offsets and invariant sets.
"""

from src.geometry.polytope import (
    HPolytope,
    contains,
    row_supports,
    support,
    tighten_rows,
)
from src.geometry.tubes import (
    error_tube_offsets,
    input_tube_offsets,
)
from src.geometry.invariant_sets import (
    minimal_rpi_support,
    mrpi,
    sampled_invariance_violations,
)

__all__ = [
    # Polytope
    "HPolytope",
    "contains",
    "row_supports",
    "support",
    "tighten_rows",
    # Tubes
    "error_tube_offsets",
    "input_tube_offsets",
    # Invariant sets
    "minimal_rpi_support",
    "mrpi",
    "sampled_invariance_violations",
]
