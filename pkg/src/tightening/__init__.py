"""
DRMPC - Tightening Module
Ambiguity sets, distributionally robust CVaR back-offs and their oracle.
"""

from src.tightening.ambiguity import (
    AmbiguitySet,
    mixture_from_json,
    mixture_to_json,
)
from src.tightening.cvar_sdp import (
    TighteningResult,
    build_sdp,
    check_risk,
    solve_eta,
    solve_eta_with_fallback,
    worst_case_eta,
)
from src.tightening.oracle import (
    empirical_cvar,
    grid_atoms,
    wc_cvar_oracle,
)

__all__ = [
    # Ambiguity set
    "AmbiguitySet",
    "mixture_from_json",
    "mixture_to_json",
    # SDP tightening
    "TighteningResult",
    "build_sdp",
    "check_risk",
    "solve_eta",
    "solve_eta_with_fallback",
    "worst_case_eta",
    # Oracle
    "empirical_cvar",
    "grid_atoms",
    "wc_cvar_oracle",
]
