"""
DRMPC - Ambiguity Sets
Mixture-of-moments ambiguity set over a polyhedral disturbance support,
plus the JSON mixture file used by the command-line tools.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from src.core.exceptions import ConfigError, DimensionMismatchError
from src.geometry.polytope import HPolytope
from src.learning.mixture import MixtureEstimate

MEAN_MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class AmbiguitySet:
    """
    Distributions on W that split into m components with weights gamma_j,
    each matching mean mu_j and second moment at most Sigma_j + mu_j mu_j'.
    """
    W: HPolytope
    mix: MixtureEstimate
    degenerate_support: bool = False

    def __post_init__(self):
        if self.W.dim != self.mix.dim:
            raise DimensionMismatchError(
                f"support has dimension {self.W.dim}, mixture {self.mix.dim}"
            )
        self.W.validate_support(self.degenerate_support)
        outside = ~self.W.contains_points(self.mix.mu, tol=MEAN_MEMBERSHIP_TOL)
        if np.any(outside):
            raise ConfigError(f"mixture means {np.flatnonzero(outside).tolist()} lie outside W")

    @property
    def dim(self) -> int:
        return self.W.dim

    def to_dict(self) -> Dict[str, Any]:
        return {"W": self.W.to_dict(), "mixture": self.mix.to_dict()}


def mixture_to_json(mix: MixtureEstimate) -> str:
    """Serialize with full float precision (keys m, gamma, mu, Sigma)."""
    return json.dumps(mix.to_dict(), indent=2)


def mixture_from_json(source: Union[str, Path]) -> MixtureEstimate:
    """Parse a mixture from a JSON string or a path to a JSON file."""
    text = str(source)
    if not text.lstrip().startswith("{"):
        try:
            text = Path(source).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read mixture file {source}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"mixture file line {e.lineno}: {e.msg}") from e
    for key in ("gamma", "mu", "Sigma"):
        if key not in data:
            raise ConfigError(f"mixture file is missing '{key}'")
    return MixtureEstimate.from_dict(data)
