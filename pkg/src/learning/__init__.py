"""
DRMPC - Learning Module
Online Dirichlet-process mixture learning of the disturbance distribution.
"""

from src.learning.mixture import (
    MixtureEstimate,
    floor_covariance,
    project_into_support,
)
from src.learning.dpmm import (
    Clump,
    NwPrior,
    OnlineDpmm,
    Posterior,
    compress,
    expected_weights,
    extract,
    init,
    observe,
)

__all__ = [
    # Mixture
    "MixtureEstimate",
    "floor_covariance",
    "project_into_support",
    # DPMM
    "Clump",
    "NwPrior",
    "OnlineDpmm",
    "Posterior",
    "compress",
    "expected_weights",
    "extract",
    "init",
    "observe",
]
