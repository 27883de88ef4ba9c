"""
Pytest configuration and fixtures
"""
import pytest
import sys
from pathlib import Path

import numpy as np

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.core.constants import DOUBLE_INTEGRATOR
from src.control.mpc import MpcConfig
from src.control.regulator import Plant
from src.geometry.polytope import HPolytope


@pytest.fixture
def configs_dir():
    """Directory of the bundled scenario files."""
    return project_root / "configs"


@pytest.fixture
def double_integrator():
    """Double integrator with Q = I, R = 0.01."""
    return Plant(
        A=DOUBLE_INTEGRATOR["A"],
        B=DOUBLE_INTEGRATOR["B"],
        Q=np.eye(2),
        R=[[0.01]],
    )


@pytest.fixture
def box_support():
    """Disturbance support |w_i| <= 0.6."""
    return HPolytope.box(-0.6, 0.6, 2)


@pytest.fixture
def bimodal_cfg(double_integrator, box_support):
    """Controller for the bimodal double-integrator study."""
    return MpcConfig.build(
        double_integrator,
        N=9,
        X=HPolytope(np.array([[0.0, 1.0]]), np.array([2.0])),
        U=HPolytope.box(-5.0, 5.0, 1),
        W=box_support,
        eps=0.2,
    )


@pytest.fixture
def bimodal_samples():
    """200 samples near (0.3, 0.3) and 200 near (-0.3, -0.3)."""
    rng = np.random.default_rng(3)
    centre = np.array([0.3, 0.3])
    upper = centre + 0.03 * rng.standard_normal((200, 2))
    lower = -centre + 0.03 * rng.standard_normal((200, 2))
    return np.clip(np.vstack([upper, lower]), -0.6, 0.6)
