"""
Tests for polytopes, tube offsets and invariant sets
"""
import numpy as np
import pytest

import sys
sys.path.insert(0, '.')

from src.core.constants import DOUBLE_INTEGRATOR_K, DOUBLE_INTEGRATOR_PHI
from src.core.exceptions import ConfigError, DimensionMismatchError, EmptySetError
from src.control.mpc import worst_case_sets
from src.geometry import (
    HPolytope,
    error_tube_offsets,
    input_tube_offsets,
    minimal_rpi_support,
    mrpi,
    row_supports,
    sampled_invariance_violations,
    tighten_rows,
)
from tests.oracles import random_bounded_polytope, rollout_errors, support_oracle


class TestHPolytope:
    """Test suite for the H-polytope type."""

    def setup_method(self):
        """Setup test fixtures."""
        self.W = HPolytope.box(-0.6, 0.6, 2)

    def test_box_support(self):
        """Test support values of a box."""
        assert self.W.support([0.0, 1.0]) == pytest.approx(0.6)
        assert self.W.support([1.0, 1.0]) == pytest.approx(1.2)
        assert self.W.support([0.0, 0.0]) == 0.0

    def test_support_matches_vertex_enumeration(self):
        """Test LP support against the vertex oracle on random polytopes."""
        rng = np.random.default_rng(11)
        for _ in range(20):
            C, d = random_bounded_polytope(rng, 2, 7)
            P = HPolytope(C, d)
            a = rng.normal(size=2)
            assert P.support(a) == pytest.approx(support_oracle(C, d, a), abs=1e-7)

    def test_support_positively_homogeneous(self):
        """Test h(lambda a) = lambda h(a)."""
        rng = np.random.default_rng(5)
        C, d = random_bounded_polytope(rng, 3, 9)
        P = HPolytope(C, d)
        a = rng.normal(size=3)
        for lam in (0.1, 2.0, 7.5):
            assert P.support(lam * a) == pytest.approx(lam * P.support(a), abs=1e-8)

    def test_contains(self):
        """Test membership with and without tolerance."""
        assert self.W.contains([0.0, 0.0])
        assert not self.W.contains([0.0, 0.61])
        assert self.W.contains([0.0, 0.61], tol=0.02)

    def test_contains_points_agrees_with_contains(self):
        """Test batch membership equals pointwise membership."""
        rng = np.random.default_rng(2)
        X = rng.uniform(-1, 1, size=(1000, 2))
        batch = self.W.contains_points(X)
        single = np.array([self.W.contains(x) for x in X])
        np.testing.assert_array_equal(batch, single)

    def test_dimension_checks(self):
        """Test mismatched rows and directions are rejected."""
        with pytest.raises(DimensionMismatchError):
            HPolytope(np.eye(2), np.ones(3))
        with pytest.raises(DimensionMismatchError):
            self.W.support([1.0, 0.0, 0.0])

    def test_tighten_rows(self):
        """Test row tightening shifts the right-hand side."""
        X = HPolytope(np.array([[0.0, 1.0]]), np.array([2.0]))
        assert tighten_rows(X, [0.6]).d[0] == pytest.approx(1.4)
        np.testing.assert_array_equal(tighten_rows(X, [0.0]).d, X.d)
        with pytest.raises(ConfigError):
            tighten_rows(X, [-0.1])

    def test_tightening_absorbs_offsets(self):
        """Test x in P - off and w with C_i w <= off_i give x + w in P."""
        rng = np.random.default_rng(8)
        P = HPolytope.box(-1.0, 1.0, 2)
        offsets = row_supports(self.W, P.C) * 0.5
        inner = tighten_rows(P, offsets)
        small = HPolytope.box(-0.3, 0.3, 2)
        for _ in range(500):
            x = rng.uniform(-0.7, 0.7, size=2)
            w = rng.uniform(-0.3, 0.3, size=2)
            if inner.contains(x) and small.contains(w):
                assert P.contains(x + w, tol=1e-12)

    def test_box_pontryagin_difference(self):
        """Test box minus box equals interval arithmetic."""
        X = HPolytope.box([-2.0, -1.0], [3.0, 1.0])
        lo, hi = tighten_rows(X, row_supports(self.W, X.C)).as_box()
        np.testing.assert_allclose(lo, [-1.4, -0.4])
        np.testing.assert_allclose(hi, [2.4, 0.4])

    def test_text_round_trip(self):
        """Test the polytope text format."""
        P = HPolytope(np.array([[1.0, 0.25], [-0.1, 1.0 / 3.0]]), np.array([0.7, 1.1]))
        Q = HPolytope.from_text(P.to_text())
        np.testing.assert_array_equal(P.C, Q.C)
        np.testing.assert_array_equal(P.d, Q.d)

    def test_text_errors_name_the_line(self):
        """Test parse errors carry the line number."""
        with pytest.raises(ConfigError, match="line 2"):
            HPolytope.from_text("1 0 <= 1\n0 1 1\n")

    def test_emptiness(self):
        """Test empty and nonempty polytopes."""
        assert not self.W.is_empty()
        assert HPolytope.box(1.0, -1.0, 1).is_empty()
        P = HPolytope(np.array([[1.0, 1.0], [-1.0, -1.0]]), np.array([-1.0, -1.0]))
        assert P.is_empty()

    def test_boundedness(self):
        """Test a half-plane is unbounded and a box is bounded."""
        assert self.W.is_bounded()
        assert not HPolytope(np.array([[0.0, 1.0]]), np.array([2.0])).is_bounded()

    def test_chebyshev_center(self):
        """Test the inscribed ball of a box."""
        centre, radius = HPolytope.box([0.0, 0.0], [4.0, 2.0]).chebyshev_center()
        assert radius == pytest.approx(1.0, abs=1e-7)
        assert centre[1] == pytest.approx(1.0, abs=1e-7)

    def test_remove_redundant(self):
        """Test duplicate and implied rows are dropped."""
        C = np.vstack([np.eye(2), -np.eye(2), [[1.0, 1.0]], [[2.0, 0.0]]])
        d = np.array([1.0, 1.0, 1.0, 1.0, 5.0, 2.0])
        P = HPolytope(C, d).remove_redundant()
        assert P.n_rows == 4
        for a in ([1.0, 1.0], [1.0, -2.0]):
            assert P.support(a) == pytest.approx(HPolytope(C, d).support(a), abs=1e-8)
        with pytest.raises(EmptySetError):
            empty = HPolytope.box(1.0, -1.0, 2)
            empty.intersect(HPolytope(np.array([[1.0, 1.0]]), np.array([0.0]))).remove_redundant()

    def test_validate_support(self):
        """Test supports must be bounded and contain the origin."""
        self.W.validate_support()
        HPolytope.box(0.0, 0.0, 2).validate_support(allow_degenerate=True)
        with pytest.raises(ConfigError):
            HPolytope.box(0.0, 0.0, 2).validate_support()
        with pytest.raises(ConfigError):
            HPolytope.box([0.0, -0.6], [0.6, 0.6]).validate_support()
        with pytest.raises(ConfigError):
            HPolytope.box(0.1, 0.6, 2).validate_support()
        with pytest.raises(ConfigError):
            HPolytope(np.array([[0.0, 1.0]]), np.array([1.0])).validate_support()

    def test_dict_round_trip(self):
        """Test to_dict/from_dict."""
        Q = HPolytope.from_dict(self.W.to_dict())
        np.testing.assert_array_equal(Q.C, self.W.C)
        np.testing.assert_array_equal(Q.d, self.W.d)


class TestTubeOffsets:
    """Test suite for error and input tube offsets."""

    def setup_method(self):
        """Setup test fixtures."""
        self.W = HPolytope.box(-0.6, 0.6, 2)
        self.Phi = np.array(DOUBLE_INTEGRATOR_PHI)
        self.K = np.array([DOUBLE_INTEGRATOR_K])
        self.H = np.array([[0.0, 1.0]])

    def test_nilpotent_loop_has_no_error_offsets(self):
        """Test Phi = 0 gives zero offsets."""
        zeta = error_tube_offsets(np.zeros((2, 2)), self.W, self.H, 9)
        assert zeta.shape == (10, 1)
        assert np.all(zeta == 0.0)

    def test_first_propagated_offset(self):
        """Test zeta_2 for the published closed loop."""
        zeta = error_tube_offsets(self.Phi, self.W, self.H, 9)
        assert zeta[0, 0] == 0.0
        assert zeta[1, 0] == 0.0
        assert zeta[2, 0] == pytest.approx(0.5922, abs=1e-10)
        assert np.all(np.diff(zeta[:, 0]) >= 0.0)

    def test_prefix_stability(self):
        """Test horizon N offsets extend the horizon N-1 ones."""
        long = error_tube_offsets(self.Phi, self.W, self.H, 9)
        short = error_tube_offsets(self.Phi, self.W, self.H, 8)
        np.testing.assert_allclose(long[:9], short, atol=1e-14)

    def test_offsets_bound_sampled_errors(self):
        """Test H Phi e_l never exceeds zeta_{l+1} on sampled error trajectories."""
        N = 9
        zeta = error_tube_offsets(self.Phi, self.W, self.H, N)
        rng = np.random.default_rng(4)
        E = rollout_errors(self.Phi, rng, lambda r: r.uniform(-0.6, 0.6, size=2), N - 1, 10_000)
        for l in range(N):
            propagated = E[:, l] @ self.Phi.T @ self.H.T
            assert np.all(propagated <= zeta[l + 1] + 1e-12)

    def test_input_offsets(self):
        """Test delta_0 = 0 and delta_1 = h_W(K' G_i')."""
        G = np.array([[1.0], [-1.0]])
        delta = input_tube_offsets(self.Phi, self.K, self.W, G, 3)
        assert delta.shape == (3, 2)
        assert np.all(delta[0] == 0.0)
        np.testing.assert_allclose(delta[1], [1.1922, 1.1922], atol=1e-10)

    def test_zero_gain_has_no_input_offsets(self):
        """Test K = 0 gives zero input offsets."""
        G = np.array([[1.0], [-1.0]])
        delta = input_tube_offsets(self.Phi, np.zeros((1, 2)), self.W, G, 5)
        assert np.all(delta == 0.0)


class TestInvariantSets:
    """Test suite for MRPI and minimal RPI computations."""

    def test_dead_loop_returns_base(self):
        """Test Phi = 0, Dmap = 0 returns the base set."""
        base = HPolytope.box(-1.0, 1.0, 2)
        W = HPolytope.box(-0.1, 0.1, 2)
        Omega = mrpi(np.zeros((2, 2)), np.zeros((2, 2)), W, base)
        for a in ([1.0, 0.0], [0.0, -1.0], [1.0, 1.0]):
            assert Omega.support(a) == pytest.approx(base.support(a), abs=1e-8)

    def test_scalar_base_already_invariant(self):
        """Test z+ = 0.5 z + 0.1 w on |z| <= 1."""
        base = HPolytope.box(-1.0, 1.0, 1)
        Omega = mrpi(np.array([[0.5]]), np.array([[0.1]]), HPolytope.box(-1.0, 1.0, 1), base)
        assert Omega.support([1.0]) == pytest.approx(1.0, abs=1e-9)
        assert Omega.support([-1.0]) == pytest.approx(1.0, abs=1e-9)

    def test_terminal_set_is_robustly_invariant(self, bimodal_cfg):
        """Test sampled robust invariance of the worst-case terminal set."""
        Zf = worst_case_sets(bimodal_cfg).Zf
        Phi = bimodal_cfg.regulator.Phi
        Dmap = np.linalg.matrix_power(Phi, bimodal_cfg.N)
        rng = np.random.default_rng(0)
        assert sampled_invariance_violations(Zf, Phi, Dmap, bimodal_cfg.W, rng, samples=10_000) == 0

    def test_minimal_rpi_of_dead_loop_is_w(self):
        """Test Phi = 0 gives the support of W."""
        W = HPolytope.box(-0.6, 0.6, 2)
        bound = minimal_rpi_support(np.zeros((2, 2)), W, [[1.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(bound, [0.6, 1.2], atol=1e-12)

    def test_minimal_rpi_scalar_series(self):
        """Test Phi = 0.5, |w| <= 1 bounds R_inf = [-2, 2]."""
        W = HPolytope.box(-1.0, 1.0, 1)
        bound = minimal_rpi_support(np.array([[0.5]]), W, [[1.0], [-1.0]])
        np.testing.assert_allclose(bound, [2.0, 2.0], atol=1e-12)
