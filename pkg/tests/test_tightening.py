"""
Tests for ambiguity sets, CVaR back-offs and the grid oracle
"""
import json

import numpy as np
import pytest

import sys
sys.path.insert(0, '.')

from src.core.constants import DOMINANCE_TOL
from src.core.exceptions import ConfigError, InvalidRiskError
from src.geometry.polytope import HPolytope
from src.learning.mixture import MixtureEstimate
from src.optimization import ConeStatus, NonNegCone, PsdCone, solve
from src.tightening import (
    AmbiguitySet,
    build_sdp,
    check_risk,
    empirical_cvar,
    mixture_from_json,
    mixture_to_json,
    solve_eta,
    solve_eta_with_fallback,
    wc_cvar_oracle,
    worst_case_eta,
)


def _random_mixture(rng, dim, max_spread):
    """One to three components, means within max_spread, std between 0.1 and 0.2."""
    m = int(rng.integers(1, 4))
    gamma = rng.dirichlet(np.ones(m))
    mu = rng.uniform(-max_spread, max_spread, size=(m, dim))
    Sigma = []
    for _ in range(m):
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        S = Q @ np.diag(rng.uniform(0.01, 0.04, size=dim)) @ Q.T
        Sigma.append(0.5 * (S + S.T))
    return MixtureEstimate(gamma=gamma, mu=mu, Sigma=np.array(Sigma))


class TestAmbiguitySet:
    """Test suite for ambiguity set construction and the mixture file."""

    def setup_method(self):
        """Setup test fixtures."""
        self.W = HPolytope.box(-0.6, 0.6, 2)
        self.mix = MixtureEstimate(
            gamma=[0.5, 0.5],
            mu=[[0.3, 0.3], [-0.3, -0.3]],
            Sigma=[0.01 * np.eye(2), 0.01 * np.eye(2)],
        )

    def test_means_must_lie_in_support(self):
        """Test a mean outside W is rejected."""
        with pytest.raises(ConfigError):
            AmbiguitySet(self.W, MixtureEstimate.single([0.0, 0.7], 0.01 * np.eye(2)))

    def test_support_must_contain_origin(self):
        """Test a shifted support is rejected."""
        with pytest.raises(ConfigError):
            AmbiguitySet(HPolytope.box(0.1, 0.6, 2), MixtureEstimate.single([0.3, 0.3], 0.01 * np.eye(2)))

    def test_origin_on_boundary_is_rejected(self):
        """Test a support touching the origin needs the degenerate switch."""
        W = HPolytope.box([0.0, -0.6], [0.6, 0.6])
        mix = MixtureEstimate.single([0.1, 0.0], 0.01 * np.eye(2))
        with pytest.raises(ConfigError, match="interior"):
            AmbiguitySet(W, mix)
        assert AmbiguitySet(W, mix, degenerate_support=True).dim == 2

    def test_json_round_trip(self):
        """Test mixture JSON keeps every float exactly."""
        back = mixture_from_json(mixture_to_json(self.mix))
        np.testing.assert_array_equal(back.gamma, self.mix.gamma)
        np.testing.assert_array_equal(back.mu, self.mix.mu)
        np.testing.assert_array_equal(back.Sigma, self.mix.Sigma)

    def test_json_file(self, tmp_path):
        """Test reading a mixture from a file path."""
        path = tmp_path / "mix.json"
        path.write_text(mixture_to_json(self.mix))
        assert mixture_from_json(path).m == 2

    def test_json_errors(self, tmp_path):
        """Test malformed, incomplete and missing mixture files."""
        with pytest.raises(ConfigError, match="line"):
            mixture_from_json('{"gamma": [1.0],\n "mu": }')
        with pytest.raises(ConfigError, match="Sigma"):
            mixture_from_json(json.dumps({"gamma": [1.0], "mu": [[0.0]]}))
        with pytest.raises(ConfigError):
            mixture_from_json(tmp_path / "missing.json")


class TestCvarSdp:
    """Test suite for the per-row back-off programs."""

    def setup_method(self):
        """Setup test fixtures."""
        self.W = HPolytope.box(-0.6, 0.6, 2)
        self.H = np.array([[0.0, 1.0]])
        self.bimodal = AmbiguitySet(self.W, MixtureEstimate(
            gamma=[0.5, 0.5],
            mu=[[0.3, 0.3], [-0.3, -0.3]],
            Sigma=[0.01 * np.eye(2), 0.01 * np.eye(2)],
        ))

    def test_program_structure(self):
        """Test cone blocks and row counts of a two-component program."""
        prog = build_sdp(self.bimodal, self.H[0], 0.2)
        assert len(prog.cones) == 1 + 2 * 5
        assert isinstance(prog.cones[0], NonNegCone)
        assert [type(c) for c in prog.cones[1:6]] == [PsdCone, PsdCone, PsdCone, NonNegCone, NonNegCone]
        assert prog.A.shape[0] == 1 + 2 * (6 + 6 + 3 + 4 + 4)
        assert prog.q[0] == 1.0

        with_beta = build_sdp(self.bimodal, self.H[0], 0.2, beta_nonneg=True)
        assert len(with_beta.cones) == len(prog.cones) + 1

    def test_risk_level_validation(self):
        """Test risk levels outside (0, 1]."""
        assert check_risk(1.0) == 1.0
        for eps in (0.0, -0.1, 1.5):
            with pytest.raises(InvalidRiskError):
                check_risk(eps)
        with pytest.raises(InvalidRiskError):
            solve_eta(self.bimodal, self.H, 0.0)

    def test_worst_case_eta(self):
        """Test eta0 is the support of W along each row."""
        np.testing.assert_allclose(worst_case_eta(self.W, [[0.0, 1.0], [1.0, 1.0]]), [0.6, 1.2])

    def test_risk_one_gives_the_mean(self):
        """Test eps = 1 reduces CVaR to the expectation H mu."""
        amb = AmbiguitySet(self.W, MixtureEstimate.single([0.0, 0.1], 0.01 * np.eye(2)))
        result = solve_eta(amb, self.H, 1.0)
        assert result.eta[0] == pytest.approx(0.1, abs=1e-5)
        assert result.status == ["Optimal"]

    def test_scalar_mean_variance_bound(self):
        """Test mean 0, variance 0.04, eps 0.2 gives the two-point bound 0.4."""
        W = HPolytope.box(-0.6, 0.6, 1)
        amb = AmbiguitySet(W, MixtureEstimate.single([0.0], [[0.04]]))
        eta = solve_eta(amb, [[1.0]], 0.2).eta[0]
        assert eta == pytest.approx(0.4, abs=1e-4)

    def test_matches_grid_oracle(self):
        """Test the SDP back-off against the brute-force oracle in one dimension."""
        W = HPolytope.box(-0.6, 0.6, 1)
        amb = AmbiguitySet(W, MixtureEstimate.single([0.0], [[0.04]]))
        eta = solve_eta(amb, [[1.0]], 0.2).eta[0]
        assert eta == pytest.approx(wc_cvar_oracle(amb, [1.0], 0.2), abs=2e-3)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_scalar_fixtures_match_oracle(self, seed):
        """Test random one-dimensional mixtures, rows and risk levels against the oracle."""
        rng = np.random.default_rng(100 + seed)
        W = HPolytope.box(-0.6, 0.6, 1)
        amb = AmbiguitySet(W, _random_mixture(rng, 1, max_spread=0.4))
        row = np.array([rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)])
        eps = float(rng.uniform(0.05, 0.5))

        eta = solve_eta(amb, [row], eps).eta[0]
        eta0 = worst_case_eta(W, [row])[0]
        assert eta <= eta0 + DOMINANCE_TOL
        assert eta == pytest.approx(np.clip(wc_cvar_oracle(amb, row, eps), 0.0, eta0), abs=2e-3)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(5))
    def test_random_planar_fixtures_match_oracle(self, seed):
        """Test random two-dimensional mixtures and rows against the oracle."""
        rng = np.random.default_rng(200 + seed)
        amb = AmbiguitySet(self.W, _random_mixture(rng, 2, max_spread=0.3))
        angle = rng.uniform(0.0, 2.0 * np.pi)
        row = np.array([np.cos(angle), np.sin(angle)])
        eps = float(rng.uniform(0.05, 0.5))

        eta = solve_eta(amb, [row], eps).eta[0]
        eta0 = worst_case_eta(self.W, [row])[0]
        assert eta <= eta0 + DOMINANCE_TOL
        oracle = wc_cvar_oracle(amb, row, eps, grid_density=141)
        assert eta == pytest.approx(np.clip(oracle, 0.0, eta0), abs=2e-3)

    def test_sdp_optimum_dominated_by_worst_case(self, caplog):
        """Test the unclamped SDP optimum never exceeds eta0 and no clamp is logged."""
        row = self.H[0]
        eta0 = worst_case_eta(self.W, self.H)[0]
        for eps in (0.05, 0.2, 0.5):
            sol = solve(build_sdp(self.bimodal, row, eps))
            assert sol.status == ConeStatus.OPTIMAL
            assert sol.x[0] <= eta0 + DOMINANCE_TOL
        with caplog.at_level("WARNING", logger="src.tightening.cvar_sdp"):
            solve_eta(self.bimodal, self.H, 0.05)
        assert "exceeds worst-case back-off" not in caplog.text

    def test_bounded_by_worst_case(self):
        """Test 0 <= eta <= eta0."""
        eta = solve_eta(self.bimodal, self.H, 0.2).eta
        assert np.all(eta >= 0.0)
        assert np.all(eta <= worst_case_eta(self.W, self.H) + 1e-12)

    def test_monotone_in_risk(self):
        """Test a smaller risk level never needs less back-off over eps = 0.05 .. 0.5."""
        sweep = np.round(np.arange(0.05, 0.501, 0.05), 2)
        values = [solve_eta(self.bimodal, self.H, eps).eta[0] for eps in sweep]
        eta0 = worst_case_eta(self.W, self.H)[0]
        assert all(v <= eta0 + DOMINANCE_TOL for v in values)
        assert all(later <= earlier + 1e-6 for earlier, later in zip(values, values[1:]))

    def test_monotone_in_covariance(self):
        """Test shrinking covariances never increases the back-off."""
        tight = AmbiguitySet(self.W, self.bimodal.mix.scaled(0.25))
        assert solve_eta(tight, self.H, 0.2).eta[0] <= solve_eta(self.bimodal, self.H, 0.2).eta[0] + 1e-6

    def test_mixture_beats_global_moments(self):
        """Test the component split never needs more back-off than pooled moments."""
        mix = self.bimodal.mix
        pooled_second = np.einsum("j,jik->ik", mix.gamma, mix.second_moments())
        mean = mix.mean()
        pooled = AmbiguitySet(self.W, MixtureEstimate.single(mean, pooled_second - np.outer(mean, mean)))
        assert solve_eta(self.bimodal, self.H, 0.2).eta[0] <= solve_eta(pooled, self.H, 0.2).eta[0] + 1e-6

    def test_covers_a_member_distribution(self):
        """Test eta bounds the CVaR of a two-point distribution in the set."""
        W = HPolytope.box(-0.6, 0.6, 1)
        amb = AmbiguitySet(W, MixtureEstimate.single([0.0], [[0.04]]))
        eta = solve_eta(amb, [[1.0]], 0.2).eta[0]
        samples = np.array([-0.2] * 50 + [0.2] * 50)
        assert empirical_cvar(samples - eta, 0.2) <= 1e-6

    def test_degenerate_row_is_skipped(self):
        """Test a row with zero worst-case back-off is not solved."""
        flat = HPolytope.box([-0.6, 0.0], [0.6, 0.0])
        amb = AmbiguitySet(
            flat, MixtureEstimate.single([0.0, 0.0], 0.01 * np.eye(2)), degenerate_support=True
        )
        result = solve_eta(amb, self.H, 0.2)
        assert result.status == ["Skipped"]
        assert result.eta[0] == 0.0

    def test_point_mass_on_boundary(self):
        """Test a point mass at the edge of W needs the full back-off."""
        amb = AmbiguitySet(self.W, MixtureEstimate.single([0.0, 0.6], 1e-8 * np.eye(2)))
        result = solve_eta_with_fallback(amb, self.H, 0.2)
        assert result.eta[0] == pytest.approx(0.6, abs=1e-4)

    def test_result_serializes(self):
        """Test TighteningResult.to_dict."""
        data = solve_eta(self.bimodal, self.H, 0.2).to_dict()
        assert set(data) == {"eta", "status", "dual_objective", "fallback_rows"}
        assert data["fallback_rows"] == []


class TestEmpiricalCvar:
    """Test suite for the sample CVaR."""

    def test_uniform_integers(self):
        """Test CVaR_0.1 of 0..99 is the mean of the top ten."""
        assert empirical_cvar(np.arange(100), 0.1) == pytest.approx(94.5)

    def test_risk_one_is_the_mean(self):
        """Test eps = 1 gives the sample mean."""
        samples = np.array([1.0, 2.0, 6.0])
        assert empirical_cvar(samples, 1.0) == pytest.approx(3.0)

    def test_empty_sample(self):
        """Test an empty sample is rejected."""
        with pytest.raises(ConfigError):
            empirical_cvar([], 0.5)
