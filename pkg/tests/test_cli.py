"""
Tests for scenario files and the drmpc command line
"""
import io
import json
import logging

import numpy as np
import pytest

import sys
sys.path.insert(0, '.')

from src.core.exceptions import ConfigError
from src.core.logging import resolve_level, setup_logging
from src.cli import build_parser, load_config, main, parse_config
from src.control.mpc import TerminalMode
from src.geometry.polytope import HPolytope
from src.learning.mixture import MixtureEstimate
from src.simulation.artifacts import write_samples_csv
from src.simulation.closed_loop import ControllerMode
from src.tightening.ambiguity import mixture_to_json

SMALL_SCENARIO = """
name = "small"

[plant]
A = [[1.0, 1.0], [0.0, 1.0]]
B = [[0.5], [1.0]]
Q = [[1.0, 0.0], [0.0, 1.0]]
R = [[0.01]]

[controller]
N = 5
eps = 0.2

[constraints.X]
C = [[0.0, 1.0]]
d = [2.0]

[constraints.U]
box = 5.0

[constraints.W]
box = 0.1

[[disturbance.historical.components]]
weight = 1.0
mean = [0.0, 0.0]
std = 0.05

[simulation]
x0 = [{x0}, 0.0]
T_s = 2
runs = 1
seed = 3
historical_samples = 10
"""


def _small(tmp_path, x0="-1.0"):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_SCENARIO.format(x0=x0))
    return path


class TestScenarioFiles:
    """Test suite for scenario file parsing."""

    @pytest.mark.parametrize("name", ["example_5_1", "example_5_2", "example_5_3"])
    def test_bundled_scenarios_build(self, configs_dir, name):
        """Test each bundled scenario validates and builds."""
        cfg = load_config(configs_dir / f"{name}.cfg")
        scn = cfg.scenario()
        assert scn.name == name
        assert scn.T_s == 20

    def test_bundled_scenario_values(self, configs_dir):
        """Test the four-state scenario settings."""
        scn = load_config(configs_dir / "example_5_3.cfg").scenario()
        assert scn.cfg.N == 6
        assert scn.cfg.plant.n == 4
        assert scn.cfg.terminal_mode == TerminalMode.OFFLINE_FALLBACK
        assert scn.runs == 1

    def test_unknown_key(self, tmp_path):
        """Test misspelled keys are rejected."""
        text = SMALL_SCENARIO.format(x0="-1.0").replace("N = 5", "N = 5\nhorizon = 5")
        with pytest.raises(ConfigError, match="horizon"):
            parse_config(text)

    def test_malformed_toml(self):
        """Test TOML syntax errors carry the position."""
        with pytest.raises(ConfigError, match="line"):
            parse_config('name = "x"\n[plant\n')

    def test_invalid_values(self, tmp_path):
        """Test schema violations and domain errors become ConfigError."""
        with pytest.raises(ConfigError):
            parse_config(SMALL_SCENARIO.format(x0="-1.0").replace("eps = 0.2", "eps = 1.5"))
        cfg = parse_config(SMALL_SCENARIO.format(x0="-1.0"))
        assert cfg.scenario().historical.components[0].std.tolist() == [0.05, 0.05]
        with pytest.raises(ConfigError):
            parse_config(SMALL_SCENARIO.format(x0="-1.0, 0.0")).scenario()

    def test_overrides(self, tmp_path):
        """Test command-line overrides replace file values."""
        cfg = load_config(_small(tmp_path)).overridden(
            runs=3, seed=9, controller_mode="NoLearning", terminal_mode="offline", tol=1e-7,
            out=tmp_path / "out",
        )
        assert cfg.simulation.runs == 3
        assert cfg.simulation.seed == 9
        assert cfg.simulation.controller_mode == ControllerMode.NO_LEARNING
        assert cfg.controller.terminal_mode == TerminalMode.OFFLINE_FALLBACK
        assert cfg.solver.build().tol == 1e-7
        assert cfg.output.dir == str(tmp_path / "out")
        with pytest.raises(ConfigError):
            cfg.overridden(horizon=3)

    def test_missing_file(self, tmp_path):
        """Test an unreadable scenario file."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")


class TestCommands:
    """Test suite for the drmpc subcommands."""

    def test_help_lists_flags(self, capsys):
        """Test sim --help names its options."""
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["sim", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--config", "--runs", "--seed", "--mode", "--terminal", "--out", "--tol"):
            assert flag in text

    def test_lqr(self, tmp_path, configs_dir):
        """Test lqr writes the gain and residuals."""
        out = tmp_path / "lqr.json"
        assert main(["lqr", "--config", str(configs_dir / "example_5_1.cfg"), "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        np.testing.assert_allclose(data["K"][0], [-0.6609, -1.3261], atol=5e-4)
        assert data["riccati_residual"] < 1e-8

    def test_tighten_point_mass(self, tmp_path, configs_dir):
        """Test a point mass on the boundary of W needs the full back-off."""
        mix = tmp_path / "mix.json"
        mix.write_text(mixture_to_json(MixtureEstimate.single([0.0, 0.6], 1e-8 * np.eye(2))))
        out = tmp_path / "eta.json"
        code = main([
            "tighten", "--mixture", str(mix), "--config", str(configs_dir / "example_5_1.cfg"),
            "--fallback", "--out", str(out),
        ])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["eta"][0] == pytest.approx(0.6, abs=1e-4)
        assert data["eta0"] == [0.6]

    def test_tighten_from_polytope_files(self, tmp_path):
        """Test tighten with explicit support and rows."""
        (tmp_path / "W.txt").write_text(HPolytope.box(-0.6, 0.6, 2).to_text())
        (tmp_path / "X.txt").write_text("0 1 <= 2\n")
        mix = tmp_path / "mix.json"
        mix.write_text(mixture_to_json(MixtureEstimate.single([0.0, 0.1], 0.01 * np.eye(2))))
        out = tmp_path / "eta.json"
        code = main([
            "tighten", "--mixture", str(mix), "--support", str(tmp_path / "W.txt"),
            "--rows", str(tmp_path / "X.txt"), "--eps", "1.0", "--out", str(out),
        ])
        assert code == 0
        assert json.loads(out.read_text())["eta"][0] == pytest.approx(0.1, abs=1e-5)

    def test_tighten_needs_a_support(self, tmp_path):
        """Test tighten without --config or --support fails with exit code 1."""
        mix = tmp_path / "mix.json"
        mix.write_text(mixture_to_json(MixtureEstimate.single([0.0, 0.0], np.eye(2))))
        assert main(["tighten", "--mixture", str(mix)]) == 1

    def test_learn(self, tmp_path, configs_dir, bimodal_samples):
        """Test learn finds both clusters of a sample file."""
        samples = write_samples_csv(bimodal_samples, tmp_path / "w.csv")
        out = tmp_path / "mix.json"
        code = main([
            "learn", "--samples", str(samples), "--config", str(configs_dir / "example_5_1.cfg"),
            "--out", str(out),
        ])
        assert code == 0
        mix = MixtureEstimate.from_dict(json.loads(out.read_text()))
        assert np.sum(mix.gamma >= 0.4) == 2

    def test_mrpi(self, tmp_path):
        """Test mrpi writes a terminal set in polytope text format."""
        out = tmp_path / "Zf.txt"
        assert main(["mrpi", "--config", str(_small(tmp_path)), "--out", str(out)]) == 0
        Zf = HPolytope.from_text(out.read_text())
        assert Zf.dim == 2
        assert Zf.contains([0.0, 0.0])

    def test_sim(self, tmp_path):
        """Test sim writes run traces and a summary."""
        out = tmp_path / "results"
        assert main(["sim", "--config", str(_small(tmp_path)), "--out", str(out)]) == 0
        assert (out / "small_0.csv").exists()
        summary = json.loads((out / "small_summary.json").read_text())
        assert summary["runs"] == 1
        assert summary["mode"] == "OnlineLearning"

    def test_sim_all_modes(self, tmp_path):
        """Test sim --mode all compares the three controllers."""
        out = tmp_path / "results"
        assert main(["sim", "--config", str(_small(tmp_path)), "--mode", "all", "--out", str(out)]) == 0
        comparison = json.loads((out / "small_comparison_summary.json").read_text())
        assert set(comparison["modes"]) == {m.value for m in ControllerMode}
        assert "cost_reduction_vs_global_moment_pct" in comparison

    def test_sim_infeasible_start(self, tmp_path):
        """Test an unreachable x0 exits with code 2."""
        path = _small(tmp_path, x0="-50.0")
        assert main(["sim", "--config", str(path), "--out", str(tmp_path / "r")]) == 2

    def test_sim_bad_config(self, tmp_path):
        """Test an invalid scenario file exits with code 1."""
        path = tmp_path / "bad.cfg"
        path.write_text('name = "bad"\n')
        assert main(["sim", "--config", str(path)]) == 1


class TestLogging:
    """Test suite for the package logging setup."""

    def teardown_method(self):
        """Restore the default handler."""
        setup_logging("INFO")

    def test_resolve_level(self):
        """Test level names are case-insensitive and unknown names are rejected."""
        assert resolve_level("debug") == logging.DEBUG
        assert resolve_level(logging.WARNING) == logging.WARNING
        with pytest.raises(ConfigError):
            resolve_level("loud")

    def test_setup_replaces_handler(self):
        """Test repeated setup keeps a single handler and honours the level."""
        stream = io.StringIO()
        setup_logging("INFO")
        logger = setup_logging("WARNING", stream=stream)
        assert sum(getattr(h, "_drmpc", False) for h in logger.handlers) == 1

        logging.getLogger("src.control.mpc").info("hidden")
        logging.getLogger("src.control.mpc").warning("shown")
        text = stream.getvalue()
        assert "shown" in text
        assert "hidden" not in text
