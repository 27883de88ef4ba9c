"""
DRMPC - Command-Line Interface

Subcommands:
    sim      run a scenario file in closed loop, write CSV traces and summaries
    tighten  back-offs of a mixture ambiguity set
    learn    DPMM mixture from a CSV of disturbance samples
    mrpi     worst-case terminal set of a scenario, in polytope text format
    lqr      LQR regulator of a scenario's plant

Exit codes: 0 success, 1 configuration or input error, 2 initial state infeasible.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.core.config import settings
from src.core.exceptions import ConfigError, DrmpcError, InitialInfeasibleError
from src.core.logging import setup_logging
from src.cli.config import CliConfig, load_config
from src.control.mpc import TerminalMode, worst_case_sets
from src.control.regulator import lyapunov_residual, riccati_residual, synthesize
from src.geometry.polytope import HPolytope
from src.learning.dpmm import NwPrior, OnlineDpmm
from src.optimization.conic_solver import SolverSettings
from src.simulation.artifacts import mode_comparison, read_samples_csv, run_scenario, write_summary
from src.simulation.closed_loop import ControllerMode
from src.simulation.metrics import paired_cost_reduction
from src.tightening.ambiguity import AmbiguitySet, mixture_from_json
from src.tightening.cvar_sdp import solve_eta, solve_eta_with_fallback, worst_case_eta

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2

ALL_MODES = "all"


def _emit(data: Dict[str, Any], out: Optional[str]) -> None:
    text = json.dumps(data, indent=2)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
        logger.info(f"wrote {path}")
    else:
        print(text)


def _read_polytope(path: str) -> HPolytope:
    try:
        return HPolytope.from_text(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e


# =============================================================================
# COMMANDS
# =============================================================================

def cmd_sim(args: argparse.Namespace) -> int:
    cfg: CliConfig = load_config(args.config).overridden(
        runs=args.runs,
        seed=args.seed,
        controller_mode=None if args.mode == ALL_MODES else args.mode,
        terminal_mode=args.terminal,
        tol=args.tol,
        out=args.out,
    )
    scn = cfg.scenario()
    out_dir = cfg.output.dir or settings.output_dir

    if args.mode != ALL_MODES:
        _, summary = run_scenario(scn, out_dir)
        print(json.dumps(summary.to_dict(), indent=2))
        return EXIT_OK

    logs, summaries = {}, []
    for mode in ControllerMode:
        variant = replace(scn.with_mode(mode), name=f"{scn.name}_{mode.value}")
        logs[mode], summary = run_scenario(variant, out_dir)
        summaries.append(summary)
    comparison: Dict[str, Any] = {"modes": mode_comparison(summaries)}
    comparison["cost_reduction_vs_global_moment_pct"] = paired_cost_reduction(
        logs[ControllerMode.GLOBAL_MOMENT], logs[ControllerMode.ONLINE_LEARNING]
    )
    comparison["cost_reduction_vs_no_learning_pct"] = paired_cost_reduction(
        logs[ControllerMode.NO_LEARNING], logs[ControllerMode.ONLINE_LEARNING]
    )
    write_summary(comparison, out_dir, f"{scn.name}_comparison")
    print(json.dumps(comparison, indent=2))
    return EXIT_OK


def cmd_tighten(args: argparse.Namespace) -> int:
    if args.config:
        mpc = load_config(args.config).mpc_config()
        W, H, eps = mpc.W, mpc.H, mpc.eps
        beta_nonneg = mpc.beta_nonneg
    else:
        if not (args.support and args.rows and args.eps is not None):
            raise ConfigError("tighten needs --config, or --support, --rows and --eps")
        W, H, eps = _read_polytope(args.support), _read_polytope(args.rows).C, args.eps
        beta_nonneg = False
    if args.eps is not None:
        eps = args.eps

    amb = AmbiguitySet(W, mixture_from_json(args.mixture))
    solver = solve_eta_with_fallback if args.fallback else solve_eta
    opts = None
    if args.tol is not None:
        opts = replace(SolverSettings.from_settings(), tol=args.tol)
    result = solver(amb, H, eps, opts, beta_nonneg)
    _emit({**result.to_dict(), "eta0": worst_case_eta(W, H).tolist()}, args.out)
    return EXIT_OK


def cmd_learn(args: argparse.Namespace) -> int:
    if args.config:
        W = load_config(args.config).mpc_config().W
    elif args.support:
        W = _read_polytope(args.support)
    else:
        raise ConfigError("learn needs --config or --support for the disturbance support")
    samples = read_samples_csv(args.samples, W.dim)
    learner = OnlineDpmm(NwPrior.default(W.dim), W)
    for batch in np.array_split(samples, max(1, -(-len(samples) // args.batch))):
        mix = learner.update(batch)
    logger.info(f"learned {mix.m} components from {len(samples)} samples, memory {learner.memory}")
    _emit(mix.to_dict(), args.out)
    return EXIT_OK


def cmd_mrpi(args: argparse.Namespace) -> int:
    sets = worst_case_sets(load_config(args.config).mpc_config())
    text = sets.Zf.to_text()
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info(f"wrote terminal set with {sets.Zf.n_rows} rows to {path}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_lqr(args: argparse.Namespace) -> int:
    plant = load_config(args.config).plant_model()
    reg = synthesize(plant)
    data = reg.to_dict()
    data["riccati_residual"] = riccati_residual(plant, reg.P)
    data["lyapunov_residual"] = lyapunov_residual(plant, reg)
    _emit(data, args.out)
    return EXIT_OK


# =============================================================================
# PARSER
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drmpc",
        description="Online-learning distributionally robust stochastic MPC",
    )
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="run a scenario in closed loop")
    sim.add_argument("--config", required=True, help="scenario file (TOML)")
    sim.add_argument("--runs", type=int, help="override the number of runs")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument(
        "--mode",
        choices=[m.value for m in ControllerMode] + [ALL_MODES],
        help="controller mode, or 'all' to compare the three",
    )
    sim.add_argument("--terminal", choices=[m.value for m in TerminalMode], help="terminal set mode")
    sim.add_argument("--out", help="output directory for CSV traces and summaries")
    sim.add_argument("--tol", type=float, help="interior-point tolerance")
    sim.set_defaults(func=cmd_sim)

    tighten = sub.add_parser("tighten", help="back-offs of a mixture ambiguity set")
    tighten.add_argument("--mixture", required=True, help="mixture JSON file")
    tighten.add_argument("--config", help="scenario file supplying W, H and eps")
    tighten.add_argument("--support", help="disturbance support W (polytope text)")
    tighten.add_argument("--rows", help="state constraints whose rows are tightened (polytope text)")
    tighten.add_argument("--eps", type=float, help="risk level in (0, 1]")
    tighten.add_argument("--fallback", action="store_true", help="worst-case back-off on solver failure")
    tighten.add_argument("--tol", type=float, help="interior-point tolerance")
    tighten.add_argument("--out", help="output JSON file (stdout if omitted)")
    tighten.set_defaults(func=cmd_tighten)

    learn = sub.add_parser("learn", help="DPMM mixture from a sample CSV")
    learn.add_argument("--samples", required=True, help="headerless CSV, one sample per line")
    learn.add_argument("--config", help="scenario file supplying W")
    learn.add_argument("--support", help="disturbance support W (polytope text)")
    learn.add_argument("--batch", type=int, default=50, help="samples per streaming update")
    learn.add_argument("--out", help="output JSON file (stdout if omitted)")
    learn.set_defaults(func=cmd_learn)

    mrpi = sub.add_parser("mrpi", help="worst-case terminal set of a scenario")
    mrpi.add_argument("--config", required=True, help="scenario file (TOML)")
    mrpi.add_argument("--out", help="output polytope text file (stdout if omitted)")
    mrpi.set_defaults(func=cmd_mrpi)

    lqr = sub.add_parser("lqr", help="LQR regulator of a scenario's plant")
    lqr.add_argument("--config", required=True, help="scenario file (TOML)")
    lqr.add_argument("--out", help="output JSON file (stdout if omitted)")
    lqr.set_defaults(func=cmd_lqr)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        setup_logging("DEBUG" if args.verbose else None)
    except ConfigError as e:
        print(f"drmpc: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except InitialInfeasibleError as e:
        logger.error(f"initial state infeasible: {e}")
        return EXIT_INFEASIBLE
    except ConfigError as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIG
    except DrmpcError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
