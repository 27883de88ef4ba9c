"""
DRMPC - Scenario Runner and Artifacts
Parallel replication of closed-loop runs, per-run CSV traces and JSON
summaries for external plotting tools.
"""

import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.core.config import settings
from src.core.exceptions import ConfigError, DimensionMismatchError, NonFiniteSampleError
from src.control.mpc import TerminalMode, worst_case_sets
from src.simulation.closed_loop import RunLog, Scenario, run_closed_loop
from src.simulation.metrics import ScenarioSummary, metrics

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


# =============================================================================
# RUN TRACES
# =============================================================================

def run_frame(log: RunLog) -> pd.DataFrame:
    """
    One row per step k = 0..T_s. The disturbance columns of the last row are
    NaN: w_k is only drawn for k < T_s.
    """
    steps = len(log.x)
    w = np.vstack([log.w, np.full((1, log.w.shape[1]), np.nan)])
    columns: Dict[str, np.ndarray] = {"k": np.arange(steps)}
    for name, block in (("x", log.x), ("u", log.u), ("w", w), ("eta", log.eta)):
        for i in range(block.shape[1]):
            columns[f"{name}_{i}"] = block[:, i]
    columns["flag"] = log.flag
    columns["J"] = log.J
    columns["status"] = np.array(log.status, dtype=object)
    return pd.DataFrame(columns)


def write_run_csv(log: RunLog, out_dir: PathLike) -> Path:
    """Write `<scenario>_<run>.csv` into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{log.scenario}_{log.run}.csv"
    run_frame(log).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_run_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def write_summary(summary: Union[ScenarioSummary, Dict], out_dir: PathLike, name: str) -> Path:
    """Write `<name>_summary.json` into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}_summary.json"
    data = summary.to_dict() if isinstance(summary, ScenarioSummary) else summary
    path.write_text(json.dumps(data, indent=2))
    return path


# =============================================================================
# SAMPLE FILES
# =============================================================================

def read_samples_csv(path: PathLike, dim: Optional[int] = None) -> np.ndarray:
    """
    Disturbance samples from a headerless CSV, one sample per line.

    Raises:
        ConfigError: unreadable or empty file
        DimensionMismatchError: column count differs from dim
        NonFiniteSampleError: a sample contains NaN or inf
    """
    try:
        frame = pd.read_csv(path, header=None, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot read samples from {path}: {e}") from e
    samples = frame.to_numpy(dtype=float)
    if dim is not None and samples.shape[1] != dim:
        raise DimensionMismatchError(f"samples have {samples.shape[1]} columns, expected {dim}")
    if not np.all(np.isfinite(samples)):
        raise NonFiniteSampleError(f"non-finite sample in {path}")
    return samples


def write_samples_csv(samples: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(np.atleast_2d(samples)).to_csv(
        path, header=False, index=False, float_format=FLOAT_FORMAT
    )
    return path


# =============================================================================
# SCENARIO REPLICATION
# =============================================================================

def _n_jobs(runs: int, threads: Optional[int]) -> int:
    cap = threads if threads is not None else settings.threads
    if cap is None:
        return -1 if runs > 1 else 1
    return max(1, min(cap, runs))


def simulate_runs(scn: Scenario, threads: Optional[int] = None) -> List[RunLog]:
    """
    All runs of the scenario, in run order. Runs are independent and are
    spread over joblib workers; each draws from its own child seed stream.
    """
    fallback = worst_case_sets(scn.cfg)
    n_jobs = _n_jobs(scn.runs, threads)
    logger.info(f"{scn.name}: {scn.runs} runs of {scn.controller_mode.value} on {n_jobs} workers")
    if n_jobs == 1:
        return [run_closed_loop(scn, i, fallback) for i in range(scn.runs)]
    return Parallel(n_jobs=n_jobs, backend="loky")(
        delayed(run_closed_loop)(scn, i, fallback) for i in range(scn.runs)
    )


def run_scenario(
    scn: Scenario,
    out_dir: Optional[PathLike] = None,
    threads: Optional[int] = None,
) -> Tuple[List[RunLog], ScenarioSummary]:
    """
    Replicate the scenario and summarize it. With out_dir, every run is
    written as `<scenario>_<run>.csv` next to `<scenario>_summary.json`.

    Raises:
        InitialInfeasibleError: some run is infeasible at x0
    """
    logs = simulate_runs(scn, threads)
    summary = metrics(logs, scn.cfg.N)
    if out_dir is not None:
        for log in logs:
            write_run_csv(log, out_dir)
        path = write_summary(summary, out_dir, scn.name)
        logger.info(f"{scn.name}: wrote {len(logs)} run traces and {path}")
    return logs, summary


def compare_terminal_modes(
    scn: Scenario,
    threads: Optional[int] = None,
) -> Dict[str, ScenarioSummary]:
    """Run the scenario once per terminal mode; summaries keyed by mode value."""
    out = {}
    for mode in TerminalMode:
        variant = replace(scn, cfg=replace(scn.cfg, terminal_mode=mode))
        _, out[mode.value] = run_scenario(variant, threads=threads)
    return out


def mode_comparison(summaries: Sequence[ScenarioSummary]) -> Dict[str, Dict[str, float]]:
    """Headline numbers of several summaries, keyed by controller mode."""
    if not summaries:
        raise ConfigError("nothing to compare")
    return {
        s.mode: {"cost_mean": s.cost_mean, "violation_pct": s.violation_pct, "flag_rate": s.flag_rate}
        for s in summaries
    }
