"""
DRMPC - Closed-Loop Metrics
Cost statistics, constraint-violation percentages, back-off traces, safe
update rates and phase timings over a set of closed-loop runs.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np

from src.core.exceptions import ConfigError
from src.simulation.closed_loop import INFEASIBLE_STATUSES, PHASES, RunLog

logger = logging.getLogger(__name__)


@dataclass
class ScenarioSummary:
    """Aggregate of the runs of one scenario under one controller mode."""
    scenario: str
    mode: str
    runs: int
    cost_mean: float
    cost_std: float
    violation_pct: float
    violation_pct_full: float
    violation_pct_rows: List[float]
    eta_mean: List[List[float]]
    flag_rate: float
    phase_times: Dict[str, float]
    infeasible_steps: int = 0
    max_shift_residual: float = 0.0
    max_w_residual: float = 0.0
    max_cost_decrease_slack: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "runs": self.runs,
            "cost_mean": self.cost_mean,
            "cost_std": self.cost_std,
            "violation_pct": self.violation_pct,
            "violation_pct_full": self.violation_pct_full,
            "violation_pct_rows": self.violation_pct_rows,
            "eta_mean": self.eta_mean,
            "flag_rate": self.flag_rate,
            "phase_times": self.phase_times,
            "infeasible_steps": self.infeasible_steps,
            "max_shift_residual": self.max_shift_residual,
            "max_w_residual": self.max_w_residual,
            "max_cost_decrease_slack": self.max_cost_decrease_slack,
            **self.extra,
        }


def violation_rate(logs: Sequence[RunLog], steps: int) -> float:
    """
    Percentage of (run, k) pairs with k = 1..steps in which some state row
    is violated.
    """
    flags = np.concatenate([log.violations[1:steps + 1].any(axis=1) for log in logs])
    return 100.0 * float(flags.mean()) if flags.size else 0.0


def _row_violation_rates(logs: Sequence[RunLog], steps: int) -> List[float]:
    stacked = np.concatenate([log.violations[1:steps + 1] for log in logs], axis=0)
    if stacked.size == 0:
        return [0.0] * logs[0].violations.shape[1]
    return (100.0 * stacked.mean(axis=0)).tolist()


def metrics(logs: Sequence[RunLog], horizon: int) -> ScenarioSummary:
    """
    Summary of closed-loop runs.

    The headline violation percentage counts steps k = 1..horizon (the first
    prediction horizon); violation_pct_full counts every step up to T_s. The
    flag rate is taken over k = 1..T_s, flag_0 being 1 by construction.

    Raises:
        ConfigError: no logs, or logs of different lengths
    """
    if not logs:
        raise ConfigError("metrics need at least one run log")
    T_s = logs[0].T_s
    if any(log.T_s != T_s for log in logs):
        raise ConfigError("run logs have different lengths")

    costs = np.array([log.cost for log in logs])
    eta = np.mean([log.eta for log in logs], axis=0)
    flags = np.concatenate([log.flag[1:] for log in logs])
    phase_times = {
        phase: float(np.mean([log.times[phase].mean() for log in logs if phase in log.times] or [0.0]))
        for phase in PHASES
    }

    summary = ScenarioSummary(
        scenario=logs[0].scenario,
        mode=logs[0].mode,
        runs=len(logs),
        cost_mean=float(costs.mean()),
        cost_std=float(costs.std()),
        violation_pct=violation_rate(logs, min(horizon, T_s)),
        violation_pct_full=violation_rate(logs, T_s),
        violation_pct_rows=_row_violation_rates(logs, min(horizon, T_s)),
        eta_mean=eta.tolist(),
        flag_rate=float(flags.mean()) if flags.size else 0.0,
        phase_times=phase_times,
        infeasible_steps=sum(status in INFEASIBLE_STATUSES for log in logs for status in log.status),
        max_shift_residual=float(max(log.shift_residual for log in logs)),
        max_w_residual=float(max(log.w_residual for log in logs)),
        max_cost_decrease_slack=float(max(log.cost_decrease_slack for log in logs)),
    )
    logger.info(
        f"{summary.scenario} [{summary.mode}]: cost {summary.cost_mean:.4f} +/- {summary.cost_std:.4f}, "
        f"violations {summary.violation_pct:.1f}%, flag rate {summary.flag_rate:.2f}"
    )
    return summary


def paired_cost_reduction(baseline: Sequence[RunLog], improved: Sequence[RunLog]) -> float:
    """
    Relative reduction of the mean closed-loop cost of `improved` against
    `baseline`, in percent, over the runs present in both (paired by run
    index, hence by random stream).
    """
    base = {log.run: log.cost for log in baseline}
    pairs = [(base[log.run], log.cost) for log in improved if log.run in base]
    if not pairs:
        raise ConfigError("no paired runs to compare")
    b, c = np.array(pairs).T
    if b.mean() <= 0:
        raise ConfigError("baseline mean cost must be positive for a relative reduction")
    return 100.0 * float((b.mean() - c.mean()) / b.mean())
