"""
DRMPC - Simulation Module
Disturbance generators, the closed-loop harness, metrics and artifacts.
"""

from src.simulation.disturbances import (
    DisturbanceSpec,
    GaussianComponent,
    global_moment_baseline,
    sample_disturbance,
    sample_disturbances,
)
from src.simulation.closed_loop import (
    ControllerMode,
    RunLog,
    Scenario,
    run_closed_loop,
)
from src.simulation.metrics import (
    ScenarioSummary,
    metrics,
    paired_cost_reduction,
    violation_rate,
)
from src.simulation.artifacts import (
    compare_terminal_modes,
    mode_comparison,
    read_run_csv,
    read_samples_csv,
    run_frame,
    run_scenario,
    simulate_runs,
    write_run_csv,
    write_samples_csv,
    write_summary,
)

__all__ = [
    # Disturbances
    "DisturbanceSpec",
    "GaussianComponent",
    "global_moment_baseline",
    "sample_disturbance",
    "sample_disturbances",
    # Closed loop
    "ControllerMode",
    "RunLog",
    "Scenario",
    "run_closed_loop",
    # Metrics
    "ScenarioSummary",
    "metrics",
    "paired_cost_reduction",
    "violation_rate",
    # Artifacts
    "compare_terminal_modes",
    "mode_comparison",
    "read_run_csv",
    "read_samples_csv",
    "run_frame",
    "run_scenario",
    "simulate_runs",
    "write_run_csv",
    "write_samples_csv",
    "write_summary",
]
