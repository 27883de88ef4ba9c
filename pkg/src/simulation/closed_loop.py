"""
DRMPC - Closed-Loop Simulation
One closed loop of the online-learning controller: offline priming from
historical samples, then measure, solve, apply, learn, tighten and safely
update at every step. Three controller modes share the loop:

    OnlineLearning - DPMM mixture re-learned from every new sample
    GlobalMoment   - single mean/covariance of all samples seen so far
    NoLearning     - sets primed once from historical data and held
"""

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from src.core.constants import COST_DECREASE_TOL, SHIFT_IDENTITY_TOL
from src.core.exceptions import (
    ConfigError,
    EmptySetError,
    InfeasibleStateError,
    InitialInfeasibleError,
    MaxIterError,
    SolverError,
)
from src.control.mpc import (
    MpcConfig,
    MpcSolution,
    TerminalMode,
    TightenedSets,
    build_sets,
    candidate,
    candidate_solution,
    control_input,
    is_feasible,
    safe_update,
    shift_residual,
    solve_ocp,
    worst_case_sets,
)
from src.geometry.polytope import HPolytope
from src.learning.dpmm import NwPrior, OnlineDpmm
from src.learning.mixture import MixtureEstimate
from src.optimization.conic_solver import SolverSettings
from src.simulation.disturbances import (
    DisturbanceSpec,
    global_moment_baseline,
    sample_disturbances,
)
from src.tightening.ambiguity import AmbiguitySet
from src.tightening.cvar_sdp import solve_eta_with_fallback

logger = logging.getLogger(__name__)

PHASES = ("learn", "tighten", "mrpi", "ocp")

# step statuses that break recursive feasibility after a feasible first step
STATUS_CANDIDATE_AFTER_INFEASIBLE = "CandidateAfterInfeasible"
INFEASIBLE_STATUSES = ("Infeasible", STATUS_CANDIDATE_AFTER_INFEASIBLE)
SUPPORT_INCLUSION_TOL = 1e-12


class ControllerMode(Enum):
    """How the ambiguity set follows the data."""
    ONLINE_LEARNING = "OnlineLearning"
    GLOBAL_MOMENT = "GlobalMoment"
    NO_LEARNING = "NoLearning"


@dataclass(frozen=True)
class Scenario:
    """
    A closed-loop experiment: controller configuration, initial state,
    disturbance generators before and during the run, and replication.
    """
    name: str
    cfg: MpcConfig
    x0: np.ndarray
    historical: DisturbanceSpec
    online: Optional[DisturbanceSpec] = None
    historical_samples: int = 200
    T_s: int = 20
    runs: int = 100
    seed: int = 0
    controller_mode: ControllerMode = ControllerMode.ONLINE_LEARNING
    prior: Optional[NwPrior] = None
    noiseless_after: Optional[int] = None
    solver: Optional[SolverSettings] = None

    def __post_init__(self):
        x0 = np.atleast_1d(np.array(self.x0, dtype=float))
        n = self.cfg.plant.n
        if x0.size != n:
            raise ConfigError(f"x0 has {x0.size} entries, expected {n}")
        if self.T_s < 1 or self.runs < 1:
            raise ConfigError("T_s and runs must be at least 1")
        if self.historical_samples < 0:
            raise ConfigError("historical_samples must be nonnegative")
        online = self.online or self.historical
        for spec in (self.historical, online):
            if spec.dim != n:
                raise ConfigError("disturbance generator dimension differs from the state")
            # the generator's support must lie inside W: compare supports row by row
            reach = np.array([spec.support.support(row) for row in self.cfg.W.C])
            if np.any(reach > self.cfg.W.d + SUPPORT_INCLUSION_TOL):
                raise ConfigError("disturbance generator support is not contained in W")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "online", online)
        object.__setattr__(self, "controller_mode", ControllerMode(self.controller_mode))
        if self.prior is None:
            object.__setattr__(self, "prior", NwPrior.default(n))

    def with_mode(self, mode: ControllerMode) -> "Scenario":
        """Same experiment under another controller mode."""
        return replace(self, controller_mode=mode)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "cfg": self.cfg.to_dict(),
            "x0": self.x0.tolist(),
            "historical": self.historical.to_dict(),
            "online": self.online.to_dict(),
            "historical_samples": self.historical_samples,
            "T_s": self.T_s,
            "runs": self.runs,
            "seed": self.seed,
            "controller_mode": self.controller_mode.value,
        }


@dataclass
class RunLog:
    """
    Trace of one closed loop. Arrays indexed by k = 0..T_s hold T_s + 1 rows
    (x, u, J, eta, flag, status); w and the phase timings hold T_s rows.
    flag[k] = 1 when the sets used at step k were accepted at step k; flag[0]
    is 1 for the primed sets.
    """
    scenario: str
    run: int
    mode: str
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    eta: np.ndarray
    flag: np.ndarray
    J: np.ndarray
    status: List[str]
    cost: float
    times: Dict[str, np.ndarray] = field(default_factory=dict)
    violations: np.ndarray = None
    w_residual: float = 0.0
    shift_residual: float = 0.0
    cost_decrease_slack: float = -np.inf
    c0_norm: np.ndarray = None

    @property
    def T_s(self) -> int:
        return len(self.w)

    @property
    def identities_hold(self) -> bool:
        """Shift identity and cost decrease held at every step within tolerance."""
        return (
            self.shift_residual <= SHIFT_IDENTITY_TOL
            and self.cost_decrease_slack <= COST_DECREASE_TOL
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "run": self.run,
            "mode": self.mode,
            "x": self.x.tolist(),
            "u": self.u.tolist(),
            "w": self.w.tolist(),
            "eta": self.eta.tolist(),
            "flag": self.flag.tolist(),
            "J": self.J.tolist(),
            "status": list(self.status),
            "cost": self.cost,
            "times": {k: v.tolist() for k, v in self.times.items()},
            "violations": self.violations.tolist(),
            "w_residual": self.w_residual,
            "shift_residual": self.shift_residual,
            "cost_decrease_slack": self.cost_decrease_slack,
        }


class _AmbiguityLearner:
    """Turns disturbance samples into mixture estimates for one controller mode."""

    def __init__(self, scn: Scenario):
        self.mode = scn.controller_mode
        self.W: HPolytope = scn.cfg.W
        self.dpmm = OnlineDpmm(scn.prior, self.W)
        self.seen: List[np.ndarray] = []

    def update(self, samples: np.ndarray) -> Optional[MixtureEstimate]:
        """New estimate, or None while the moment baseline has under two samples."""
        samples = np.atleast_2d(samples)
        if self.mode == ControllerMode.GLOBAL_MOMENT:
            self.seen.extend(samples)
            if len(self.seen) < 2:
                return None
            return global_moment_baseline(np.array(self.seen), self.W)
        return self.dpmm.update(samples)


def _tighten(scn: Scenario, mix: Optional[MixtureEstimate]) -> np.ndarray:
    cfg = scn.cfg
    if mix is None:
        return cfg.eta0()
    amb = AmbiguitySet(cfg.W, mix, cfg.degenerate_support)
    return solve_eta_with_fallback(amb, cfg.H, cfg.eps, scn.solver, cfg.beta_nonneg).eta


def _sets_or_none(
    scn: Scenario,
    eta: np.ndarray,
    epoch: int,
    terminal: Optional[HPolytope],
) -> Optional[TightenedSets]:
    """Fresh sets, or None when the terminal recursion fails for this eta."""
    try:
        return build_sets(scn.cfg, eta, epoch=epoch, terminal=terminal)
    except (EmptySetError, MaxIterError) as e:
        logger.warning(f"step {epoch}: fresh sets unavailable ({e}); holding current sets")
        return None


def run_closed_loop(
    scn: Scenario,
    run_index: int = 0,
    fallback: Optional[TightenedSets] = None,
) -> RunLog:
    """
    Simulate one closed loop of scenario `scn`.

    The per-run random stream is child `run_index` of the scenario seed, so
    runs are reproducible individually and in parallel. `fallback` are the
    worst-case sets; they are computed here when not supplied.

    Raises:
        InitialInfeasibleError: the optimal control problem is infeasible at x0
    """
    cfg = scn.cfg
    n, m, p = cfg.plant.n, cfg.plant.m, cfg.X.n_rows
    A, B = cfg.plant.A, cfg.plant.B
    rng = np.random.default_rng(np.random.SeedSequence(scn.seed, spawn_key=(run_index,)))
    mode = scn.controller_mode
    times = {phase: np.zeros(scn.T_s) for phase in PHASES}

    if fallback is None:
        fallback = worst_case_sets(cfg)
    terminal = fallback.Zf if cfg.terminal_mode == TerminalMode.OFFLINE_FALLBACK else None

    # offline priming from historical data
    learner = _AmbiguityLearner(scn)
    historical = sample_disturbances(scn.historical, rng, scn.historical_samples)
    eta = _tighten(scn, learner.update(historical)) if len(historical) else cfg.eta0()
    active = _sets_or_none(scn, eta, 0, terminal) or fallback

    x = np.zeros((scn.T_s + 1, n))
    u = np.zeros((scn.T_s + 1, m))
    w_log = np.zeros((scn.T_s, n))
    eta_log = np.zeros((scn.T_s + 1, p))
    flag = np.zeros(scn.T_s + 1, dtype=int)
    J = np.zeros(scn.T_s + 1)
    c0_norm = np.zeros(scn.T_s + 1)
    status: List[str] = []
    x[0] = scn.x0
    flag[0] = 1
    w_residual = 0.0
    shift_worst = 0.0
    decrease_slack = -np.inf

    logger.info(f"{scn.name} run {run_index}: {mode.value}, eta0 = {np.array2string(active.eta, precision=4)}")

    prev: Optional[MpcSolution] = None
    cand = None
    for k in range(scn.T_s + 1):
        t0 = time.perf_counter()
        try:
            sol = solve_ocp(cfg, active, x[k], scn.solver)
            if cand is not None and is_feasible(cfg, active, x[k], cand.c_tilde, cfg.safe_tol):
                fallback_sol = candidate_solution(cand, cfg)
                if fallback_sol.J < sol.J:
                    sol = fallback_sol
        except (InfeasibleStateError, SolverError) as e:
            if k == 0:
                raise InitialInfeasibleError(x[0], f"{scn.name}: infeasible at x0 = {x[0]}") from e
            if cand is None or not is_feasible(cfg, active, x[k], cand.c_tilde, cfg.safe_tol):
                raise
            sol = candidate_solution(cand, cfg)
            if isinstance(e, InfeasibleStateError):
                logger.error(f"step {k}: OCP infeasible after a feasible start; applying the candidate")
                sol = replace(sol, status=STATUS_CANDIDATE_AFTER_INFEASIBLE)
            else:
                logger.warning(f"step {k}: OCP solve failed ({e}); applying the candidate")
        if k < scn.T_s:
            times["ocp"][k] = time.perf_counter() - t0

        if prev is not None:
            c0 = prev.c[:m]
            decrease_slack = max(
                decrease_slack,
                sol.J - (prev.J - float(c0 @ cfg.regulator.PsiTilde @ c0)),
            )

        u[k] = control_input(sol)
        J[k] = sol.J
        c0_norm[k] = float(np.linalg.norm(sol.c[:m]))
        eta_log[k] = active.eta
        status.append(sol.status)
        if k == scn.T_s:
            break

        # apply and measure
        if scn.noiseless_after is not None and k >= scn.noiseless_after:
            w = np.zeros(n)
        else:
            w = sample_disturbances(scn.online, rng, 1)[0]
        x[k + 1] = A @ x[k] + B @ u[k] + w
        w_meas = x[k + 1] - A @ x[k] - B @ u[k]
        w_residual = max(w_residual, float(np.max(np.abs(w_meas - w))))
        w_log[k] = w_meas

        cand = candidate(sol, x[k + 1], cfg)
        shift_worst = max(shift_worst, shift_residual(sol, cand, w_meas, cfg))
        prev = sol

        if mode == ControllerMode.NO_LEARNING:
            continue

        t0 = time.perf_counter()
        mix = learner.update(w_meas)
        times["learn"][k] = time.perf_counter() - t0

        t0 = time.perf_counter()
        eta_new = _tighten(scn, mix)
        times["tighten"][k] = time.perf_counter() - t0

        t0 = time.perf_counter()
        fresh = _sets_or_none(scn, eta_new, k + 1, terminal)
        times["mrpi"][k] = time.perf_counter() - t0

        if fresh is not None:
            flag[k + 1], active = safe_update(cand, fresh, active, cfg.safe_tol)

    Q, R = cfg.plant.Q, cfg.plant.R
    cost = float(
        np.einsum("ki,ij,kj->", x[1:], Q, x[1:]) + np.einsum("ki,ij,kj->", u[1:], R, u[1:])
    )
    violations = x @ cfg.H.T > cfg.h[None, :]

    if shift_worst > SHIFT_IDENTITY_TOL:
        logger.warning(f"{scn.name} run {run_index}: shift identity residual {shift_worst:.3e}")
    if decrease_slack > COST_DECREASE_TOL:
        logger.warning(f"{scn.name} run {run_index}: cost decrease violated by {decrease_slack:.3e}")
    logger.info(
        f"{scn.name} run {run_index}: cost {cost:.4f}, "
        f"{int(violations[1:].any(axis=1).sum())} violating steps, "
        f"flag rate {flag[1:].mean():.2f}"
    )
    return RunLog(
        scenario=scn.name,
        run=run_index,
        mode=mode.value,
        x=x,
        u=u,
        w=w_log,
        eta=eta_log,
        flag=flag,
        J=J,
        status=status,
        cost=cost,
        times=times,
        violations=violations,
        w_residual=w_residual,
        shift_residual=shift_worst,
        cost_decrease_slack=float(decrease_slack),
        c0_norm=c0_norm,
    )
