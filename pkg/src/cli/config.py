"""
DRMPC - Scenario Configuration Files
TOML scenario files validated with pydantic before anything is computed,
and their translation into the library's domain objects.
"""

import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.exceptions import ConfigError, DrmpcError
from src.control.mpc import MpcConfig, TerminalMode
from src.control.regulator import Plant
from src.geometry.polytope import HPolytope
from src.learning.dpmm import NwPrior
from src.optimization.conic_solver import SolverSettings
from src.simulation.closed_loop import ControllerMode, Scenario
from src.simulation.disturbances import DisturbanceSpec, GaussianComponent

logger = logging.getLogger(__name__)

Matrix = List[List[float]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# =============================================================================
# SECTIONS
# =============================================================================

class PlantSection(_Strict):
    A: Matrix
    B: Matrix
    Q: Matrix
    R: Matrix

    @model_validator(mode="after")
    def _shapes(self):
        n = len(self.A)
        if n == 0 or any(len(row) != n for row in self.A):
            raise ValueError("A must be a nonempty square matrix")
        if len(self.B) != n or len({len(row) for row in self.B}) != 1:
            raise ValueError("B must have one row per state and equal row lengths")
        return self


class PolytopeSection(_Strict):
    """Either halfspaces C x <= d, bounds lo <= x <= hi, or a symmetric box |x_i| <= box."""
    C: Optional[Matrix] = None
    d: Optional[List[float]] = None
    lo: Optional[List[float]] = None
    hi: Optional[List[float]] = None
    box: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _one_form(self):
        forms = [
            self.C is not None or self.d is not None,
            self.lo is not None or self.hi is not None,
            self.box is not None,
        ]
        if sum(forms) != 1:
            raise ValueError("give exactly one of (C, d), (lo, hi) or box")
        if forms[0] and (self.C is None or self.d is None):
            raise ValueError("C and d must be given together")
        if forms[1] and (self.lo is None or self.hi is None):
            raise ValueError("lo and hi must be given together")
        return self

    def build(self, dim: int) -> HPolytope:
        if self.box is not None:
            return HPolytope.box(-self.box, self.box, dim)
        if self.lo is not None:
            return HPolytope.box(self.lo, self.hi, dim)
        return HPolytope(np.array(self.C, dtype=float), np.array(self.d, dtype=float))


class ConstraintsSection(_Strict):
    X: PolytopeSection
    U: PolytopeSection
    W: PolytopeSection


class ControllerSection(_Strict):
    N: int = Field(ge=1)
    eps: Union[float, List[float]]
    terminal_mode: Optional[TerminalMode] = None
    beta_nonneg: bool = False
    safe_tol: Optional[float] = Field(default=None, gt=0)
    mrpi_max_iter: Optional[int] = Field(default=None, ge=1)

    @field_validator("eps")
    @classmethod
    def _risk_range(cls, v):
        values = v if isinstance(v, list) else [v]
        if not values or any(not 0.0 < e <= 1.0 for e in values):
            raise ValueError("risk levels must lie in (0, 1]")
        return v


class ComponentSection(_Strict):
    weight: float = Field(gt=0)
    mean: List[float]
    std: Union[float, List[float]]


class GeneratorSection(_Strict):
    components: List[ComponentSection] = Field(min_length=1)
    support: Optional[PolytopeSection] = None

    def build(self, W: HPolytope) -> DisturbanceSpec:
        support = self.support.build(W.dim) if self.support is not None else W
        comps = tuple(GaussianComponent(c.weight, c.mean, c.std) for c in self.components)
        return DisturbanceSpec(comps, support)


class DisturbanceSection(_Strict):
    historical: GeneratorSection
    online: Optional[GeneratorSection] = None


class PriorSection(_Strict):
    theta0: Optional[List[float]] = None
    lambda0: Optional[float] = Field(default=None, gt=0)
    omega0: Optional[float] = None
    Psi0: Optional[Matrix] = None
    alpha: Optional[float] = Field(default=None, gt=0)
    Kmax: Optional[int] = Field(default=None, ge=1)

    def build(self, n: int) -> NwPrior:
        given = {k: v for k, v in self.model_dump().items() if v is not None}
        theta0 = given.pop("theta0", [0.0] * n)
        return NwPrior(theta0=theta0, **given)


class SimulationSection(_Strict):
    x0: List[float]
    T_s: int = Field(default=20, ge=1)
    runs: int = Field(default=100, ge=1)
    seed: int = 0
    controller_mode: ControllerMode = ControllerMode.ONLINE_LEARNING
    historical_samples: int = Field(default=200, ge=0)
    noiseless_after: Optional[int] = Field(default=None, ge=0)


class SolverSection(_Strict):
    tol: Optional[float] = Field(default=None, gt=0)
    max_iter: Optional[int] = Field(default=None, ge=1)
    static_reg: Optional[float] = Field(default=None, gt=0)

    def build(self) -> SolverSettings:
        base = SolverSettings.from_settings()
        given = {k: v for k, v in self.model_dump().items() if v is not None}
        return replace(base, **given)


class OutputSection(_Strict):
    dir: Optional[str] = None


# =============================================================================
# FILE
# =============================================================================

class CliConfig(_Strict):
    """A whole scenario file."""
    name: str = Field(min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    plant: PlantSection
    controller: ControllerSection
    constraints: ConstraintsSection
    disturbance: DisturbanceSection
    simulation: SimulationSection
    prior: PriorSection = PriorSection()
    solver: SolverSection = SolverSection()
    output: OutputSection = OutputSection()

    def overridden(self, **overrides: Any) -> "CliConfig":
        """
        Copy with simulation/controller overrides applied. Keys: runs, seed,
        controller_mode, terminal_mode, tol, out. None values are ignored.
        """
        sim = dict(self.simulation.model_dump())
        ctrl = dict(self.controller.model_dump())
        solver = dict(self.solver.model_dump())
        output = dict(self.output.model_dump())
        for key, value in overrides.items():
            if value is None:
                continue
            if key in ("runs", "seed", "controller_mode"):
                sim[key] = value
            elif key == "terminal_mode":
                ctrl[key] = value
            elif key == "tol":
                solver["tol"] = value
            elif key == "out":
                output["dir"] = str(value)
            else:
                raise ConfigError(f"unknown override {key!r}")
        try:
            return self.model_copy(update={
                "simulation": SimulationSection(**sim),
                "controller": ControllerSection(**ctrl),
                "solver": SolverSection(**solver),
                "output": OutputSection(**output),
            })
        except ValidationError as e:
            raise ConfigError(format_validation_error(e)) from e

    def plant_model(self) -> Plant:
        return Plant(self.plant.A, self.plant.B, self.plant.Q, self.plant.R)

    def mpc_config(self) -> MpcConfig:
        plant = self.plant_model()
        kwargs: Dict[str, Any] = {
            "terminal_mode": self.controller.terminal_mode,
            "beta_nonneg": self.controller.beta_nonneg,
        }
        if self.controller.safe_tol is not None:
            kwargs["safe_tol"] = self.controller.safe_tol
        if self.controller.mrpi_max_iter is not None:
            kwargs["mrpi_max_iter"] = self.controller.mrpi_max_iter
        return MpcConfig.build(
            plant,
            N=self.controller.N,
            X=self.constraints.X.build(plant.n),
            U=self.constraints.U.build(plant.m),
            W=self.constraints.W.build(plant.n),
            eps=self.controller.eps,
            **kwargs,
        )

    def scenario(self) -> Scenario:
        """
        Domain objects for the whole file. Every module invariant is checked
        here, so failures surface as ConfigError before any simulation.
        """
        try:
            cfg = self.mpc_config()
            sim = self.simulation
            historical = self.disturbance.historical.build(cfg.W)
            online = self.disturbance.online.build(cfg.W) if self.disturbance.online else None
            return Scenario(
                name=self.name,
                cfg=cfg,
                x0=np.array(sim.x0, dtype=float),
                historical=historical,
                online=online,
                historical_samples=sim.historical_samples,
                T_s=sim.T_s,
                runs=sim.runs,
                seed=sim.seed,
                controller_mode=sim.controller_mode,
                prior=self.prior.build(cfg.plant.n),
                noiseless_after=sim.noiseless_after,
                solver=self.solver.build(),
            )
        except ConfigError:
            raise
        except (DrmpcError, ValueError) as e:
            raise ConfigError(f"{self.name}: {e}") from e


def format_validation_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


def parse_config(text: str, source: str = "<string>") -> CliConfig:
    """
    Validate TOML text as a scenario file.

    Raises:
        ConfigError: TOML syntax error (with line and column) or schema violation
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{source}: {e}") from e
    try:
        return CliConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {format_validation_error(e)}") from e


def load_config(path: Union[str, Path]) -> CliConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    cfg = parse_config(text, str(path))
    logger.debug(f"loaded scenario {cfg.name!r} from {path}")
    return cfg
