"""
Run configuration.

A config file is flat TOML or YAML holding the baseline parameter keys, plus an
optional ``[solver]`` table. Keys missing from the file fall back to the
baseline calibration in ``constants``.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import yaml
from pydantic import Field, ValidationError, model_validator

from flat_tax_equilibrium import constants as C
from flat_tax_equilibrium.calibration import CalibrationTargets
from flat_tax_equilibrium.exceptions import ConfigError
from flat_tax_equilibrium.key_path import coerce_override, walk_key_path
from flat_tax_equilibrium.model_core import ModelParams
from flat_tax_equilibrium.type_helpers import FrozenModel
from flat_tax_equilibrium.wealth_law import GridSpec

logger = logging.getLogger(__name__)

__all__ = ["SolverSettings", "RunConfig", "load_config", "apply_overrides", "parse_override"]


class SolverSettings(FrozenModel):
    """Tolerances, caps, grids and horizons of every solver."""

    value_tol: float = Field(default=C.VALUE_TOL, gt=0.0)
    value_max_iter: int = Field(default=C.VALUE_MAX_ITER, ge=1)
    value_acceleration: bool = True
    regime_tol: float = Field(default=C.REGIME_TOL, gt=0.0)

    equilibrium_tol: float = Field(default=C.EQUILIBRIUM_TOL, gt=0.0)
    equilibrium_starts: int = Field(default=C.EQUILIBRIUM_STARTS, ge=1)

    pareto_z_max: float = Field(default=C.PARETO_Z_MAX, gt=0.0)
    pareto_tol: float = Field(default=C.PARETO_TOL, gt=0.0)
    grid_points: int = Field(default=C.GRID_POINTS, ge=16)
    grid_lower_offset: float = Field(default=C.GRID_LOWER_OFFSET, gt=0.0)
    grid_upper_offset: float = Field(default=C.GRID_UPPER_OFFSET, gt=0.0)
    inversion_t_max: float = Field(default=C.INVERSION_T_MAX, gt=0.0)
    extrapolation_error_ratio: float = Field(default=C.EXTRAPOLATION_ERROR_RATIO, gt=0.0)
    tail_s_max: float = Field(default=C.TAIL_S_MAX, gt=0.0)

    revenue_tol: float = Field(default=C.REVENUE_TOL, gt=0.0)
    tau_K_max: float = Field(default=C.TAU_K_MAX, gt=0.0, lt=1.0)
    tau_L_max: float = Field(default=C.TAU_L_MAX, gt=0.0, lt=1.0)
    frontier_step: float = Field(default=C.FRONTIER_STEP, gt=0.0)
    full_grid_step: float = Field(default=C.FULL_GRID_STEP, gt=0.0)
    kink_tol: float = Field(default=C.KINK_TOL, gt=0.0)
    optimizer_starts: int = Field(default=C.OPTIMIZER_STARTS, ge=1)
    sweep_boundary_tol: float = Field(default=C.SWEEP_BOUNDARY_TOL, gt=0.0)

    transition_horizon: int = Field(default=C.TRANSITION_HORIZON, ge=2)
    stage_max_nfev: int = Field(default=C.STAGE_MAX_NFEV, ge=1)
    stagnation_tol: float = Field(default=C.STAGNATION_TOL, ge=0.0)

    simulation_agents: int = Field(default=C.SIMULATION_AGENTS, ge=1)
    simulation_periods: int = Field(default=C.SIMULATION_PERIODS, ge=1)
    simulation_streams: int = Field(default=C.SIMULATION_STREAMS, ge=1)

    def grid_spec(self) -> GridSpec:
        return GridSpec(
            n_points=self.grid_points,
            lower_offset=self.grid_lower_offset,
            upper_offset=self.grid_upper_offset,
            t_max=self.inversion_t_max,
            error_ratio=self.extrapolation_error_ratio,
        )


class RunConfig(FrozenModel):
    """Model parameters, calibration targets and solver settings of one run."""

    alpha: float = C.BASELINE_ALPHA
    delta: float = C.BASELINE_DELTA
    beta: float = C.BASELINE_BETA
    gamma: float = C.BASELINE_GAMMA
    upsilon: float = C.BASELINE_UPSILON
    tau_K: float = C.BASELINE_TAU_K
    tau_L: float = C.BASELINE_TAU_L
    tau_C: float = C.BASELINE_TAU_C
    pi_ew: float = C.BASELINE_PI_EW
    pi_we: float = C.BASELINE_PI_WE
    sigma: float = C.BASELINE_SIGMA
    skewness: float = C.BASELINE_SKEWNESS
    kurtosis: float = C.BASELINE_KURTOSIS
    n_productivity_states: int = C.N_PRODUCTIVITY_STATES
    solver: SolverSettings = Field(default_factory=SolverSettings)

    @model_validator(mode="before")
    @classmethod
    def _entrepreneur_share(cls, data: Any) -> Any:
        if isinstance(data, dict) and "entrepreneur_share" in data:
            data = dict(data)
            share = float(data.pop("entrepreneur_share"))
            if "pi_we" in data:
                raise ValueError("Give either pi_we or entrepreneur_share, not both")
            if not 0.0 < share < 1.0:
                raise ValueError(f"entrepreneur_share must lie in (0, 1), got {share}")
            pi_ew = float(data.get("pi_ew", C.BASELINE_PI_EW))
            data["pi_we"] = share * pi_ew / (1.0 - share)
        return data

    @model_validator(mode="after")
    def _check_model(self) -> RunConfig:
        # Surface range errors of the domain models at load time
        self.params()
        self.targets()
        return self

    def params(self) -> ModelParams:
        return ModelParams(
            alpha=self.alpha,
            delta=self.delta,
            beta=self.beta,
            gamma=self.gamma,
            upsilon=self.upsilon,
            tau_K=self.tau_K,
            tau_L=self.tau_L,
            tau_C=self.tau_C,
        )

    def targets(self) -> CalibrationTargets:
        return CalibrationTargets(
            sigma=self.sigma,
            skewness=self.skewness,
            kurtosis=self.kurtosis,
            pi_ew=self.pi_ew,
            pi_we=self.pi_we,
            n_productivity_states=self.n_productivity_states,
        )


def _read_config_file(path: Path) -> dict[str, Any]:
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with path.open("rb") as f:
                data = tomllib.load(f)
        elif suffix in (".yaml", ".yml"):
            with path.open() as f:
                data = yaml.safe_load(f) or {}
        else:
            raise ConfigError(f"Unsupported config format '{suffix}' (use .toml, .yaml or .yml)")
    except (tomllib.TOMLDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"Cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a table of keys")
    return data


def parse_override(text: str) -> tuple[str, str]:
    """Split ``key=value``."""
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"Override '{text}' is not of the form key=value")
    return key.strip(), value.strip()


def apply_overrides(data: dict[str, Any], overrides: list[tuple[str, str]]) -> dict[str, Any]:
    """
    Apply dotted-path overrides to a raw config dict.

    Raises:
        ConfigError: if a path does not name a config field
    """
    data = {key: (dict(value) if isinstance(value, dict) else value) for key, value in data.items()}
    for key, value in overrides:
        segments = key.split(".")
        if segments != ["entrepreneur_share"]:
            walk_key_path(RunConfig, segments)
        elif "pi_we" in data:
            data.pop("pi_we")
        target = data
        for segment in segments[:-1]:
            target = target.setdefault(segment, {})
            if not isinstance(target, dict):
                raise ConfigError(f"Override '{key}' descends into a non-table value")
        target[segments[-1]] = coerce_override(value)
        logger.debug(f"Override {key}={value}")
    return data


def load_config(path: str | Path | None = None, overrides: list[tuple[str, str]] | None = None) -> RunConfig:
    """
    Read a config file (or start from the baseline) and apply overrides.

    Raises:
        ConfigError: unreadable file, unknown key, or invalid value
    """
    data = _read_config_file(Path(path)) if path is not None else {}
    if overrides:
        data = apply_overrides(data, overrides)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc
