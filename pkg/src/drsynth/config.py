"""JSON experiment configuration: schema, loading and problem assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .benchmarks import BENCHMARKS, benchmark_system, default_config
from .model import (AffineMode, AmbiguitySet, Box, EmpiricalNoise, InputError, Partition,
                    SwitchedSystem, TruncatedGaussianNoise)


class ConfigError(InputError):
    """Configuration failed validation; the message lists field paths."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BoxConfig(_Strict):
    lower: list[float]
    upper: list[float]

    @model_validator(mode="after")
    def _ordered(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        if any(a > b for a, b in zip(self.lower, self.upper)):
            raise ValueError("lower must not exceed upper")
        return self

    def box(self) -> Box:
        return Box(self.lower, self.upper)


class AffineModeConfig(_Strict):
    A: list[list[float]]
    b: Optional[list[float]] = None


class SystemConfig(_Strict):
    modes: list[AffineModeConfig] = Field(min_length=1)


class GridConfig(_Strict):
    counts: list[Annotated[int, Field(ge=1)]]
    safe_box: BoxConfig
    target_boxes: list[BoxConfig] = []
    obstacle_boxes: list[BoxConfig] = []


class MixtureConfig(_Strict):
    centers: list[list[float]] = Field(min_length=1)
    variance: list[Annotated[float, Field(gt=0)]]
    samples: int = Field(ge=1)
    seed: int = Field(0, ge=0)


class EmpiricalConfig(_Strict):
    type: Literal["empirical"]
    atoms: Optional[list[list[float]]] = None
    mixture: Optional[MixtureConfig] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.atoms is None) == (self.mixture is None):
            raise ValueError("give exactly one of 'atoms' or 'mixture'")
        if self.atoms is not None and not self.atoms:
            raise ValueError("'atoms' must not be empty")
        return self


class GaussianConfig(_Strict):
    type: Literal["gaussian"]
    mean: list[float]
    variance: list[Annotated[float, Field(gt=0)]]
    truncation: float = Field(4.0, gt=0)


class AmbiguityConfig(_Strict):
    nominal: Annotated[Union[EmpiricalConfig, GaussianConfig], Field(discriminator="type")]
    epsilon: float = Field(ge=0)
    order: float = Field(2.0, ge=1)
    support: Union[Literal["unbounded"], BoxConfig] = "unbounded"


class ValidationConfig(_Strict):
    trials: int = Field(1000, ge=1)
    sampler: Literal["shifted", "inflated", "nominal"] = "shifted"
    direction: Optional[list[float]] = None
    max_steps: int = Field(200, ge=1)
    save_trajectories: int = Field(10, ge=0)


class Config(_Strict):
    benchmark: Optional[Literal["unicycle", "nonlinear4", "switched5"]] = None
    benchmark_params: Optional[dict[str, float]] = None
    system: Optional[SystemConfig] = None
    grid: GridConfig
    ambiguity: AmbiguityConfig
    horizon: Union[Annotated[int, Field(ge=0)], Literal["inf"]]
    p_th: float = Field(0.0, ge=0)
    x0: list[float]
    solver: Literal["dual", "lp", "imdp-baseline"] = "dual"
    tol: float = Field(1e-6, gt=0)
    tol_pos: float = Field(1e-9, gt=0)
    dual_tol: float = Field(1e-8, gt=0)
    max_iterations: int = Field(100_000, ge=1)
    seed: int = Field(0, ge=0)
    validation: ValidationConfig = Field(default_factory=ValidationConfig)

    @model_validator(mode="after")
    def _one_system(self):
        if (self.benchmark is None) == (self.system is None):
            raise ValueError("give exactly one of 'benchmark' or 'system'")
        if self.benchmark_params and self.benchmark is None:
            raise ValueError("'benchmark_params' requires 'benchmark'")
        return self


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "invalid configuration:\n  " + "\n  ".join(lines)


def parse_config(data: dict) -> Config:
    """Validate a configuration dictionary, filling built-in benchmark defaults."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    name = data.get("benchmark")
    if name is not None:
        if name not in BENCHMARKS:
            raise ConfigError(f"invalid configuration:\n  benchmark: unknown benchmark {name!r}")
        data = _merge(default_config(name), data)
    try:
        return Config.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def load_config(path) -> Config:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    return parse_config(data)


@dataclass
class Problem:
    config: Config
    system: SwitchedSystem
    partition: Partition
    ambiguity: AmbiguitySet

    @property
    def horizon(self):
        return None if self.config.horizon == "inf" else int(self.config.horizon)


def _nominal(cfg) -> object:
    if isinstance(cfg, GaussianConfig):
        return TruncatedGaussianNoise(cfg.mean, cfg.variance, cfg.truncation)
    if cfg.atoms is not None:
        return EmpiricalNoise(np.array(cfg.atoms, dtype=float))
    mix = cfg.mixture
    rng = np.random.default_rng(mix.seed)
    centers = np.array(mix.centers, dtype=float)
    comp = rng.integers(len(centers), size=mix.samples)
    atoms = centers[comp] + rng.normal(size=(mix.samples, centers.shape[1])) * np.sqrt(mix.variance)
    return EmpiricalNoise(atoms)


def build_problem(cfg: Config) -> Problem:
    """Instantiate the system, partition and ambiguity set of a configuration."""
    if cfg.benchmark is not None:
        system = benchmark_system(cfg.benchmark, cfg.benchmark_params)
    else:
        system = SwitchedSystem(tuple(AffineMode(m.A, m.b) for m in cfg.system.modes))
    g = cfg.grid
    partition = Partition(g.safe_box.box(), g.counts, [b.box() for b in g.target_boxes],
                          [b.box() for b in g.obstacle_boxes])
    a = cfg.ambiguity
    support = None if a.support == "unbounded" else a.support.box()
    ambiguity = AmbiguitySet(_nominal(a.nominal), a.epsilon, a.order, support)
    if len(cfg.x0) != system.dim:
        raise ConfigError(f"invalid configuration:\n  x0: expected {system.dim} entries")
    return Problem(cfg, system, partition, ambiguity)
