"""Run configuration: one JSON document drives a whole experiment."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, fields
from pathlib import Path

from .simulator import EggParams
from .trajectory import TrajectoryConfig


class ConfigError(ValueError):
    """Rejected run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Experiment knobs; defaults mirror the full-scale setup."""

    population_size: int = 500
    generations: int = 100
    mutation_rate: float = 0.05
    dt: float = 0.01
    duration: float = 20.0
    mass: float = 0.5
    damping: float = 1.0
    f_min: float = 0.1
    f_max: float = 1.0
    stabilization_slope: float = 10.0
    effort_target: float = 0.35
    trajectory_count: int = 10
    switch_threshold: float = 0.015
    seed: int = 1
    validate_controllers: bool = True
    histogram_bins: int = 40
    out_dir: str | None = None

    def validate(self) -> None:
        if self.population_size <= 0:
            raise ConfigError("population_size must be positive")
        if self.generations <= 0:
            raise ConfigError("generations must be positive")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError("mutation_rate must be in [0, 1]")
        for name in ("dt", "duration", "mass", "stabilization_slope", "effort_target"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.damping < 0:
            raise ConfigError("damping must be non-negative")
        if not 0 <= self.f_min < self.f_max:
            raise ConfigError("force band must satisfy 0 <= f_min < f_max")
        if self.trajectory_count <= 0:
            raise ConfigError("trajectory_count must be positive")
        if not 0 < self.switch_threshold < 1:
            raise ConfigError("switch_threshold must be in (0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def egg_params(self) -> EggParams:
        return EggParams(mass=self.mass, damping=self.damping, f_min=self.f_min, f_max=self.f_max)

    def trajectory_config(self) -> TrajectoryConfig:
        return TrajectoryConfig(
            duration_s=self.duration,
            dt_s=self.dt,
            effort_target=self.effort_target,
            mass=self.mass,
            damping=self.damping,
            force_gap=self.f_max - self.f_min,
            switch_threshold=self.switch_threshold,
        )

    @property
    def f_opt(self) -> float:
        return self.egg_params().f_opt

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)


def desk_config(**overrides) -> RunConfig:
    """Laptop-scale defaults used by the verification runs."""
    base = dict(population_size=100, generations=40)
    base.update(overrides)
    return RunConfig(**base)
