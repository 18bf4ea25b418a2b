"""Sum-of-sines reference trajectories with equal-effort normalization.

A reference trajectory is a windowed sum of five sinusoids whose overall
scale is chosen so that the RMS of the ideal net force (the force that
would track it perfectly) hits a configured target. Trajectories are only
accepted if that ideal force leaves the allowable net-force band often
enough to make single-role strategies insufficient.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from pathlib import Path

import numpy as np

# Smooth-start window length; position and velocity both start at zero.
RAMP_SECONDS = 1.0


class TrajectoryError(ValueError):
    """Invalid trajectory configuration or evaluation request."""


@dataclass(frozen=True)
class SineComponent:
    amplitude: float
    frequency_hz: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise TrajectoryError(f"amplitude must be positive, got {self.amplitude}")


@dataclass(frozen=True)
class TrajectoryConfig:
    """Knobs for trajectory generation and acceptance."""

    duration_s: float = 20.0
    dt_s: float = 0.01
    n_components: int = 5
    freq_min_hz: float = 0.1
    freq_max_hz: float = 0.5
    effort_target: float = 0.35
    mass: float = 0.5
    damping: float = 1.0
    force_gap: float = 0.9
    switch_threshold: float = 0.015
    max_tries: int = 200

    def validate(self) -> None:
        if not self.duration_s > 0:
            raise TrajectoryError("duration_s must be positive")
        if not self.dt_s > 0:
            raise TrajectoryError("dt_s must be positive")
        if not self.effort_target > 0:
            raise TrajectoryError("effort_target must be positive")
        if not 0 < self.switch_threshold < 1:
            raise TrajectoryError("switch_threshold must be in (0, 1)")
        if not 0 < self.freq_min_hz < self.freq_max_hz:
            raise TrajectoryError("frequency band must satisfy 0 < min < max")
        if self.n_components < 1:
            raise TrajectoryError("n_components must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.dt_s))


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Immutable windowed sum-of-sines reference."""

    id: str
    components: tuple[SineComponent, ...]
    scale: float
    duration_s: float
    dt_s: float

    def evaluate(self, t: float) -> tuple[float, float, float]:
        return evaluate_reference(self, t)

    def sample(self, dt: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position, velocity, acceleration on the trial grid (cached)."""
        return _sample_grid(self, self.dt_s if dt is None else dt)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "components": [asdict(c) for c in self.components],
            "scale": self.scale,
            "duration_s": self.duration_s,
            "dt_s": self.dt_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceTrajectory":
        return cls(
            id=d["id"],
            components=tuple(SineComponent(**c) for c in d["components"]),
            scale=d["scale"],
            duration_s=d["duration_s"],
            dt_s=d["dt_s"],
        )


@dataclass(frozen=True)
class IdealForceProfile:
    """Net force that would track the reference exactly, on the trial grid."""

    samples: np.ndarray = field(repr=False)
    dt_s: float

    def __len__(self) -> int:
        return len(self.samples)


def _window_scalar(t: float) -> tuple[float, float, float]:
    if t >= RAMP_SECONDS:
        return 1.0, 0.0, 0.0
    a = math.pi / RAMP_SECONDS
    return (
        0.5 * (1.0 - math.cos(a * t)),
        0.5 * a * math.sin(a * t),
        0.5 * a * a * math.cos(a * t),
    )


def evaluate_reference(traj: ReferenceTrajectory, t: float) -> tuple[float, float, float]:
    """Closed-form (r, r', r'') at time t; t must lie within the trial."""
    if not 0.0 <= t <= traj.duration_s:
        raise TrajectoryError(f"t={t} outside [0, {traj.duration_s}]")
    w, wd, wdd = _window_scalar(t)
    s = sd = sdd = 0.0
    for c in traj.components:
        om = 2.0 * math.pi * c.frequency_hz
        ph = om * t + c.phase
        s += c.amplitude * math.sin(ph)
        sd += c.amplitude * om * math.cos(ph)
        sdd += -c.amplitude * om * om * math.sin(ph)
    k = traj.scale
    return (
        k * w * s,
        k * (wd * s + w * sd),
        k * (wdd * s + 2.0 * wd * sd + w * sdd),
    )


@lru_cache(maxsize=128)
def _sample_grid(traj: ReferenceTrajectory, dt: float):
    if not dt > 0:
        raise TrajectoryError("dt must be positive")
    n = int(round(traj.duration_s / dt))
    t = np.arange(n) * dt
    inside = t < RAMP_SECONDS
    a = np.pi / RAMP_SECONDS
    w = np.where(inside, 0.5 * (1.0 - np.cos(a * t)), 1.0)
    wd = np.where(inside, 0.5 * a * np.sin(a * t), 0.0)
    wdd = np.where(inside, 0.5 * a * a * np.cos(a * t), 0.0)
    s = np.zeros(n)
    sd = np.zeros(n)
    sdd = np.zeros(n)
    for c in traj.components:
        om = 2.0 * math.pi * c.frequency_hz
        ph = om * t + c.phase
        s += c.amplitude * np.sin(ph)
        sd += c.amplitude * om * np.cos(ph)
        sdd += -c.amplitude * om * om * np.sin(ph)
    k = traj.scale
    r = k * w * s
    rd = k * (wd * s + w * sd)
    rdd = k * (wdd * s + 2.0 * wd * sd + w * sdd)
    r.setflags(write=False)
    rd.setflags(write=False)
    rdd.setflags(write=False)
    return r, rd, rdd


def force_from_derivatives(r_dot, r_ddot, mass: float, damping: float):
    """Net force implied by reference kinematics: m*r'' + b*r'."""
    return mass * np.asarray(r_ddot) + damping * np.asarray(r_dot)


def ideal_force(
    traj: ReferenceTrajectory,
    dt: float,
    mass: float = 0.5,
    damping: float = 1.0,
) -> IdealForceProfile:
    """Perfect-tracking net force sampled on the trial grid."""
    if not dt > 0:
        raise TrajectoryError("dt must be positive")
    _, rd, rdd = traj.sample(dt)
    return IdealForceProfile(samples=force_from_derivatives(rd, rdd, mass, damping), dt_s=dt)


def violation_fraction(profile: IdealForceProfile, force_gap: float) -> float:
    """Fraction of steps where |ideal force| exceeds the net-force band width."""
    return float(np.mean(np.abs(profile.samples) > force_gap))


def requires_switching(
    traj: ReferenceTrajectory,
    dt: float,
    threshold: float,
    force_gap: float = 0.9,
    mass: float = 0.5,
    damping: float = 1.0,
) -> bool:
    """True iff the ideal force leaves the net-force band more often than threshold."""
    if not 0 < threshold < 1:
        raise TrajectoryError("threshold must be in (0, 1)")
    profile = ideal_force(traj, dt, mass=mass, damping=damping)
    return violation_fraction(profile, force_gap) > threshold


def _draw_components(rng: np.random.Generator, config: TrajectoryConfig) -> tuple[SineComponent, ...]:
    # Stratified frequency draw (one component per band slice) plus a
    # low-frequency-weighted amplitude keeps difficulty comparable across
    # draws; a single all-high-frequency trajectory would dwarf the rest.
    edges = np.linspace(config.freq_min_hz, config.freq_max_hz, config.n_components + 1)
    comps = []
    for i in range(config.n_components):
        f = float(rng.uniform(edges[i], edges[i + 1]))
        factor = float(rng.uniform(0.5, 1.5))
        om = 2.0 * math.pi * f
        comps.append(SineComponent(amplitude=factor / (om * om), frequency_hz=f, phase=0.0))
    return tuple(comps)


def generate_trajectory(
    seed: int,
    config: TrajectoryConfig | None = None,
    traj_id: str | None = None,
) -> ReferenceTrajectory:
    """Draw an accepted, effort-normalized trajectory; deterministic in seed."""
    if config is None:
        config = TrajectoryConfig()
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    for attempt in range(config.max_tries):
        comps = _draw_components(rng, config)
        raw = ReferenceTrajectory(
            id=traj_id or f"traj-{seed}",
            components=comps,
            scale=1.0,
            duration_s=config.duration_s,
            dt_s=config.dt_s,
        )
        profile = ideal_force(raw, config.dt_s, mass=config.mass, damping=config.damping)
        rms = float(np.sqrt(np.mean(profile.samples**2)))
        if rms == 0.0:
            continue
        traj = ReferenceTrajectory(
            id=raw.id,
            components=comps,
            scale=config.effort_target / rms,
            duration_s=config.duration_s,
            dt_s=config.dt_s,
        )
        if requires_switching(
            traj,
            config.dt_s,
            config.switch_threshold,
            force_gap=config.force_gap,
            mass=config.mass,
            damping=config.damping,
        ):
            return traj
    raise TrajectoryError(
        f"no acceptable trajectory after {config.max_tries} draws (seed={seed})"
    )


def make_library(
    seed: int,
    config: TrajectoryConfig | None = None,
    count: int = 10,
) -> tuple[list[ReferenceTrajectory], ReferenceTrajectory]:
    """Training library plus one held-out trajectory, all derived from seed."""
    if config is None:
        config = TrajectoryConfig()
    child_seeds = np.random.SeedSequence((seed, 101)).generate_state(count + 1)
    library = [
        generate_trajectory(int(s), config, traj_id=f"traj-{seed}-{i}")
        for i, s in enumerate(child_seeds[:count])
    ]
    heldout = generate_trajectory(int(child_seeds[count]), config, traj_id=f"traj-{seed}-heldout")
    return library, heldout


def save_library(path, library, heldout=None, config: TrajectoryConfig | None = None) -> None:
    doc = {"trajectories": [t.to_dict() for t in library]}
    if heldout is not None:
        doc["heldout"] = heldout.to_dict()
    if config is not None:
        doc["config"] = asdict(config)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_library(path) -> tuple[list[ReferenceTrajectory], ReferenceTrajectory | None]:
    doc = json.loads(Path(path).read_text())
    library = [ReferenceTrajectory.from_dict(d) for d in doc["trajectories"]]
    heldout = ReferenceTrajectory.from_dict(doc["heldout"]) if "heldout" in doc else None
    return library, heldout
