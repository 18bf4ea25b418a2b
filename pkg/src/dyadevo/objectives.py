"""Five-objective scoring of a trial record.

All objectives are minimized: normalized tracking error, out-of-band
normal-force penalty, each agent's RMS effort (kept separate so both
altruistic and selfish genomes survive selection), and force-profile
roughness. Invalid trials map to a rank-worst sentinel vector.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .simulator import EggParams, TrialRecord

DEFAULT_STABILIZATION_SLOPE = 10.0

# Large finite stand-in for +inf so crowding arithmetic stays NaN-free.
INVALID_LOSS = 1e30


class ObjectiveError(ValueError):
    """Objective undefined for this record."""


class ObjectiveVector(NamedTuple):
    tracking: float
    stabilization: float
    effort1: float
    effort2: float
    jerk: float


INVALID_OBJECTIVES = ObjectiveVector(*([INVALID_LOSS] * 5))


def _rms(values: np.ndarray) -> float:
    if len(values) == 0:
        return 0.0
    return math.sqrt(float(np.mean(np.square(values))))


def tracking_loss(rec: TrialRecord) -> float:
    """RMS tracking error over RMS reference; 1.0 means the egg never moved."""
    rms_r = _rms(rec.r)
    if rms_r == 0.0:
        raise ObjectiveError("degenerate trajectory: RMS(r) is zero")
    return _rms(rec.e) / rms_r


def stabilization_loss(
    rec: TrialRecord,
    params: EggParams,
    slope: float = DEFAULT_STABILIZATION_SLOPE,
) -> float:
    """Mean per-step penalty, zero in band and linear in the excursion outside."""
    below = params.f_min - rec.f_n
    above = rec.f_n - params.f_max
    excursion = np.maximum(0.0, np.maximum(below, above))
    return slope * float(np.mean(excursion))


def effort(rec: TrialRecord, agent_index: int) -> float:
    """RMS force of one agent."""
    if agent_index == 1:
        return _rms(rec.f1)
    if agent_index == 2:
        return _rms(rec.f2)
    raise ObjectiveError(f"agent_index must be 1 or 2, got {agent_index}")


def jerk_loss(rec: TrialRecord) -> float:
    """Summed RMS of each agent's force-rate increments (force roughness)."""
    total = 0.0
    for fdot in (rec.fdot1, rec.fdot2):
        if len(fdot) < 2:
            continue
        total += _rms(np.diff(fdot) / rec.dt)
    return total


def score(
    rec: TrialRecord,
    params: EggParams,
    slope: float = DEFAULT_STABILIZATION_SLOPE,
) -> ObjectiveVector:
    """All five losses; invalid trials get the rank-worst sentinel."""
    if not rec.valid or len(rec) == 0:
        return INVALID_OBJECTIVES
    return ObjectiveVector(
        tracking=tracking_loss(rec),
        stabilization=stabilization_loss(rec, params, slope),
        effort1=effort(rec, 1),
        effort2=effort(rec, 2),
        jerk=jerk_loss(rec),
    )
