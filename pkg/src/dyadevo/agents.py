"""Dyad genome: switching policies, fixed controllers, and agent assembly.

Each agent carries two unit-norm 9-weight switching policies (one per
role) and two fixed controllers drawn from a small pre-designed library.
Policies and controllers are both linear in the same 9-entry observation
vector; only the policies evolve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np

N_FEATURES = 9

FEATURE_NAMES = (
    "ref",
    "ref_vel",
    "ref_acc",
    "err",
    "err_vel",
    "err_acc",
    "f_normal",
    "f_normal_vel",
    "bias",
)

# Feature slot indices.
REF, REF_VEL, REF_ACC, ERR, ERR_VEL, ERR_ACC, F_NORMAL, F_NORMAL_VEL, BIAS = range(9)

POLICY_NORM_TOL = 1e-12


class GenomeError(ValueError):
    """Invalid policy, controller, or agent construction."""


class FeatureVector(NamedTuple):
    """Per-agent observation: reference, error, normal force, and a bias of 1."""

    ref: float
    ref_vel: float
    ref_acc: float
    err: float
    err_vel: float
    err_acc: float
    f_normal: float
    f_normal_vel: float
    bias: float = 1.0


class Role(IntEnum):
    STABILIZE = 0
    TRACK = 1


class ControllerKind(Enum):
    STABILIZING = "stabilizing"
    TRACKING = "tracking"


class Origin(Enum):
    INIT = "init"
    CROSSOVER = "crossover"
    MUTATION = "mutation"


def _dot9(weights, theta) -> float:
    return (
        weights[0] * theta[0]
        + weights[1] * theta[1]
        + weights[2] * theta[2]
        + weights[3] * theta[3]
        + weights[4] * theta[4]
        + weights[5] * theta[5]
        + weights[6] * theta[6]
        + weights[7] * theta[7]
        + weights[8] * theta[8]
    )


@dataclass(frozen=True)
class SwitchPolicy:
    """Unit-norm linear role-transition rule; fires when weights . theta > 0."""

    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.weights) != N_FEATURES:
            raise GenomeError(f"policy needs {N_FEATURES} weights, got {len(self.weights)}")
        norm = math.sqrt(sum(w * w for w in self.weights))
        if abs(norm - 1.0) > POLICY_NORM_TOL:
            raise GenomeError(f"policy weights must be unit-norm, |w|={norm!r}")


def normalize_policy(weights) -> SwitchPolicy:
    """Project raw weights onto the unit sphere; zero vectors have no direction."""
    ws = tuple(float(w) for w in weights)
    if len(ws) != N_FEATURES:
        raise GenomeError(f"policy needs {N_FEATURES} weights, got {len(ws)}")
    if not all(math.isfinite(w) for w in ws):
        raise GenomeError("policy weights must be finite")
    norm = math.sqrt(sum(w * w for w in ws))
    if norm == 0.0:
        raise GenomeError("cannot normalize a zero weight vector")
    return SwitchPolicy(tuple(w / norm for w in ws))


def evaluate_transition(policy: SwitchPolicy, theta) -> bool:
    """Strict-inequality transition test; a dot product of exactly 0 holds the role."""
    if not all(math.isfinite(x) for x in theta):
        raise GenomeError("feature vector contains non-finite entries")
    return _dot9(policy.weights, theta) > 0.0


@dataclass(frozen=True)
class Controller:
    """Fixed linear controller emitting a force rate from the feature vector."""

    id: str
    kind: ControllerKind
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.weights) != N_FEATURES:
            raise GenomeError(f"controller needs {N_FEATURES} weights")
        w = self.weights
        zero_elsewhere = {
            ControllerKind.STABILIZING: (REF, REF_VEL, REF_ACC, ERR, ERR_VEL, ERR_ACC, F_NORMAL_VEL),
            ControllerKind.TRACKING: (REF, REF_VEL, REF_ACC, F_NORMAL, F_NORMAL_VEL, BIAS),
        }[self.kind]
        if any(w[i] != 0.0 for i in zero_elsewhere):
            raise GenomeError(f"{self.kind.value} controller has weights in disallowed slots")
        if self.kind is ControllerKind.STABILIZING:
            if not w[F_NORMAL] < 0.0:
                raise GenomeError("stabilizing controller needs a negative normal-force gain")
        else:
            gains = (w[ERR], w[ERR_VEL], w[ERR_ACC])
            if any(g < 0.0 for g in gains) or all(g == 0.0 for g in gains):
                raise GenomeError("tracking gains must be >= 0 and not all zero")

    @classmethod
    def stabilizing(cls, k_i: float, f_opt: float, cid: str) -> "Controller":
        """Integral regulator pushing the sensed normal force toward f_opt."""
        if not k_i > 0:
            raise GenomeError("stabilizing gain must be positive")
        w = [0.0] * N_FEATURES
        w[F_NORMAL] = -k_i
        w[BIAS] = k_i * f_opt
        return cls(id=cid, kind=ControllerKind.STABILIZING, weights=tuple(w))

    @classmethod
    def tracking(cls, k_i: float, k_p: float, k_d: float, cid: str) -> "Controller":
        """PID-in-force tracker: rate output k_i*e + k_p*e' + k_d*e''."""
        w = [0.0] * N_FEATURES
        w[ERR] = k_i
        w[ERR_VEL] = k_p
        w[ERR_ACC] = k_d
        return cls(id=cid, kind=ControllerKind.TRACKING, weights=tuple(w))


def controller_output(ctrl: Controller, theta) -> float:
    """Force rate commanded for this observation (clamping happens later)."""
    out = _dot9(ctrl.weights, theta)
    if not math.isfinite(out):
        raise GenomeError("controller output is non-finite")
    return out


# Default gain tables. Stabilizers ladder a decade of integral gains; the
# tracking sets vary both magnitude and damping character, each verified
# sufficient solo on generated libraries.
STABILIZING_GAINS = (0.5, 1.0, 2.0, 4.0, 8.0)
TRACKING_GAINS = (
    (16.0, 16.0, 10.0),
    (16.0, 8.0, 5.0),
    (8.0, 8.0, 5.0),
    (8.0, 16.0, 8.0),
    (4.0, 8.0, 4.0),
)


@dataclass(frozen=True)
class ControllerLibrary:
    f_opt: float
    stabilizing: tuple[Controller, ...]
    tracking: tuple[Controller, ...]
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        by_id = {c.id: c for c in self.stabilizing + self.tracking}
        if len(by_id) != len(self.stabilizing) + len(self.tracking):
            raise GenomeError("controller ids must be unique")
        object.__setattr__(self, "_by_id", by_id)

    def get(self, cid: str) -> Controller:
        try:
            return self._by_id[cid]
        except KeyError:
            raise GenomeError(f"unknown controller id {cid!r}") from None

    def to_dict(self) -> dict:
        return {
            "f_opt": self.f_opt,
            "stabilizing": [
                {"id": c.id, "k_i": -c.weights[F_NORMAL]} for c in self.stabilizing
            ],
            "tracking": [
                {
                    "id": c.id,
                    "k_i": c.weights[ERR],
                    "k_p": c.weights[ERR_VEL],
                    "k_d": c.weights[ERR_ACC],
                }
                for c in self.tracking
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerLibrary":
        f_opt = d["f_opt"]
        stab = tuple(
            Controller.stabilizing(c["k_i"], f_opt, c["id"]) for c in d["stabilizing"]
        )
        track = tuple(
            Controller.tracking(c["k_i"], c["k_p"], c["k_d"], c["id"]) for c in d["tracking"]
        )
        return cls(f_opt=f_opt, stabilizing=stab, tracking=track)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "ControllerLibrary":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_library(f_opt: float = 0.55) -> ControllerLibrary:
    stab = tuple(
        Controller.stabilizing(k, f_opt, f"stab-ki{k:g}") for k in STABILIZING_GAINS
    )
    track = tuple(
        Controller.tracking(ki, kp, kd, f"track-{ki:g}-{kp:g}-{kd:g}")
        for ki, kp, kd in TRACKING_GAINS
    )
    return ControllerLibrary(f_opt=f_opt, stabilizing=stab, tracking=track)


@dataclass(frozen=True)
class Agent:
    """One half of a dyad: two switching policies and one controller per role."""

    w_st: SwitchPolicy
    w_ts: SwitchPolicy
    c_s: Controller
    c_t: Controller

    def __post_init__(self):
        if self.c_s.kind is not ControllerKind.STABILIZING:
            raise GenomeError("c_s slot requires a stabilizing controller")
        if self.c_t.kind is not ControllerKind.TRACKING:
            raise GenomeError("c_t slot requires a tracking controller")


@dataclass(frozen=True)
class Lineage:
    uid: str
    generation: int = 0
    parents: tuple[str, ...] = ()
    origin: Origin = Origin.INIT


@dataclass(frozen=True)
class Dyad:
    agent1: Agent
    agent2: Agent
    lineage: Lineage = Lineage(uid="")

    def genome_key(self) -> tuple:
        """Dedup key: policy weights rounded to 1e-9 plus controller ids."""
        ws = []
        for agent in (self.agent1, self.agent2):
            for pol in (agent.w_st, agent.w_ts):
                ws.extend(round(w, 9) for w in pol.weights)
            ws.append(agent.c_s.id)
            ws.append(agent.c_t.id)
        return tuple(ws)


SPARSE_BIAS_MAGNITUDE = 0.3


def make_sparse_policy(rng: np.random.Generator) -> SwitchPolicy:
    """Single-feature policy: one slot gets +/-1, the bias +/-0.3, then normalized."""
    raw = [0.0] * N_FEATURES
    slot = int(rng.integers(0, N_FEATURES - 1))
    raw[slot] = float(rng.integers(0, 2) * 2 - 1)
    raw[BIAS] = SPARSE_BIAS_MAGNITUDE * float(rng.integers(0, 2) * 2 - 1)
    return normalize_policy(raw)


def make_agent(rng: np.random.Generator, library: ControllerLibrary) -> Agent:
    """Fresh sparse policies plus controllers drawn uniformly from the library."""
    if not library.stabilizing or not library.tracking:
        raise GenomeError("controller library must hold both kinds")
    w_st = make_sparse_policy(rng)
    w_ts = make_sparse_policy(rng)
    c_s = library.stabilizing[int(rng.integers(0, len(library.stabilizing)))]
    c_t = library.tracking[int(rng.integers(0, len(library.tracking)))]
    return Agent(w_st=w_st, w_ts=w_ts, c_s=c_s, c_t=c_t)


def _agent_to_dict(agent: Agent) -> dict:
    return {
        "w_st": list(agent.w_st.weights),
        "w_ts": list(agent.w_ts.weights),
        "c_s_id": agent.c_s.id,
        "c_t_id": agent.c_t.id,
    }


def _agent_from_dict(d: dict, library: ControllerLibrary) -> Agent:
    return Agent(
        w_st=SwitchPolicy(tuple(d["w_st"])),
        w_ts=SwitchPolicy(tuple(d["w_ts"])),
        c_s=library.get(d["c_s_id"]),
        c_t=library.get(d["c_t_id"]),
    )


def dyad_to_dict(dyad: Dyad) -> dict:
    return {
        "agent1": _agent_to_dict(dyad.agent1),
        "agent2": _agent_to_dict(dyad.agent2),
        "lineage": {
            "uid": dyad.lineage.uid,
            "generation": dyad.lineage.generation,
            "parents": list(dyad.lineage.parents),
            "origin": dyad.lineage.origin.value,
        },
    }


def dyad_from_dict(d: dict, library: ControllerLibrary) -> Dyad:
    lin = d.get("lineage", {})
    return Dyad(
        agent1=_agent_from_dict(d["agent1"], library),
        agent2=_agent_from_dict(d["agent2"], library),
        lineage=Lineage(
            uid=lin.get("uid", ""),
            generation=lin.get("generation", 0),
            parents=tuple(lin.get("parents", ())),
            origin=Origin(lin.get("origin", "init")),
        ),
    )
