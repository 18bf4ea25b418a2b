"""Single-trial dynamics: role switching, force-rate integration, RK4 egg motion.

One trial advances in fixed steps. Per step: agents outside their
refractory window evaluate the switching policy of their current role on
their own observations, then the active controller of each agent sets a
force rate, forces integrate with a non-negativity clamp, and the egg
state advances one RK4 step under the (held) net force. Agent 2 observes
the task mirrored: reference and error entries are negated, the normal
force is shared.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .agents import (
    Agent,
    Controller,
    Dyad,
    FeatureVector,
    Role,
    _dot9,
)
from .trajectory import ReferenceTrajectory

REFRACTORY_SECONDS = 0.25

TRIAL_CSV_HEADER = ("t", "r", "x", "e", "f1", "f2", "fN", "role1", "role2")


class SimulationError(ValueError):
    """Invalid simulation inputs."""


class SimulationDiverged(SimulationError):
    """State became non-finite during integration."""


@dataclass(frozen=True)
class EggParams:
    mass: float = 0.5
    damping: float = 1.0
    f_min: float = 0.1
    f_max: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise SimulationError("mass must be positive")
        if self.damping < 0:
            raise SimulationError("damping must be non-negative")
        if not 0 <= self.f_min < self.f_max:
            raise SimulationError("force band must satisfy 0 <= f_min < f_max")

    @property
    def f_opt(self) -> float:
        """Mid-band force setpoint."""
        return 0.5 * (self.f_min + self.f_max)


@dataclass(frozen=True)
class InitSpec:
    x: float = 0.0
    v: float = 0.0
    f1: float = 0.55
    f2: float = 0.55
    role1: Role = Role.STABILIZE
    role2: Role = Role.STABILIZE

    @classmethod
    def resting(cls, params: EggParams) -> "InitSpec":
        """Egg at rest, both forces at the mid-band setpoint, both agents stabilizing."""
        return cls(f1=params.f_opt, f2=params.f_opt)


@dataclass(frozen=True)
class SimState:
    """Step-boundary state, including the lagged values backing finite differences."""

    step: int
    t: float
    x: float
    v: float
    f1: float
    f2: float
    role1: Role
    role2: Role
    refract1: float
    refract2: float
    err_prev: float
    err_vel_prev: float
    f_normal_prev: float

    @classmethod
    def initial(cls, init: InitSpec) -> "SimState":
        return cls(
            step=0,
            t=0.0,
            x=init.x,
            v=init.v,
            f1=init.f1,
            f2=init.f2,
            role1=init.role1,
            role2=init.role2,
            refract1=0.0,
            refract2=0.0,
            err_prev=0.0,
            err_vel_prev=0.0,
            f_normal_prev=0.0,
        )


@dataclass(frozen=True)
class TrialRecord:
    """Per-step trial arrays plus identity of what produced them."""

    t: np.ndarray
    r: np.ndarray
    x: np.ndarray
    e: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f_n: np.ndarray
    role1: np.ndarray
    role2: np.ndarray
    fdot1: np.ndarray
    fdot2: np.ndarray
    dt: float
    traj_id: str = ""
    dyad_uid: str = ""
    valid: bool = True

    def __len__(self) -> int:
        return len(self.t)

    def truncated(self, n: int) -> "TrialRecord":
        return replace(
            self,
            t=self.t[:n],
            r=self.r[:n],
            x=self.x[:n],
            e=self.e[:n],
            f1=self.f1[:n],
            f2=self.f2[:n],
            f_n=self.f_n[:n],
            role1=self.role1[:n],
            role2=self.role2[:n],
            fdot1=self.fdot1[:n],
            fdot2=self.fdot2[:n],
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRIAL_CSV_HEADER)
            for k in range(len(self.t)):
                w.writerow(
                    (
                        repr(float(self.t[k])),
                        repr(float(self.r[k])),
                        repr(float(self.x[k])),
                        repr(float(self.e[k])),
                        repr(float(self.f1[k])),
                        repr(float(self.f2[k])),
                        repr(float(self.f_n[k])),
                        int(self.role1[k]),
                        int(self.role2[k]),
                    )
                )


def build_features(
    agent_index: int,
    r: float,
    r_vel: float,
    r_acc: float,
    err: float,
    err_vel: float,
    err_acc: float,
    f_normal: float,
    f_normal_vel: float,
) -> FeatureVector:
    """Observation for one agent; agent 2 sees the kinematic entries mirrored."""
    if agent_index == 1:
        return FeatureVector(r, r_vel, r_acc, err, err_vel, err_acc, f_normal, f_normal_vel, 1.0)
    if agent_index == 2:
        return FeatureVector(
            -r, -r_vel, -r_acc, -err, -err_vel, -err_acc, f_normal, f_normal_vel, 1.0
        )
    raise SimulationError(f"agent_index must be 1 or 2, got {agent_index}")


def _rk4(x: float, v: float, net: float, mass: float, damping: float, dt: float):
    """One RK4 step of m*x'' + b*x' = net with the net force held constant."""
    k1x = v
    k1v = (net - damping * v) / mass
    v2 = v + 0.5 * dt * k1v
    k2x = v2
    k2v = (net - damping * v2) / mass
    v3 = v + 0.5 * dt * k2v
    k3x = v3
    k3v = (net - damping * v3) / mass
    v4 = v + dt * k3v
    k4x = v4
    k4v = (net - damping * v4) / mass
    return (
        x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )


def rk4_step(state: SimState, net_force: float, params: EggParams, dt: float):
    """Advance only the egg (x, v) one step under a held net force."""
    if not dt > 0:
        raise SimulationError("dt must be positive")
    if not (math.isfinite(state.x) and math.isfinite(state.v) and math.isfinite(net_force)):
        raise SimulationDiverged("non-finite state")
    return _rk4(state.x, state.v, net_force, params.mass, params.damping, dt)


def _agent_tables(agent: Agent):
    """Weight tuples ordered by role index for the hot loop."""
    policies = (agent.w_st.weights, agent.w_ts.weights)
    controllers = (agent.c_s.weights, agent.c_t.weights)
    return policies, controllers


def _run(
    dyad: Dyad,
    r_arr,
    rd_arr,
    rdd_arr,
    params: EggParams,
    dt: float,
    state: SimState,
    n_steps: int,
    record: bool,
):
    """Shared trial core: advance n_steps from state, optionally recording.

    Returns (final_state, rows_or_None, valid). All per-step arithmetic
    lives here so single-step and whole-trial paths cannot drift apart.
    """
    pol1, ctl1 = _agent_tables(dyad.agent1)
    pol2, ctl2 = _agent_tables(dyad.agent2)
    mass, damping = params.mass, params.damping
    refr_steps = int(round(REFRACTORY_SECONDS / dt))

    k = state.step
    x, v = state.x, state.v
    f1, f2 = state.f1, state.f2
    role1, role2 = int(state.role1), int(state.role2)
    ref1 = int(round(state.refract1 / dt))
    ref2 = int(round(state.refract2 / dt))
    e_prev = state.err_prev
    ed_prev = state.err_vel_prev
    fn_prev = state.f_normal_prev

    rows = (
        {name: [] for name in ("t", "r", "x", "e", "f1", "f2", "f_n", "role1", "role2", "fdot1", "fdot2")}
        if record
        else None
    )
    valid = True

    for _ in range(n_steps):
        rk = r_arr[k]
        rdk = rd_arr[k]
        rddk = rdd_arr[k]
        e = rk - x
        if k > 0:
            ed = (e - e_prev) / dt
            edd = (ed - ed_prev) / dt
        else:
            ed = 0.0
            edd = 0.0
        fn = f1 if f1 < f2 else f2
        fnd = (fn - fn_prev) / dt if k > 0 else 0.0

        th1 = (rk, rdk, rddk, e, ed, edd, fn, fnd, 1.0)
        th2 = (-rk, -rdk, -rddk, -e, -ed, -edd, fn, fnd, 1.0)

        if ref1 == 0:
            if _dot9(pol1[role1], th1) > 0.0:
                role1 ^= 1
                ref1 = refr_steps
        else:
            ref1 -= 1
        if ref2 == 0:
            if _dot9(pol2[role2], th2) > 0.0:
                role2 ^= 1
                ref2 = refr_steps
        else:
            ref2 -= 1

        fdot1 = _dot9(ctl1[role1], th1)
        fdot2 = _dot9(ctl2[role2], th2)
        f1 = f1 + fdot1 * dt
        if f1 < 0.0:
            f1 = 0.0
        f2 = f2 + fdot2 * dt
        if f2 < 0.0:
            f2 = 0.0

        x, v = _rk4(x, v, f1 - f2, mass, damping, dt)

        if not (
            math.isfinite(x) and math.isfinite(v) and math.isfinite(f1) and math.isfinite(f2)
        ):
            valid = False
            break

        if record:
            rows["t"].append(k * dt)
            rows["r"].append(rk)
            rows["x"].append(rk - e)
            rows["e"].append(e)
            rows["f1"].append(f1)
            rows["f2"].append(f2)
            rows["f_n"].append(f1 if f1 < f2 else f2)
            rows["role1"].append(role1)
            rows["role2"].append(role2)
            rows["fdot1"].append(fdot1)
            rows["fdot2"].append(fdot2)

        e_prev, ed_prev, fn_prev = e, ed, fn
        k += 1

    final = SimState(
        step=k,
        t=k * dt,
        x=x,
        v=v,
        f1=f1,
        f2=f2,
        role1=Role(role1),
        role2=Role(role2),
        refract1=ref1 * dt,
        refract2=ref2 * dt,
        err_prev=e_prev,
        err_vel_prev=ed_prev,
        f_normal_prev=fn_prev,
    )
    return final, rows, valid


def step_trial(
    state: SimState,
    dyad: Dyad,
    traj: ReferenceTrajectory,
    params: EggParams,
    dt: float,
) -> SimState:
    """Advance the full coupled state by one step."""
    if not dt > 0:
        raise SimulationError("dt must be positive")
    for val in (state.x, state.v, state.f1, state.f2):
        if not math.isfinite(val):
            raise SimulationDiverged("non-finite state")
    r_arr, rd_arr, rdd_arr = traj.sample(dt)
    if state.step >= len(r_arr):
        raise SimulationError("state is already past the end of the trial")
    final, _, valid = _run(dyad, r_arr, rd_arr, rdd_arr, params, dt, state, 1, record=False)
    if not valid:
        raise SimulationDiverged("state became non-finite")
    return final


def simulate_trial(
    dyad: Dyad,
    traj: ReferenceTrajectory,
    params: EggParams,
    dt: float,
    init: InitSpec | None = None,
) -> TrialRecord:
    """Run one full trial; deterministic in its arguments.

    A trial that diverges is returned flagged invalid rather than raising,
    so population scoring can map it to the rank-worst sentinel.
    """
    if not dt > 0:
        raise SimulationError("dt must be positive")
    if init is None:
        init = InitSpec.resting(params)
    r_arr, rd_arr, rdd_arr = traj.sample(dt)
    n_steps = len(r_arr)
    # list indexing is measurably faster than ndarray scalar access here
    r_l, rd_l, rdd_l = r_arr.tolist(), rd_arr.tolist(), rdd_arr.tolist()
    state = SimState.initial(init)
    _, rows, valid = _run(dyad, r_l, rd_l, rdd_l, params, dt, state, n_steps, record=True)
    return TrialRecord(
        t=np.asarray(rows["t"]),
        r=np.asarray(rows["r"]),
        x=np.asarray(rows["x"]),
        e=np.asarray(rows["e"]),
        f1=np.asarray(rows["f1"]),
        f2=np.asarray(rows["f2"]),
        f_n=np.asarray(rows["f_n"]),
        role1=np.asarray(rows["role1"], dtype=np.int8),
        role2=np.asarray(rows["role2"], dtype=np.int8),
        fdot1=np.asarray(rows["fdot1"]),
        fdot2=np.asarray(rows["fdot2"]),
        dt=dt,
        traj_id=traj.id,
        dyad_uid=dyad.lineage.uid,
        valid=valid,
    )


def _never_policy():
    from .agents import SwitchPolicy

    weights = [0.0] * 9
    weights[-1] = -1.0
    return SwitchPolicy(tuple(weights))


def locked_dyad(c_s: Controller, c_t: Controller) -> Dyad:
    """Dyad whose agents never switch roles (bias-negative policies)."""
    never = _never_policy()
    agent = Agent(w_st=never, w_ts=never, c_s=c_s, c_t=c_t)
    return Dyad(agent1=agent, agent2=agent)


def _solo_run(
    controller: Controller,
    traj: ReferenceTrajectory,
    params: EggParams,
    dt: float,
    start_force: float,
):
    """One agent against a partner that holds exactly f_opt; returns
    (err array, f_n array). Used by the controller sufficiency checks."""
    r_arr, rd_arr, rdd_arr = traj.sample(dt)
    r_l, rd_l, rdd_l = r_arr.tolist(), rd_arr.tolist(), rdd_arr.tolist()
    cw = controller.weights
    mass, damping = params.mass, params.damping
    partner = params.f_opt
    x = v = 0.0
    f1 = start_force
    e_prev = ed_prev = fn_prev = 0.0
    errs = []
    fns = []
    for k in range(len(r_l)):
        rk, rdk, rddk = r_l[k], rd_l[k], rdd_l[k]
        e = rk - x
        if k > 0:
            ed = (e - e_prev) / dt
            edd = (ed - ed_prev) / dt
        else:
            ed = 0.0
            edd = 0.0
        fn = f1 if f1 < partner else partner
        fnd = (fn - fn_prev) / dt if k > 0 else 0.0
        th = (rk, rdk, rddk, e, ed, edd, fn, fnd, 1.0)
        f1 = f1 + _dot9(cw, th) * dt
        if f1 < 0.0:
            f1 = 0.0
        x, v = _rk4(x, v, f1 - partner, mass, damping, dt)
        errs.append(e)
        fns.append(f1 if f1 < partner else partner)
        e_prev, ed_prev, fn_prev = e, ed, fn
    return np.asarray(errs), np.asarray(fns)


def solo_tracking_loss(
    controller: Controller,
    traj: ReferenceTrajectory,
    params: EggParams,
    dt: float,
) -> float:
    """Tracking loss of one agent locked in the tracking role against a
    partner holding constant mid-band force."""
    errs, _ = _solo_run(controller, traj, params, dt, start_force=params.f_opt)
    r_arr, _, _ = traj.sample(dt)
    rms_r = math.sqrt(float(np.mean(r_arr**2)))
    if rms_r == 0.0:
        raise SimulationError("degenerate trajectory for solo test")
    return math.sqrt(float(np.mean(errs**2))) / rms_r


def solo_stabilizing_normal_force(
    controller: Controller,
    traj: ReferenceTrajectory,
    params: EggParams,
    dt: float,
    start_force: float = 0.0,
) -> np.ndarray:
    """Normal-force series of one agent locked in the stabilizing role
    against a constant mid-band partner, starting from start_force."""
    _, fns = _solo_run(controller, traj, params, dt, start_force=start_force)
    return fns


def validate_library_sufficiency(
    library,
    trajectories,
    params: EggParams,
    dt: float,
    tracking_loss_limit: float = 0.5,
    transient_s: float = 2.0,
) -> None:
    """Check every library controller passes its solo-role test on every
    trajectory; raises SimulationError naming the first failure."""
    for traj in trajectories:
        for ctrl in library.tracking:
            loss = solo_tracking_loss(ctrl, traj, params, dt)
            if not loss < tracking_loss_limit:
                raise SimulationError(
                    f"controller {ctrl.id} solo tracking loss {loss:.3f} "
                    f">= {tracking_loss_limit} on {traj.id}"
                )
        for ctrl in library.stabilizing:
            fn = solo_stabilizing_normal_force(ctrl, traj, params, dt)
            tail = fn[int(round(transient_s / dt)) :]
            if not ((tail >= params.f_min) & (tail <= params.f_max)).all():
                raise SimulationError(
                    f"controller {ctrl.id} left the force band after the "
                    f"transient on {traj.id}"
                )
