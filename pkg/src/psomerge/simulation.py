"""Discrete-time simulation of a dedicated CAV lane and an adjacent HDV lane
through a diverging zone, under either the PSO planner or gap acceptance."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import (
    DzConfig, InvalidInputError, Lane, Role, VehicleState, check_unique, kmh_to_mps,
)
from .gap_acceptance import GaAction, GaParams, ga_step
from .kinematics import (
    MlcProfile, NewellParams, PositionHistory, SpringDamperParams, mlc_position, mlc_speed,
    newell_step, spring_damper_accel,
)
from .planner import CostParams, plan_all
from .sts import min_spacing

# spacing checks tolerate this much floating-point noise (m)
SPACING_TOL = 1e-9


class SimulationError(RuntimeError):
    """A physical invariant broke during a step (indicates a planner bug)."""


class PlannerKind(str, enum.Enum):
    PSO = "pso"
    GA = "ga"


class EventKind(str, enum.Enum):
    MERGE_EXECUTED = "MergeExecuted"
    DETOUR_EXIT = "DetourExit"
    PLAN_INFEASIBLE = "PlanInfeasible"


@dataclass(frozen=True)
class Event:
    t: float
    vehicle_id: str
    kind: EventKind
    x: float


@dataclass(frozen=True)
class Frame:
    t: float
    vehicle_id: str
    lane: Lane
    x: float
    v: float


@dataclass
class SimulationLog:
    frames: list[Frame] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    decision_seconds: list[float] = field(default_factory=list)
    # steps where a planned dedicated-lane CAV had to be held back by the spacing guard
    interventions: list[tuple[float, str]] = field(default_factory=list)


@dataclass(frozen=True)
class GenerationTemplate:
    """Random initial placement. Speeds are in km/h, positions in m."""

    n_cav: int = 5
    n_hdv: int = 8
    cav_speed_kmh: float = 100.0
    hdv_speed_kmh: tuple[float, float] = (60.0, 100.0)
    hdv_desired_kmh: tuple[float, float] = (80.0, 100.0)
    cav_head_x: tuple[float, float] = (180.0, 250.0)
    cav_spacing_max: float = 40.0
    hdv_head_x: tuple[float, float] = (250.0, 450.0)
    hdv_spacing_max: float = 120.0
    cav_in_zone: bool = True

    def __post_init__(self):
        if self.n_cav < 0 or self.n_hdv < 0:
            raise InvalidInputError("generation: vehicle counts must be >= 0")
        for name in ("hdv_speed_kmh", "hdv_desired_kmh", "cav_head_x", "hdv_head_x"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidInputError(f"generation: {name} range is reversed")


@dataclass(frozen=True)
class Scenario:
    dz: DzConfig = field(default_factory=DzConfig)
    cost: CostParams = field(default_factory=CostParams)
    ga: GaParams = field(default_factory=GaParams)
    newell: NewellParams = field(default_factory=NewellParams)
    vehicles: tuple[VehicleState, ...] = ()
    planner: PlannerKind = PlannerKind.PSO
    seed: int = 0
    duration: float = 120.0
    car_following: SpringDamperParams = field(default_factory=SpringDamperParams)

    def __post_init__(self):
        if self.duration < 0:
            raise InvalidInputError("duration must be >= 0")
        check_unique(self.vehicles)
        problems = spacing_problems(self.vehicles, self.dz, self.newell)
        if problems:
            raise InvalidInputError("initial spacing: " + problems[0])

    def with_planner(self, planner) -> "Scenario":
        return replace(self, planner=PlannerKind(planner))


def spacing_problems(vehicles, dz: DzConfig, newell: NewellParams) -> list[str]:
    out = []
    for lane in Lane:
        row = sorted((v for v in vehicles if v.lane is lane), key=lambda v: -v.x)
        for lead, fol in zip(row, row[1:]):
            gap = lead.x - fol.x
            need = dz.h_min_cav * fol.v if lane is Lane.DEDICATED else newell.jam_spacing
            if gap < need - SPACING_TOL:
                out.append(f"{fol.id} is {gap:.3f} m behind {lead.id} on the {lane.value} lane (< {need:.3f} m)")
    return out


def generate_scenario(seed: int, template: GenerationTemplate = GenerationTemplate(), **config) -> Scenario:
    """Random initial population, deterministic in ``seed``.

    ``config`` forwards the remaining ``Scenario`` fields (dz, cost, ...).
    """
    dz = config.get("dz", DzConfig())
    newell = config.get("newell", NewellParams())
    rng = np.random.default_rng(seed)
    vehicles = _place_cavs(rng, template, dz) + _place_hdvs(rng, template, dz, newell)
    return Scenario(vehicles=tuple(vehicles), seed=seed, **config)


def _place_cavs(rng, tpl: GenerationTemplate, dz: DzConfig) -> list[VehicleState]:
    v = kmh_to_mps(tpl.cav_speed_kmh)
    min_gap = dz.h_min_cav * max(v, dz.v_max_cav)
    if tpl.n_cav == 0:
        return []
    if tpl.cav_spacing_max < min_gap:
        raise InvalidInputError(
            f"generation: cav_spacing_max={tpl.cav_spacing_max} below the minimum CAV spacing {min_gap:.2f} m"
        )
    if tpl.cav_in_zone and tpl.cav_head_x[1] - (tpl.n_cav - 1) * min_gap < dz.x_s:
        raise InvalidInputError(
            f"generation: {tpl.n_cav} CAVs do not fit between x_s and cav_head_x={tpl.cav_head_x[1]}"
        )
    for _ in range(1000):
        xs = [rng.uniform(*tpl.cav_head_x)]
        for _ in range(tpl.n_cav - 1):
            xs.append(xs[-1] - rng.uniform(min_gap, tpl.cav_spacing_max))
        if not tpl.cav_in_zone or xs[-1] >= dz.x_s:
            break
    else:
        raise InvalidInputError("generation: could not place the CAVs inside the zone")
    return [
        VehicleState(f"cav{i + 1}", Lane.DEDICATED, Role.MLC_CAV, float(x), v)
        for i, x in enumerate(xs)
    ]


def _place_hdvs(rng, tpl: GenerationTemplate, dz: DzConfig, newell: NewellParams) -> list[VehicleState]:
    if tpl.n_hdv == 0:
        return []
    worst = newell.jam_spacing + dz.h_min_hdv * kmh_to_mps(tpl.hdv_speed_kmh[1])
    if tpl.hdv_spacing_max < worst:
        raise InvalidInputError(
            f"generation: hdv_spacing_max={tpl.hdv_spacing_max} below the minimum HDV spacing {worst:.2f} m"
        )
    speeds = [kmh_to_mps(rng.uniform(*tpl.hdv_speed_kmh)) for _ in range(tpl.n_hdv)]
    desired = [kmh_to_mps(rng.uniform(*tpl.hdv_desired_kmh)) for _ in range(tpl.n_hdv)]
    xs = [rng.uniform(*tpl.hdv_head_x)]
    for v in speeds[1:]:
        need = newell.jam_spacing + dz.h_min_hdv * v
        xs.append(xs[-1] - rng.uniform(need, tpl.hdv_spacing_max))
    return [
        VehicleState(f"hdv{i + 1}", Lane.HDV, Role.HDV, float(x), float(v), float(vd))
        for i, (x, v, vd) in enumerate(zip(xs, speeds, desired))
    ]


@dataclass
class SimState:
    step_index: int
    vehicles: dict[str, VehicleState]
    histories: dict[str, PositionHistory]
    done: set[str] = field(default_factory=set)

    def time(self, dt: float) -> float:
        return self.step_index * dt


def initial_state(scenario: Scenario) -> SimState:
    hist = {
        v.id: _history(0.0, v, scenario)
        for v in scenario.vehicles if v.lane is Lane.HDV
    }
    return SimState(0, {v.id: v for v in scenario.vehicles}, hist)


def _history(t: float, v: VehicleState, scenario: Scenario) -> PositionHistory:
    n = math.ceil(scenario.newell.tau / scenario.dz.dt) + 3
    return PositionHistory(t, v.x, v.v, maxlen=n)


def _lane(vehicles, lane: Lane) -> list[VehicleState]:
    return sorted((v for v in vehicles if v.lane is lane), key=lambda v: -v.x)


def _pending_mlc(state: SimState) -> list[VehicleState]:
    return [
        v for v in state.vehicles.values()
        if v.role is Role.MLC_CAV and v.id not in state.done
    ]


def step(state: SimState, scenario: Scenario, log: SimulationLog) -> SimState:
    """Advance one time step: decide, merge, record the frame, then move."""
    dz = scenario.dz
    dt = dz.dt
    t = state.time(dt)
    veh = dict(state.vehicles)
    hist = dict(state.histories)
    done = set(state.done)

    for v in _pending_mlc(state):
        if v.x > dz.x_f:
            done.add(v.id)
            log.events.append(Event(t, v.id, EventKind.DETOUR_EXIT, v.x))

    betas: dict[str, float] = {}
    ga_speed: dict[str, float] = {}
    merges: list[str] = []
    if scenario.planner is PlannerKind.PSO:
        res = plan_all(veh.values(), dz, scenario.cost)
        log.decision_seconds.extend(res.decision_seconds)
        for vid, plan in res.plans.items():
            betas[vid] = plan.beta
        for vid in res.infeasible:
            log.events.append(Event(t, vid, EventKind.PLAN_INFEASIBLE, veh[vid].x))
        merges = res.merges
        for vid in merges:
            _execute_merge(vid, veh, hist, done, t, scenario, log)
    else:
        for v in _lane(veh.values(), Lane.DEDICATED):
            if v.role is not Role.MLC_CAV or v.id in done or not dz.in_dz(v.x):
                continue
            d = ga_step(v, _lane(veh.values(), Lane.HDV), dz, scenario.ga, dt)
            if d.action is GaAction.MERGE:
                _execute_merge(v.id, veh, hist, done, t, scenario, log)
            else:
                ga_speed[v.id] = d.v_next

    for vid in sorted(veh):
        v = veh[vid]
        log.frames.append(Frame(t, vid, v.lane, v.x, v.v))

    new = dict(veh)
    lead_x = None
    for v in _lane(veh.values(), Lane.DEDICATED):
        if v.id in betas:
            p = MlcProfile(v.x, v.v, dz.v_min_cav, betas[v.id])
            x_new, v_new = mlc_position(p, dt), mlc_speed(p, dt)
        elif v.id in ga_speed:
            v_new = ga_speed[v.id]
            x_new = v.x + 0.5 * (v.v + v_new) * dt
        else:
            x_new, v_new = _follow_dedicated(v, lead_x, scenario)
        if lead_x is not None and x_new > lead_x - min_spacing(1, dz):
            if v.id in betas:
                log.interventions.append((t, v.id))
            x_new = max(v.x, lead_x - min_spacing(1, dz))
            v_new = min(v_new, (x_new - v.x) / dt)
        new[v.id] = replace(v, x=x_new, v=v_new)
        lead_x = x_new

    lead = None
    for v in _lane(veh.values(), Lane.HDV):
        x_new, v_new = newell_step(
            v.x, v.v, v.v_desired, hist[lead.id] if lead else None, scenario.newell, dt, t,
            max_speed_gain=dz.a_accel_max * dt,
        )
        # decelerate no harder than the bound unless the leader's new position demands it
        floor = v.x + max(0.0, v.v - dz.a_decel_max * dt) * dt
        if lead is not None:
            floor = min(floor, new[lead.id].x - scenario.newell.jam_spacing)
        if x_new < floor:
            x_new = floor
            v_new = (x_new - v.x) / dt
        new[v.id] = replace(v, x=x_new, v=v_new)
        lead = v
    t_next = (state.step_index + 1) * dt
    for vid, h in hist.items():
        h.append(t_next, new[vid].x, new[vid].v)
    return SimState(state.step_index + 1, new, hist, done)


def _follow_dedicated(v: VehicleState, lead_x: Optional[float], scenario: Scenario) -> tuple[float, float]:
    """Spring-mass-damper following for CAVs that are not executing a lane change plan."""
    dz = scenario.dz
    cf = scenario.car_following
    p = SpringDamperParams(cf.alpha if lead_x is not None else 0.0, cf.beta,
                           min_spacing(1, dz), dz.v_max_cav)
    dx = (lead_x - v.x) if lead_x is not None else p.s_tilde
    a = spring_damper_accel(dx, v.v, p)
    a = min(max(a, -dz.a_decel_max), dz.a_accel_max)
    v_new = max(0.0, v.v + a * dz.dt)
    return v.x + 0.5 * (v.v + v_new) * dz.dt, v_new


def _execute_merge(vid, veh, hist, done, t, scenario: Scenario, log: SimulationLog) -> None:
    v = veh[vid]
    merged = replace(v, lane=Lane.HDV, role=Role.MERGED_CAV, v_desired=v.v)
    jam = scenario.newell.jam_spacing
    for other in veh.values():
        if other.lane is Lane.HDV and abs(other.x - v.x) < jam - SPACING_TOL:
            raise SimulationError(
                f"t={t:.1f}s: {vid} merged {abs(other.x - v.x):.2f} m from {other.id} on the HDV lane"
            )
    veh[vid] = merged
    hist[vid] = _history(t, merged, scenario)
    done.add(vid)
    log.events.append(Event(t, vid, EventKind.MERGE_EXECUTED, v.x))


def run(scenario: Scenario) -> tuple[SimulationLog, "Metrics"]:
    log = SimulationLog()
    state = initial_state(scenario)
    n_steps = int(round(scenario.duration / scenario.dz.dt))
    for _ in range(n_steps):
        state = step(state, scenario, log)
        if not _pending_mlc(state):
            break
    return log, compute_metrics(log.frames, log.events, scenario.dz)


@dataclass
class Metrics:
    avg_dz_speed: float
    avg_hdv_speed: float
    mean_merge_position: float
    mean_merge_time: float
    n_merged: int
    n_detoured: int
    avg_dz_speed_incl_merged: float
    per_vehicle: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "avg_dz_speed_mps": self.avg_dz_speed,
            "avg_dz_speed_kmh": self.avg_dz_speed * 3.6,
            "avg_dz_speed_incl_merged_mps": self.avg_dz_speed_incl_merged,
            "avg_dz_speed_incl_merged_kmh": self.avg_dz_speed_incl_merged * 3.6,
            "avg_hdv_speed_mps": self.avg_hdv_speed,
            "avg_hdv_speed_kmh": self.avg_hdv_speed * 3.6,
            "mean_merge_position_m": self.mean_merge_position,
            "mean_merge_time_s": self.mean_merge_time,
            "n_merged": self.n_merged,
            "n_detoured": self.n_detoured,
            "per_vehicle": self.per_vehicle,
        }


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def compute_metrics(frames, events, dz: DzConfig) -> Metrics:
    """Summary statistics derived from frames and events alone.

    Undefined quantities (no samples) are NaN.
    """
    cav_ids = {f.vehicle_id for f in frames if f.lane is Lane.DEDICATED}
    merges = [e for e in events if e.kind is EventKind.MERGE_EXECUTED]
    detours = [e for e in events if e.kind is EventKind.DETOUR_EXIT]
    in_dz = [f for f in frames if dz.x_s <= f.x <= dz.x_f]
    frame_at = {(f.t, f.vehicle_id): f for f in frames}

    per_vehicle = {}
    for vid in sorted(cav_ids):
        rec = {"merge_time_s": None, "merge_position_m": None, "merge_speed_kmh": None,
               "detour": False}
        speeds = [f.v for f in in_dz if f.vehicle_id == vid and f.lane is Lane.DEDICATED]
        rec["dz_speed_kmh"] = _mean(speeds) * 3.6 if speeds else None
        per_vehicle[vid] = rec
    for e in merges:
        rec = per_vehicle.setdefault(e.vehicle_id, {})
        rec["merge_time_s"] = e.t
        rec["merge_position_m"] = e.x
        f = frame_at.get((e.t, e.vehicle_id))
        rec["merge_speed_kmh"] = f.v * 3.6 if f else None
    for e in detours:
        per_vehicle.setdefault(e.vehicle_id, {})["detour"] = True

    return Metrics(
        avg_dz_speed=_mean(f.v for f in in_dz if f.lane is Lane.DEDICATED),
        avg_hdv_speed=_mean(f.v for f in in_dz if f.lane is Lane.HDV and f.vehicle_id not in cav_ids),
        mean_merge_position=_mean(e.x for e in merges),
        mean_merge_time=_mean(e.t for e in merges),
        n_merged=len(merges),
        n_detoured=len(detours),
        avg_dz_speed_incl_merged=_mean(f.v for f in in_dz if f.vehicle_id in cav_ids),
        per_vehicle=per_vehicle,
    )


def spacing_violations(frames, dz: DzConfig, jam_spacing: float) -> list[str]:
    """Same-lane spacing violations over every frame.

    Dedicated lane: adjacent CAVs at least ``min_spacing(1)`` apart.
    HDV lane: at least the jam spacing.
    """
    out = []
    by_t: dict[float, list[Frame]] = {}
    for f in frames:
        by_t.setdefault(f.t, []).append(f)
    m1 = min_spacing(1, dz)
    for t, fs in by_t.items():
        for lane, need in ((Lane.DEDICATED, m1), (Lane.HDV, jam_spacing)):
            row = sorted((f for f in fs if f.lane is lane), key=lambda f: -f.x)
            for a, b in zip(row, row[1:]):
                if a.x - b.x < need - SPACING_TOL:
                    out.append(f"t={t:.1f} {lane.value}: {b.vehicle_id} {a.x - b.x:.3f} m behind {a.vehicle_id}")
    return out
