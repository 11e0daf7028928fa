"""Prioritized system-optimal planning of lane-changing CAVs.

Lane changers are planned headmost first. Each one sees the chosen plans of
the vehicles ahead of it as constraints: their dedicated-lane trajectories
bound how far it may advance, and their merges reserve space on the HDV lane.
Each vehicle then picks the (beta, merge step) pair that minimizes the
expected detour time plus the delay imposed on its followers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    DzConfig, SortedOrdering, TrajectoryPlan, VehicleState, kmh_to_mps,
    sort_and_classify,
)
from .kinematics import capped_beta_max, mlc_position_grid, mlc_speed, MlcProfile
from .sts import (
    LeaderTrajectory, StsIntervalSet, attainable_set, attainable_upper, candidate_set,
    joinable_set, planning_horizon, predict_hdv_lane, reachable_set, step_times,
)

# costs closer than this (seconds) count as equal and fall through to the tie-break
COST_RESOLUTION = 9


@dataclass(frozen=True)
class CostParams:
    detour_distance: float = 3000.0
    detour_speed: float = kmh_to_mps(60.0)
    failure_rate_coeff: float = 0.046

    def __post_init__(self):
        if self.detour_distance <= 0 or self.detour_speed <= 0:
            raise ValueError("cost: detour_distance and detour_speed must be > 0")
        if self.failure_rate_coeff < 0:
            raise ValueError("cost: failure_rate_coeff must be >= 0")


def cost(x_merge: float, t_merge: float, subject: VehicleState, n_followers: int,
         dz: DzConfig, cp: CostParams) -> float:
    """Expected detour time plus total follower delay, in seconds."""
    if subject.v <= 0:
        raise ValueError("cost is undefined for a stopped subject")
    detour = math.exp(-cp.failure_rate_coeff * (dz.x_f - x_merge)) * cp.detour_distance / cp.detour_speed
    delay = n_followers * (t_merge - (x_merge - subject.x) / subject.v)
    return detour + delay


def selection_key(c: float, step: int, beta_index: int) -> tuple:
    """Ordering used to pick a plan: cost, then earlier merge, then smaller beta."""
    return (round(c, COST_RESOLUTION), step, beta_index)


def beta_grid(v0: float, dz: DzConfig) -> np.ndarray:
    bmax = capped_beta_max(v0, dz.v_min_cav, dz.a_decel_max, dz.beta_ceiling)
    if dz.d_beta is None:
        return np.linspace(0.0, bmax, dz.n_beta_steps + 1)
    n = int(math.floor(bmax / dz.d_beta + 1e-9))
    grid = dz.d_beta * np.arange(n + 1)
    if bmax - grid[-1] > 1e-12:
        grid = np.append(grid, bmax)
    return grid


@dataclass
class PlanningContext:
    subject: VehicleState
    omega_index: int
    n_followers: int
    ordering: SortedOrdering
    leader_plans: tuple[LeaderTrajectory, ...]
    cost_params: CostParams
    betas: np.ndarray
    horizon: int
    reachable: StsIntervalSet
    attainable: StsIntervalSet
    joinable: StsIntervalSet
    candidate: StsIntervalSet
    upper: np.ndarray = field(repr=False)


def build_context(subject: VehicleState, ordering: SortedOrdering,
                  vehicles: dict[str, VehicleState], leaders: Sequence[LeaderTrajectory],
                  dz: DzConfig, cp: CostParams) -> PlanningContext:
    i = ordering.omega.index(subject.id) + 1
    horizon = planning_horizon(subject.x, dz)
    betas = beta_grid(subject.v, dz)
    pi = [vehicles[vid] for vid in ordering.pi]
    r = reachable_set(subject.x, subject.v, float(betas[-1]), dz, horizon)
    upper = attainable_upper(i, leaders, dz, horizon)
    a = attainable_set(i, leaders, dz, horizon)
    j = joinable_set(predict_hdv_lane(pi, [l.plan for l in leaders], dz), dz, horizon)
    return PlanningContext(
        subject=subject, omega_index=i, n_followers=len(ordering.omega) - i,
        ordering=ordering, leader_plans=tuple(leaders), cost_params=cp, betas=betas,
        horizon=horizon, reachable=r, attainable=a, joinable=j,
        candidate=candidate_set(r, a, j), upper=upper,
    )


def _make_plan(ctx: PlanningContext, dz: DzConfig, b: int, k: int, x: float, c: float) -> TrajectoryPlan:
    s = ctx.subject
    beta = float(ctx.betas[b])
    t = k * dz.dt
    return TrajectoryPlan(
        vehicle_id=s.id, beta=beta, x0=s.x, v0=s.v, v_min=dz.v_min_cav, dt=dz.dt,
        step=k, t_merge=t, x_merge=float(x),
        v_merge=mlc_speed(MlcProfile(s.x, s.v, dz.v_min_cav, beta), t), cost=c,
    )


def feasibility_grid(ctx: PlanningContext, dz: DzConfig) -> tuple[np.ndarray, np.ndarray]:
    """Positions and feasibility of every (beta, step) pair.

    A pair is feasible when the merge point is a candidate slot and every
    step from 1 up to the merge is attainable.
    """
    s = ctx.subject
    xs = mlc_position_grid(s.x, s.v, dz.v_min_cav, ctx.betas, step_times(dz, ctx.horizon))
    att = ctx.attainable.contains_grid(xs)
    att[:, 0] = True
    ok_so_far = np.logical_and.accumulate(att, axis=1)
    feasible = ctx.candidate.contains_grid(xs) & ok_so_far
    feasible[:, 0] = False
    return xs, feasible


def optimize_trajectory(ctx: PlanningContext, dz: DzConfig) -> Optional[TrajectoryPlan]:
    """Cheapest feasible plan for the subject, or ``None`` if there is none.

    A joinable current position means merging now. Otherwise betas are
    scanned in increasing order and, for each, only the earliest feasible step
    is costed (cost grows with merge time at fixed beta). A merge point at or
    beyond the position of an already found earliest-feasible point of a
    smaller beta is dominated, so each scan stops there.
    """
    s = ctx.subject
    cp = ctx.cost_params
    if dz.in_dz(s.x) and ctx.joinable.contains(0, s.x):
        c = cost(s.x, 0.0, s, ctx.n_followers, dz, cp)
        return _make_plan(ctx, dz, 0, 0, s.x, c)

    xs, feasible = feasibility_grid(ctx, dz)
    has_hit = feasible.any(axis=1)
    first = np.argmax(feasible, axis=1)
    best = None
    best_key = None
    x_bound = math.inf
    for b in np.flatnonzero(has_hit):
        # rows increase with t, so the earliest feasible point below the bound
        # exists iff the row's earliest feasible point is below it
        k = int(first[b])
        x = float(xs[b, k])
        if x >= x_bound:
            continue
        x_bound = x
        c = cost(x, k * dz.dt, s, ctx.n_followers, dz, cp)
        key = selection_key(c, k, int(b))
        if best_key is None or key < best_key:
            best_key = key
            best = (int(b), k, x, c)
    if best is None:
        return None
    return _make_plan(ctx, dz, *best)


def holding_plan(ctx: PlanningContext, dz: DzConfig) -> TrajectoryPlan:
    """Profile for a vehicle without a feasible merge.

    Keeps the smallest beta that respects the leaders' spacing the longest,
    which is ``beta = 0`` whenever constant speed never closes in on them.
    """
    s = ctx.subject
    xs = mlc_position_grid(s.x, s.v, dz.v_min_cav, ctx.betas, step_times(dz, ctx.horizon))
    ok = xs[:, 1:] <= ctx.upper[None, 1:]
    run = np.where(ok.all(axis=1), ok.shape[1], np.argmin(ok, axis=1))
    b = int(np.argmax(run))
    return TrajectoryPlan(
        vehicle_id=s.id, beta=float(ctx.betas[b]), x0=s.x, v0=s.v, v_min=dz.v_min_cav,
        dt=dz.dt, step=None, feasible=False,
    )


@dataclass
class PlanningResult:
    ordering: SortedOrdering
    plans: dict[str, TrajectoryPlan] = field(default_factory=dict)
    merges: list[str] = field(default_factory=list)
    infeasible: list[str] = field(default_factory=list)
    decision_seconds: list[float] = field(default_factory=list)


def plan_all(vehicles: Iterable[VehicleState], dz: DzConfig, cp: CostParams) -> PlanningResult:
    """Plan every lane-changing CAV in the zone, headmost first."""
    vehicles = list(vehicles)
    ordering = sort_and_classify(vehicles, dz)
    by_id = {v.id: v for v in vehicles}
    result = PlanningResult(ordering)
    leaders: list[LeaderTrajectory] = []
    for vid, idx in zip(ordering.omega_l, ordering.l_indices):
        t0 = time.perf_counter()
        ctx = build_context(by_id[vid], ordering, by_id, leaders, dz, cp)
        plan = optimize_trajectory(ctx, dz)
        result.decision_seconds.append(time.perf_counter() - t0)
        if plan is None:
            plan = holding_plan(ctx, dz)
            result.infeasible.append(vid)
        elif plan.immediate:
            result.merges.append(vid)
        result.plans[vid] = plan
        leaders.append(LeaderTrajectory(idx, plan))
    return result
