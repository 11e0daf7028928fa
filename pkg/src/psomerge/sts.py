"""Space-time slot sets over a discrete planning horizon.

Every set is stored per time step as a sorted list of disjoint closed
position intervals. Steps run from 0 (the planning instant) to ``horizon``
inclusive; positions stay continuous and exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import DzConfig, TrajectoryPlan, VehicleState
from .kinematics import mlc_position_grid


class StsIntervalSet:
    """Per-step unions of closed intervals.

    ``lo`` and ``hi`` have shape ``(horizon + 1, m)``; unused slots are NaN and
    always sit after the used ones.
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.ndim != 2 or lo.shape != hi.shape:
            raise ValueError("lo/hi must be 2-D arrays of equal shape")
        self.lo, self.hi = _canonical(lo, hi)

    @classmethod
    def from_lists(cls, steps: Sequence[Sequence[tuple[float, float]]]) -> "StsIntervalSet":
        m = max([len(s) for s in steps] + [1])
        lo = np.full((len(steps), m), np.nan)
        hi = np.full((len(steps), m), np.nan)
        for k, ivs in enumerate(steps):
            for j, (a, b) in enumerate(ivs):
                lo[k, j], hi[k, j] = a, b
        return cls(lo, hi)

    @classmethod
    def full(cls, dz: DzConfig, horizon: int) -> "StsIntervalSet":
        n = horizon + 1
        return cls(np.full((n, 1), dz.x_s), np.full((n, 1), dz.x_f))

    @property
    def horizon(self) -> int:
        return self.lo.shape[0] - 1

    def intervals(self, k: int) -> list[tuple[float, float]]:
        ok = ~np.isnan(self.lo[k])
        return [(float(a), float(b)) for a, b in zip(self.lo[k][ok], self.hi[k][ok])]

    def is_empty(self, k: int) -> bool:
        return bool(np.isnan(self.lo[k, 0]))

    def contains(self, k: int, x: float) -> bool:
        if not 0 <= k <= self.horizon:
            return False
        for a, b in self.intervals(k):
            if a <= x <= b:
                return True
        return False

    def contains_grid(self, xs: np.ndarray) -> np.ndarray:
        """Membership of ``xs[..., k]`` in step ``k``; ``xs`` has ``horizon + 1``
        columns."""
        xs = np.asarray(xs, dtype=float)[..., None]
        inside = (self.lo <= xs) & (xs <= self.hi)
        return inside.any(axis=-1)

    def intersect(self, other: "StsIntervalSet") -> "StsIntervalSet":
        if self.horizon != other.horizon:
            raise ValueError(
                f"horizon mismatch: {self.horizon} vs {other.horizon}"
            )
        lo = np.maximum(self.lo[:, :, None], other.lo[:, None, :])
        hi = np.minimum(self.hi[:, :, None], other.hi[:, None, :])
        n = lo.shape[0]
        lo = lo.reshape(n, -1)
        hi = hi.reshape(n, -1)
        empty = ~(lo <= hi)
        lo[empty] = np.nan
        hi[empty] = np.nan
        return StsIntervalSet(lo, hi)

    def __eq__(self, other):
        if not isinstance(other, StsIntervalSet) or self.horizon != other.horizon:
            return NotImplemented
        return all(self.intervals(k) == other.intervals(k) for k in range(self.horizon + 1))

    def __repr__(self):
        return f"StsIntervalSet(horizon={self.horizon})"


def _canonical(lo, hi):
    """Drop empty slots, sort by lower bound and merge touching intervals."""
    lo = lo.copy()
    hi = hi.copy()
    bad = ~(lo <= hi)
    lo[bad] = np.nan
    hi[bad] = np.nan
    order = np.argsort(np.where(np.isnan(lo), np.inf, lo), axis=1, kind="stable")
    lo = np.take_along_axis(lo, order, axis=1)
    hi = np.take_along_axis(hi, order, axis=1)
    if lo.shape[1] > 1:
        # merges are rare, resolve them row by row
        overlap = lo[:, 1:] <= np.fmax.accumulate(hi, axis=1)[:, :-1]
        for k in np.flatnonzero(overlap.any(axis=1)):
            rows = []
            for a, b in zip(lo[k], hi[k]):
                if np.isnan(a):
                    break
                if rows and a <= rows[-1][1]:
                    rows[-1][1] = max(rows[-1][1], b)
                else:
                    rows.append([a, b])
            lo[k] = np.nan
            hi[k] = np.nan
            for j, (a, b) in enumerate(rows):
                lo[k, j], hi[k, j] = a, b
    used = ~np.isnan(lo).all(axis=0)
    keep = max(1, int(used.sum()))
    return lo[:, :keep], hi[:, :keep]


def step_times(dz: DzConfig, horizon: int) -> np.ndarray:
    return np.arange(horizon + 1) * dz.dt


def planning_horizon(x0: float, dz: DzConfig) -> int:
    """Steps until the slowest admissible profile could still reach ``x_f``."""
    return max(1, math.ceil((dz.x_f - x0) / (dz.v_min_cav * dz.dt)))


def reachable_set(x0: float, v0: float, beta_max: float, dz: DzConfig, horizon: int) -> StsIntervalSet:
    """Positions reachable at each step for some beta in ``[0, beta_max]``.

    Position is monotone decreasing in beta, so the extreme profiles bound
    the reachable interval.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    ts = step_times(dz, horizon)
    ends = mlc_position_grid(x0, v0, dz.v_min_cav, [beta_max, 0.0], ts)
    lo = np.maximum(ends[0], dz.x_s)
    hi = np.minimum(ends[1], dz.x_f)
    return StsIntervalSet(lo[:, None], hi[:, None])


def min_spacing(index_gap: int, dz: DzConfig) -> float:
    if index_gap < 1:
        raise ValueError(f"index_gap must be >= 1, got {index_gap}")
    return index_gap * dz.h_min_cav * dz.v_max_cav


@dataclass(frozen=True)
class LeaderTrajectory:
    """A higher-priority lane changer's chosen plan and its slot in omega (1-based)."""

    omega_index: int
    plan: TrajectoryPlan

    def positions(self, dz: DzConfig, horizon: int) -> np.ndarray:
        ts = step_times(dz, horizon)
        p = self.plan
        return mlc_position_grid(p.x0, p.v0, p.v_min, [p.beta], ts)[0]

    def last_step(self, horizon: int) -> int:
        # holding (infeasible) leaders stay on the dedicated lane for the whole horizon
        return self.plan.step if self.plan.feasible else horizon


def attainable_upper(subject_index: int, leaders: Iterable[LeaderTrajectory],
                     dz: DzConfig, horizon: int) -> np.ndarray:
    """Per-step upper position bound imposed by the leaders (``inf`` if none)."""
    upper = np.full(horizon + 1, np.inf)
    for lead in leaders:
        gap = subject_index - lead.omega_index
        xs = lead.positions(dz, horizon) - min_spacing(gap, dz)
        last = lead.last_step(horizon)
        upper[: last + 1] = np.minimum(upper[: last + 1], xs[: last + 1])
    return upper


def attainable_set(subject_index: int, leaders: Iterable[LeaderTrajectory],
                   dz: DzConfig, horizon: int) -> StsIntervalSet:
    upper = attainable_upper(subject_index, leaders, dz, horizon)
    hi = np.minimum(upper, dz.x_f)
    lo = np.full_like(hi, dz.x_s)
    return StsIntervalSet(lo[:, None], hi[:, None])


@dataclass(frozen=True)
class PredictedLine:
    """Predicted HDV-lane trajectory x(t) = x_ref + v_ref (t - t_ref)."""

    vehicle_id: str
    x_ref: float
    v_ref: float
    t_ref: float = 0.0

    def __post_init__(self):
        if self.v_ref < 0:
            raise ValueError("v_ref must be >= 0")

    def at(self, t):
        return self.x_ref + self.v_ref * (np.asarray(t) - self.t_ref)


def predict_hdv_lane(pi: Iterable[VehicleState], leader_plans: Iterable[TrajectoryPlan],
                     dz: DzConfig, horizon: Optional[int] = None) -> list[PredictedLine]:
    """Uniform-speed lines for HDV-lane vehicles plus one virtual vehicle per
    planned merge of a higher-priority CAV, extended back before its merge."""
    lines = [PredictedLine(v.id, v.x, v.v, 0.0) for v in pi]
    for p in leader_plans:
        if p.feasible:
            lines.append(PredictedLine(p.vehicle_id, p.x_merge, p.v_merge, p.t_merge))
    return lines


def line_positions(lines: Sequence[PredictedLine], dz: DzConfig, horizon: int) -> np.ndarray:
    """Line positions, shape ``(horizon + 1, len(lines))``; points outside
    the relevance window become ``-inf`` (no constraint)."""
    ts = step_times(dz, horizon)
    if not lines:
        return np.empty((horizon + 1, 0))
    xr = np.array([l.x_ref for l in lines])
    vr = np.array([l.v_ref for l in lines])
    tr = np.array([l.t_ref for l in lines])
    pos = xr[None, :] + vr[None, :] * (ts[:, None] - tr[None, :])
    lo, hi = dz.hdv_window
    return np.where((pos >= lo) & (pos <= hi), pos, -np.inf)


def joinable_set(lines: Sequence[PredictedLine], dz: DzConfig, horizon: int) -> StsIntervalSet:
    """The zone minus an open band of half-width ``dz.hdv_gap`` around
    every predicted line. Band edges are joinable."""
    g = dz.hdv_gap
    pos = np.sort(line_positions(lines, dz, horizon), axis=1)
    n = pos.shape[0]
    # equal-width bands: gaps only ever sit between neighbouring lines
    lo = np.concatenate([np.full((n, 1), dz.x_s), pos + g], axis=1)
    hi = np.concatenate([pos - g, np.full((n, 1), dz.x_f)], axis=1)
    lo = np.maximum(lo, dz.x_s)
    hi = np.minimum(hi, dz.x_f)
    return StsIntervalSet(lo, hi)


def candidate_set(r: StsIntervalSet, a: StsIntervalSet, j: StsIntervalSet) -> StsIntervalSet:
    return r.intersect(a).intersect(j)
