"""Shared domain vocabulary: diverging-zone configuration, vehicle states and
the per-step sorting of vehicles into planning order."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

KMH = 1.0 / 3.6


def kmh_to_mps(v: float) -> float:
    return v / 3.6


def mps_to_kmh(v: float) -> float:
    return v * 3.6


class InvalidInputError(ValueError):
    """Raised when vehicle states or configuration violate a model invariant."""


class Lane(str, enum.Enum):
    DEDICATED = "dedicated"
    HDV = "hdv"


class Role(str, enum.Enum):
    MLC_CAV = "mlc_cav"
    THROUGH_CAV = "through_cav"
    HDV = "hdv"
    MERGED_CAV = "merged_cav"


@dataclass(frozen=True)
class DzConfig:
    """Diverging zone geometry, lane limits and planning resolution (SI units).

    ``d_beta`` of ``None`` means the kinematic-parameter grid is rebuilt per
    vehicle as ``n_beta_steps`` equal increments of its current ``beta_max``.
    """

    x_s: float = 0.0
    x_f: float = 1500.0
    v_min_cav: float = 60 * KMH
    v_max_cav: float = 100 * KMH
    h_min_cav: float = 0.5
    h_min_hdv: float = 1.5
    v_max_hdv: float = 100 * KMH
    dt: float = 0.2
    d_beta: Optional[float] = None
    n_beta_steps: int = 50
    a_decel_max: float = 4.0
    a_accel_max: float = 2.0
    beta_ceiling: float = 2.0

    def __post_init__(self):
        checks = [
            (self.x_s < self.x_f, "dz: x_s must be < x_f"),
            (0 < self.v_min_cav < self.v_max_cav, "dz: need 0 < v_min_cav < v_max_cav"),
            (self.h_min_cav > 0 and self.h_min_hdv > 0, "dz: headways must be > 0"),
            (self.v_max_hdv > 0, "dz: v_max_hdv must be > 0"),
            (self.dt > 0, "dz: dt must be > 0"),
            (self.d_beta is None or self.d_beta > 0, "dz: d_beta must be > 0"),
            (self.n_beta_steps >= 1, "dz: n_beta_steps must be >= 1"),
            (self.a_decel_max > 0 and self.a_accel_max > 0, "dz: acceleration bounds must be > 0"),
            (self.beta_ceiling > 0, "dz: beta_ceiling must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidInputError(msg)

    @property
    def hdv_gap(self) -> float:
        """Lateral safety spacing on the HDV lane, h_min_hdv * v_max_hdv."""
        return self.h_min_hdv * self.v_max_hdv

    @property
    def hdv_window(self) -> tuple[float, float]:
        g = self.hdv_gap
        return self.x_s - g, self.x_f + g

    def in_dz(self, x: float) -> bool:
        return self.x_s <= x <= self.x_f


@dataclass(frozen=True)
class VehicleState:
    id: str
    lane: Lane
    role: Role
    x: float
    v: float
    v_desired: float = math.nan

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.v)):
            raise InvalidInputError(f"vehicle {self.id}: position and speed must be finite")
        if self.v < 0:
            raise InvalidInputError(f"vehicle {self.id}: speed must be >= 0, got {self.v}")
        if self.role is Role.HDV and self.lane is not Lane.HDV:
            raise InvalidInputError(f"vehicle {self.id}: an HDV must be on the HDV lane")
        if self.role is Role.MERGED_CAV and self.lane is not Lane.HDV:
            raise InvalidInputError(f"vehicle {self.id}: a merged CAV must be on the HDV lane")
        if self.role in (Role.MLC_CAV, Role.THROUGH_CAV) and self.lane is not Lane.DEDICATED:
            raise InvalidInputError(f"vehicle {self.id}: role {self.role.value} requires the dedicated lane")


@dataclass(frozen=True)
class TrajectoryPlan:
    """A kinematic parameter choice and the merge it leads to.

    The underlying profile starts at ``(x0, v0)`` and decays toward ``v_min``
    at rate ``beta``. ``feasible=False`` marks a holding profile for a vehicle
    that found no feasible trajectory; its merge fields are NaN and
    ``step`` is ``None``.
    """

    vehicle_id: str
    beta: float
    x0: float
    v0: float
    v_min: float
    dt: float
    step: Optional[int]
    t_merge: float = math.nan
    x_merge: float = math.nan
    v_merge: float = math.nan
    cost: float = math.nan
    feasible: bool = True

    @property
    def immediate(self) -> bool:
        return self.feasible and self.step == 0


@dataclass(frozen=True)
class SortedOrdering:
    omega: tuple[str, ...] = ()
    omega_l: tuple[str, ...] = ()
    l_indices: tuple[int, ...] = ()
    pi: tuple[str, ...] = ()
    positions: dict = field(default_factory=dict, compare=False, repr=False)


def check_unique(vehicles: Iterable[VehicleState]) -> list[VehicleState]:
    vehicles = list(vehicles)
    dup = [k for k, n in Counter(v.id for v in vehicles).items() if n > 1]
    if dup:
        raise InvalidInputError(f"duplicate vehicle id(s): {sorted(dup)}")
    for lane in Lane:
        xs = Counter(v.x for v in vehicles if v.lane is lane)
        clash = [x for x, n in xs.items() if n > 1]
        if clash:
            raise InvalidInputError(
                f"vehicles overlap on the {lane.value} lane at x={clash[0]}"
            )
    return vehicles


def sort_and_classify(vehicles: Iterable[VehicleState], dz: DzConfig) -> SortedOrdering:
    """Order the dedicated-lane CAVs in the zone headmost first and pick out
    the lane-changing ones and the HDV-lane vehicles that can affect them.

    ``l_indices`` are 1-based positions in ``omega``.
    """
    vehicles = check_unique(vehicles)
    in_zone = [
        v for v in vehicles
        if v.lane is Lane.DEDICATED and dz.x_s <= v.x <= dz.x_f
    ]
    in_zone.sort(key=lambda v: -v.x)
    omega = tuple(v.id for v in in_zone)
    mlc = [(i + 1, v.id) for i, v in enumerate(in_zone) if v.role is Role.MLC_CAV]
    lo, hi = dz.hdv_window
    hdv = [v for v in vehicles if v.lane is Lane.HDV and lo <= v.x <= hi]
    hdv.sort(key=lambda v: -v.x)
    return SortedOrdering(
        omega=omega,
        omega_l=tuple(vid for _, vid in mlc),
        l_indices=tuple(i for i, _ in mlc),
        pi=tuple(v.id for v in hdv),
        positions={v.id: v.x for v in vehicles},
    )
