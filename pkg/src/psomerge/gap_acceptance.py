"""Gap-acceptance baseline: a lane changer merges once the adjacent HDV-lane
gaps exceed a headway threshold that shrinks linearly toward the end of the
zone, and otherwise slows gently toward the HDV-lane speed."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import DzConfig, Lane, VehicleState


class TargetSpeedRule(str, enum.Enum):
    ADJACENT_GAP_SPEED = "adjacent_gap_speed"
    HDV_DESIRED_MEAN = "hdv_desired_mean"


class GaAction(str, enum.Enum):
    MERGE = "merge"
    DECELERATE = "decelerate"
    HOLD = "hold"


@dataclass(frozen=True)
class GaParams:
    comfort_decel: float = 2.0
    target_speed_rule: TargetSpeedRule = TargetSpeedRule.ADJACENT_GAP_SPEED
    check_lag_gap: bool = True
    min_gap: float = 3.7  # physical floor on either gap, normally the jam spacing

    def __post_init__(self):
        if self.comfort_decel <= 0:
            raise ValueError("ga: comfort_decel must be > 0")
        if self.min_gap < 0:
            raise ValueError("ga: min_gap must be >= 0")


@dataclass(frozen=True)
class GaDecision:
    action: GaAction
    target_speed: float
    v_next: float
    lead_gap: float = math.inf
    lag_gap: float = math.inf


def ga_min_headway(x: float, dz: DzConfig) -> float:
    if not dz.in_dz(x):
        raise ValueError(f"x={x} outside the diverging zone [{dz.x_s}, {dz.x_f}]")
    return (dz.x_f - x) / (dz.x_f - dz.x_s) * dz.h_min_hdv


def adjacent_vehicles(x: float, hdv_lane: Iterable[VehicleState]) -> tuple[Optional[VehicleState], Optional[VehicleState]]:
    """Nearest HDV-lane vehicle at or ahead of ``x`` and nearest behind it."""
    lead = lag = None
    for v in hdv_lane:
        if v.x >= x:
            if lead is None or v.x < lead.x:
                lead = v
        elif lag is None or v.x > lag.x:
            lag = v
    return lead, lag


def gaps_acceptable(subject: VehicleState, lead: Optional[VehicleState], lag: Optional[VehicleState],
                    dz: DzConfig, gp: GaParams) -> bool:
    h = ga_min_headway(subject.x, dz)
    if lead is not None and lead.x - subject.x < max(h * subject.v, gp.min_gap):
        return False
    if gp.check_lag_gap and lag is not None and subject.x - lag.x < max(h * lag.v, gp.min_gap):
        return False
    return True


def ga_step(subject: VehicleState, hdv_lane: Iterable[VehicleState], dz: DzConfig,
            gp: GaParams, dt: float) -> GaDecision:
    hdv_lane = [v for v in hdv_lane if v.lane is Lane.HDV]
    lead, lag = adjacent_vehicles(subject.x, hdv_lane)
    lead_gap = lead.x - subject.x if lead is not None else math.inf
    lag_gap = subject.x - lag.x if lag is not None else math.inf
    if gaps_acceptable(subject, lead, lag, dz, gp):
        return GaDecision(GaAction.MERGE, subject.v, subject.v, lead_gap, lag_gap)

    target = _target_speed(lead, hdv_lane, gp)
    if math.isnan(target):
        target = subject.v
    target = max(target, dz.v_min_cav)
    if subject.v > target:
        v_next = max(target, subject.v - gp.comfort_decel * dt)
        return GaDecision(GaAction.DECELERATE, target, v_next, lead_gap, lag_gap)
    return GaDecision(GaAction.HOLD, target, subject.v, lead_gap, lag_gap)


def _target_speed(lead: Optional[VehicleState], hdv_lane: list[VehicleState], gp: GaParams) -> float:
    if gp.target_speed_rule is TargetSpeedRule.ADJACENT_GAP_SPEED and lead is not None:
        return lead.v
    desired = [v.v_desired for v in hdv_lane if not math.isnan(v.v_desired)]
    return sum(desired) / len(desired) if desired else math.nan
