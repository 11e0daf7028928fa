"""Motion models: spring-mass-damper following, the exponential slow-down
profile of a lane-changing CAV, uniform-speed prediction and Newell's
simplified car-following rule for the HDV lane."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SpringDamperParams:
    alpha: float = 0.1
    beta: float = 0.5
    s_tilde: float = 0.0
    v_tilde: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("spring-damper sensitivities must be >= 0")


def spring_damper_accel(dx: float, v: float, p: SpringDamperParams) -> float:
    return p.alpha * (dx - p.s_tilde) - p.beta * (v - p.v_tilde)


# below this the deficit comes from its series; the closed form loses
# accuracy for tiny (subnormal) arguments
_SERIES_BELOW = 1e-5


def _deficit(bt):
    # 1 - (1 - exp(-bt)) / bt: the fraction of the speed surplus not yet shed
    if bt < _SERIES_BELOW:
        return bt / 2.0 - bt * bt / 6.0
    return 1.0 + math.expm1(-bt) / bt


@dataclass(frozen=True)
class MlcProfile:
    """Speed decays from ``v0`` toward ``v_min`` at rate ``beta``:
    dv/dt = -beta (v - v_min). ``beta = 0`` is the constant-speed profile."""

    x0: float
    v0: float
    v_min: float
    beta: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.v0 < self.v_min:
            raise ValueError(f"v0={self.v0} below v_min={self.v_min}")

    def speed(self, t: float) -> float:
        return mlc_speed(self, t)

    def position(self, t: float) -> float:
        return mlc_position(self, t)


def mlc_speed(p: MlcProfile, t: float) -> float:
    if p.beta == 0.0:
        return p.v0
    return p.v_min + (p.v0 - p.v_min) * math.exp(-p.beta * t)


def mlc_position(p: MlcProfile, t: float) -> float:
    # exact integral of the decaying speed, written as the constant-speed
    # distance minus a non-negative shortfall so that beta > 0 never rounds
    # past the beta = 0 position
    base = p.x0 + p.v0 * t
    if p.beta == 0.0:
        return base
    return base - (p.v0 - p.v_min) * t * _deficit(p.beta * t)


def mlc_position_grid(x0: float, v0: float, v_min: float, betas, times) -> np.ndarray:
    """Positions for every (beta, t) pair, shape ``(len(betas), len(times))``."""
    betas = np.asarray(betas, dtype=float)[:, None]
    times = np.asarray(times, dtype=float)[None, :]
    bt = betas * times
    big = bt >= _SERIES_BELOW
    safe = np.where(big, bt, 1.0)
    deficit = np.where(big, 1.0 + np.expm1(-safe) / safe, bt / 2.0 - bt * bt / 6.0)
    return (x0 + v0 * times) - (v0 - v_min) * times * deficit


def beta_max(v0: float, v_min: float, a_decel_max: float) -> float:
    """Largest rate whose initial deceleration stays within ``a_decel_max``.

    Unbounded (``inf``) when the vehicle is already at the floor speed.
    """
    if v0 <= v_min:
        return math.inf
    return a_decel_max / (v0 - v_min)


def capped_beta_max(v0: float, v_min: float, a_decel_max: float, ceiling: float) -> float:
    return min(beta_max(v0, v_min, a_decel_max), ceiling)


def predict_uniform(x0: float, v0: float, t: float) -> float:
    return x0 + v0 * t


@dataclass(frozen=True)
class NewellParams:
    wave_speed: float = 3.7
    jam_spacing: float = 3.7

    def __post_init__(self):
        if self.wave_speed <= 0 or self.jam_spacing <= 0:
            raise ValueError("newell: wave_speed and jam_spacing must be > 0")

    @property
    def tau(self) -> float:
        return self.jam_spacing / self.wave_speed


class PositionHistory:
    """Recent (time, position, speed) samples of one vehicle.

    Queries before the earliest sample extrapolate backward at the earliest
    recorded speed; queries after the latest extrapolate forward.
    """

    def __init__(self, t: float, x: float, v: float, maxlen: Optional[int] = None):
        self._t = deque([t], maxlen=maxlen)
        self._x = deque([x], maxlen=maxlen)
        self._v = deque([v], maxlen=maxlen)

    def append(self, t: float, x: float, v: float) -> None:
        if t <= self._t[-1]:
            raise ValueError("history times must increase")
        self._t.append(t)
        self._x.append(x)
        self._v.append(v)

    @property
    def earliest(self) -> float:
        return self._t[0]

    @property
    def latest(self) -> float:
        return self._t[-1]

    def position_at(self, t: float) -> float:
        t0 = self._t[0]
        if t <= t0:
            return self._x[0] - self._v[0] * (t0 - t)
        if t >= self._t[-1]:
            return self._x[-1] + self._v[-1] * (t - self._t[-1])
        return float(np.interp(t, self._t, self._x))


def newell_step(x: float, v: float, v_desired: float, leader: Optional[PositionHistory],
                p: NewellParams, dt: float, t: float,
                max_speed_gain: float = math.inf) -> tuple[float, float]:
    """Advance one HDV-lane vehicle from time ``t`` to ``t + dt``.

    The free-flow move is ``v_desired * dt`` (optionally limited to a speed
    gain of ``max_speed_gain`` over the current speed); the congested bound is
    the leader's position one reaction lag earlier, less the jam spacing.
    Position never decreases.
    """
    v_free = min(v_desired, v + max_speed_gain)
    x_new = x + v_free * dt
    if leader is not None:
        x_new = min(x_new, leader.position_at(t + dt - p.tau) - p.jam_spacing)
    x_new = max(x_new, x)
    return x_new, (x_new - x) / dt
