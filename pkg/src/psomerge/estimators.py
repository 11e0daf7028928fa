"""scikit-learn style wrappers around the two lane-change deciders.

Nothing is learned: ``fit`` validates the hyper-parameters and freezes the
zone and cost configuration, ``predict`` takes a snapshot of vehicles as a
numeric array and returns one decision code per row.

Snapshot columns: ``lane`` (0 dedicated, 1 HDV), ``role`` (see ROLE_CODES),
``x`` (m), ``v`` (m/s), ``v_desired`` (m/s, NaN allowed off the HDV lane).
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .core import DzConfig, InvalidInputError, Lane, Role, VehicleState, kmh_to_mps
from .gap_acceptance import GaAction, GaParams, TargetSpeedRule, ga_step
from .planner import CostParams, plan_all

LANE_CODES = (Lane.DEDICATED, Lane.HDV)
ROLE_CODES = (Role.MLC_CAV, Role.THROUGH_CAV, Role.HDV, Role.MERGED_CAV)
N_COLUMNS = 5

# decision codes returned by predict
NO_DECISION = 0   # not a lane changer in the zone
MERGE_NOW = 1
KEEP_PLAN = 2     # PSO: future merge planned; GA: slowing for a gap
NO_MERGE = 3      # PSO: no feasible plan; GA: holding speed


def check_vehicle_array(X) -> np.ndarray:
    """Validated float copy of a vehicle snapshot, shape ``(n, 5)``."""
    X = check_array(X, dtype=float, ensure_all_finite="allow-nan", ensure_min_samples=0)
    if X.shape[1] != N_COLUMNS:
        raise ValueError(f"expected {N_COLUMNS} columns (lane, role, x, v, v_desired), got {X.shape[1]}")
    if np.isnan(X[:, :4]).any():
        raise ValueError("lane, role, x and v must not be NaN")
    for col, name, n in ((0, "lane", len(LANE_CODES)), (1, "role", len(ROLE_CODES))):
        bad = (X[:, col] != np.round(X[:, col])) | (X[:, col] < 0) | (X[:, col] >= n)
        if bad.any():
            raise ValueError(f"{name} codes must be integers in [0, {n - 1}]")
    if (X[:, 3] < 0).any():
        raise ValueError("speeds must be >= 0")
    return X


def vehicles_from_array(X, ids=None) -> list[VehicleState]:
    X = check_vehicle_array(X)
    ids = [f"v{i}" for i in range(len(X))] if ids is None else [str(i) for i in ids]
    if len(ids) != len(X):
        raise ValueError("ids and rows differ in length")
    return [
        VehicleState(vid, LANE_CODES[int(r[0])], ROLE_CODES[int(r[1])], float(r[2]), float(r[3]), float(r[4]))
        for vid, r in zip(ids, X)
    ]


def vehicles_to_array(vehicles) -> np.ndarray:
    rows = [
        (LANE_CODES.index(v.lane), ROLE_CODES.index(v.role), v.x, v.v, v.v_desired)
        for v in vehicles
    ]
    return np.array(rows, dtype=float).reshape(-1, N_COLUMNS)


class _ZoneEstimator(BaseEstimator):
    """Shared zone parameters (SI units)."""

    def _dz_from_params(self) -> DzConfig:
        return DzConfig(
            x_s=self.x_s, x_f=self.x_f, v_min_cav=self.v_min_cav, v_max_cav=self.v_max_cav,
            h_min_cav=self.h_min_cav, h_min_hdv=self.h_min_hdv, v_max_hdv=self.v_max_hdv,
            dt=self.dt, d_beta=self.d_beta, n_beta_steps=self.n_beta_steps,
        )


class PSOMergePlanner(_ZoneEstimator):
    """Prioritized system-optimal planner over a single snapshot.

    After ``predict``, ``plans_`` maps row index to the chosen plan and
    ``decision_seconds_`` holds per-vehicle optimization times.
    """

    def __init__(self, x_s=0.0, x_f=1500.0, v_min_cav=kmh_to_mps(60), v_max_cav=kmh_to_mps(100),
                 h_min_cav=0.5, h_min_hdv=1.5, v_max_hdv=kmh_to_mps(100), dt=0.2,
                 d_beta=None, n_beta_steps=50, detour_distance=3000.0,
                 detour_speed=kmh_to_mps(60), failure_rate_coeff=0.046):
        self.x_s = x_s
        self.x_f = x_f
        self.v_min_cav = v_min_cav
        self.v_max_cav = v_max_cav
        self.h_min_cav = h_min_cav
        self.h_min_hdv = h_min_hdv
        self.v_max_hdv = v_max_hdv
        self.dt = dt
        self.d_beta = d_beta
        self.n_beta_steps = n_beta_steps
        self.detour_distance = detour_distance
        self.detour_speed = detour_speed
        self.failure_rate_coeff = failure_rate_coeff

    def fit(self, X=None, y=None):
        if X is not None:
            check_vehicle_array(X)
        try:
            self.dz_ = self._dz_from_params()
            self.cost_ = CostParams(self.detour_distance, self.detour_speed, self.failure_rate_coeff)
        except ValueError as e:
            raise InvalidInputError(f"invalid parameters: {e}") from e
        self.n_features_in_ = N_COLUMNS
        return self

    def _plan(self, X):
        check_is_fitted(self, "dz_")
        vehicles = vehicles_from_array(X)
        return vehicles, plan_all(vehicles, self.dz_, self.cost_)

    def predict(self, X) -> np.ndarray:
        vehicles, res = self._plan(X)
        out = np.full(len(vehicles), NO_DECISION, dtype=int)
        index = {v.id: i for i, v in enumerate(vehicles)}
        for vid, plan in res.plans.items():
            i = index[vid]
            if not plan.feasible:
                out[i] = NO_MERGE
            elif plan.immediate:
                out[i] = MERGE_NOW
            else:
                out[i] = KEEP_PLAN
        self.plans_ = {index[vid]: p for vid, p in res.plans.items()}
        self.decision_seconds_ = np.asarray(res.decision_seconds)
        return out

    def predict_plans(self, X) -> np.ndarray:
        """``(n, 4)`` array of beta, merge time, merge position and merge
        speed; NaN rows for vehicles without a feasible plan."""
        self.predict(X)
        out = np.full((check_vehicle_array(X).shape[0], 4), np.nan)
        for i, p in self.plans_.items():
            if p.feasible:
                out[i] = (p.beta, p.t_merge, p.x_merge, p.v_merge)
        return out


class GapAcceptanceMerger(_ZoneEstimator):
    """Gap-acceptance baseline applied to each lane changer, headmost first."""

    def __init__(self, x_s=0.0, x_f=1500.0, v_min_cav=kmh_to_mps(60), v_max_cav=kmh_to_mps(100),
                 h_min_cav=0.5, h_min_hdv=1.5, v_max_hdv=kmh_to_mps(100), dt=0.2,
                 d_beta=None, n_beta_steps=50, comfort_decel=2.0,
                 target_speed_rule="adjacent_gap_speed", check_lag_gap=True, min_gap=3.7):
        self.x_s = x_s
        self.x_f = x_f
        self.v_min_cav = v_min_cav
        self.v_max_cav = v_max_cav
        self.h_min_cav = h_min_cav
        self.h_min_hdv = h_min_hdv
        self.v_max_hdv = v_max_hdv
        self.dt = dt
        self.d_beta = d_beta
        self.n_beta_steps = n_beta_steps
        self.comfort_decel = comfort_decel
        self.target_speed_rule = target_speed_rule
        self.check_lag_gap = check_lag_gap
        self.min_gap = min_gap

    def fit(self, X=None, y=None):
        if X is not None:
            check_vehicle_array(X)
        try:
            self.dz_ = self._dz_from_params()
            self.ga_ = GaParams(self.comfort_decel, TargetSpeedRule(self.target_speed_rule),
                                bool(self.check_lag_gap), self.min_gap)
        except ValueError as e:
            raise InvalidInputError(f"invalid parameters: {e}") from e
        self.n_features_in_ = N_COLUMNS
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "dz_")
        vehicles = vehicles_from_array(X)
        hdv_lane = [v for v in vehicles if v.lane is Lane.HDV]
        out = np.full(len(vehicles), NO_DECISION, dtype=int)
        speeds = np.full(len(vehicles), math.nan)
        codes = {GaAction.MERGE: MERGE_NOW, GaAction.DECELERATE: KEEP_PLAN, GaAction.HOLD: NO_MERGE}
        # headmost first; an accepted merge occupies the HDV lane for those behind
        for i in sorted(range(len(vehicles)), key=lambda i: -vehicles[i].x):
            v = vehicles[i]
            if v.role is not Role.MLC_CAV or v.lane is not Lane.DEDICATED or not self.dz_.in_dz(v.x):
                continue
            d = ga_step(v, hdv_lane, self.dz_, self.ga_, self.dz_.dt)
            out[i] = codes[d.action]
            speeds[i] = d.v_next
            if d.action is GaAction.MERGE:
                hdv_lane.append(replace(v, lane=Lane.HDV, role=Role.MERGED_CAV))
        self.next_speed_ = speeds
        return out
