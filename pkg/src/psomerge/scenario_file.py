"""TOML scenario files.

Speeds are written in km/h (keys ending in ``_kmh``) and converted to m/s
here; everything else is SI. A file either lists its vehicles explicitly
(``[[vehicles]]``) or describes a random population (``[generation]``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .core import DzConfig, InvalidInputError, Lane, Role, VehicleState, kmh_to_mps
from .gap_acceptance import GaParams, TargetSpeedRule
from .kinematics import NewellParams, SpringDamperParams
from .planner import CostParams
from .simulation import GenerationTemplate, PlannerKind, Scenario, generate_scenario

_DZ_KEYS = {
    "x_s": None, "x_f": None, "v_min_cav_kmh": "v_min_cav", "v_max_cav_kmh": "v_max_cav",
    "h_min_cav": None, "h_min_hdv": None, "v_max_hdv_kmh": "v_max_hdv", "dt": None,
    "d_beta": None, "n_beta_steps": None, "a_decel_max": None, "a_accel_max": None,
    "beta_ceiling": None,
}
_COST_REQUIRED = ("detour_distance", "detour_speed_kmh")
_COST_KEYS = set(_COST_REQUIRED) | {"failure_rate_coeff"}
_GA_KEYS = {"comfort_decel", "target_speed_rule", "check_lag_gap", "min_gap"}
_NEWELL_KEYS = {"wave_speed", "jam_spacing"}
_CF_KEYS = {"alpha", "beta"}
_GEN_KEYS = {
    "n_cav", "n_hdv", "cav_speed_kmh", "hdv_speed_kmh", "hdv_desired_kmh", "cav_head_x",
    "cav_spacing_max", "hdv_head_x", "hdv_spacing_max", "cav_in_zone", "seed",
}
_VEHICLE_KEYS = {"id", "lane", "role", "x", "v_kmh", "v_desired_kmh"}
_TOP_KEYS = {"planner", "duration", "dz", "cost", "ga", "newell", "car_following",
             "generation", "vehicles"}


class ScenarioFileError(InvalidInputError):
    pass


@dataclass(frozen=True)
class ScenarioFile:
    """A parsed file: the shared configuration plus either a template or a
    fixed vehicle list."""

    base: Scenario
    template: Optional[GenerationTemplate] = None
    seed: int = 0
    source: Optional[str] = field(default=None, compare=False)

    @property
    def generated(self) -> bool:
        return self.template is not None

    def build(self, seed: Optional[int] = None, planner=None) -> Scenario:
        """Concrete scenario, regenerating the population when ``seed`` is given."""
        seed = self.seed if seed is None else seed
        sc = self.base
        if self.template is not None:
            sc = generate_scenario(
                seed, self.template, dz=sc.dz, cost=sc.cost, ga=sc.ga, newell=sc.newell,
                planner=sc.planner, duration=sc.duration, car_following=sc.car_following,
            )
        elif seed != sc.seed:
            sc = replace(sc, seed=seed)
        if planner is not None:
            sc = sc.with_planner(planner)
        return sc


def _check_keys(table: dict, allowed, where: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ScenarioFileError(f"{where}: unknown field(s) {', '.join(unknown)}")


def _number(table: dict, key: str, where: str) -> float:
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioFileError(f"{where}.{key}: expected a number, got {val!r}")
    if not math.isfinite(val):
        raise ScenarioFileError(f"{where}.{key}: must be finite")
    return float(val)


def _pair(table: dict, key: str, where: str) -> tuple[float, float]:
    val = table[key]
    if not isinstance(val, list) or len(val) != 2:
        raise ScenarioFileError(f"{where}.{key}: expected a [low, high] pair")
    return (_number({key: val[0]}, key, where), _number({key: val[1]}, key, where))


def _table(data: dict, name: str) -> dict:
    t = data.get(name, {})
    if not isinstance(t, dict):
        raise ScenarioFileError(f"[{name}] must be a table")
    return t


def _wrap(where: str, fn, **kw):
    # re-raise constructor invariant failures with the section name attached
    try:
        return fn(**kw)
    except InvalidInputError as e:
        raise ScenarioFileError(str(e) if str(e).startswith(where) else f"{where}: {e}") from e
    except (ValueError, TypeError) as e:
        raise ScenarioFileError(f"{where}: {e}") from e


def _parse_dz(t: dict) -> DzConfig:
    _check_keys(t, _DZ_KEYS, "dz")
    kw: dict[str, Any] = {}
    for key, target in _DZ_KEYS.items():
        if key not in t:
            continue
        if key == "n_beta_steps":
            if not isinstance(t[key], int) or isinstance(t[key], bool):
                raise ScenarioFileError("dz.n_beta_steps: expected an integer")
            kw[key] = t[key]
            continue
        val = _number(t, key, "dz")
        if key.endswith("_kmh"):
            if val <= 0:
                raise ScenarioFileError(f"dz.{key}: speed must be > 0 km/h")
            val = kmh_to_mps(val)
        kw[target or key] = val
    return _wrap("dz", DzConfig, **kw)


def _parse_cost(t: dict) -> CostParams:
    _check_keys(t, _COST_KEYS, "cost")
    for key in _COST_REQUIRED:
        if key not in t:
            raise ScenarioFileError(f"cost.{key}: missing mandatory field")
    kw = {
        "detour_distance": _number(t, "detour_distance", "cost"),
        "detour_speed": kmh_to_mps(_number(t, "detour_speed_kmh", "cost")),
    }
    if "failure_rate_coeff" in t:
        kw["failure_rate_coeff"] = _number(t, "failure_rate_coeff", "cost")
    return _wrap("cost", CostParams, **kw)


def _parse_ga(t: dict, newell: NewellParams) -> GaParams:
    _check_keys(t, _GA_KEYS, "ga")
    kw: dict[str, Any] = {"min_gap": newell.jam_spacing}
    for key in ("comfort_decel", "min_gap"):
        if key in t:
            kw[key] = _number(t, key, "ga")
    if "check_lag_gap" in t:
        if not isinstance(t["check_lag_gap"], bool):
            raise ScenarioFileError("ga.check_lag_gap: expected true or false")
        kw["check_lag_gap"] = t["check_lag_gap"]
    if "target_speed_rule" in t:
        try:
            kw["target_speed_rule"] = TargetSpeedRule(t["target_speed_rule"])
        except ValueError:
            choices = ", ".join(r.value for r in TargetSpeedRule)
            raise ScenarioFileError(f"ga.target_speed_rule: expected one of {choices}") from None
    return _wrap("ga", GaParams, **kw)


def _parse_simple(t: dict, allowed, where: str, cls):
    _check_keys(t, allowed, where)
    return _wrap(where, cls, **{k: _number(t, k, where) for k in t})


def _parse_generation(t: dict) -> tuple[GenerationTemplate, int]:
    _check_keys(t, _GEN_KEYS, "generation")
    kw: dict[str, Any] = {}
    for key in ("n_cav", "n_hdv"):
        if key in t:
            if not isinstance(t[key], int) or isinstance(t[key], bool):
                raise ScenarioFileError(f"generation.{key}: expected an integer")
            kw[key] = t[key]
    for key in ("cav_speed_kmh", "cav_spacing_max", "hdv_spacing_max"):
        if key in t:
            kw[key] = _number(t, key, "generation")
    for key in ("hdv_speed_kmh", "hdv_desired_kmh", "cav_head_x", "hdv_head_x"):
        if key in t:
            kw[key] = _pair(t, key, "generation")
    if "cav_in_zone" in t:
        kw["cav_in_zone"] = bool(t["cav_in_zone"])
    seed = t.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioFileError("generation.seed: expected a non-negative integer")
    return _wrap("generation", GenerationTemplate, **kw), seed


def _parse_vehicles(rows) -> list[VehicleState]:
    if not isinstance(rows, list):
        raise ScenarioFileError("vehicles: expected an array of tables ([[vehicles]])")
    out = []
    for n, row in enumerate(rows):
        where = f"vehicles[{n}]"
        if not isinstance(row, dict):
            raise ScenarioFileError(f"{where}: expected a table")
        _check_keys(row, _VEHICLE_KEYS, where)
        for key in ("id", "lane", "x", "v_kmh"):
            if key not in row:
                raise ScenarioFileError(f"{where}.{key}: missing mandatory field")
        try:
            lane = Lane(row["lane"])
        except ValueError:
            raise ScenarioFileError(f"{where}.lane: expected 'dedicated' or 'hdv'") from None
        default_role = Role.MLC_CAV if lane is Lane.DEDICATED else Role.HDV
        try:
            role = Role(row.get("role", default_role.value))
        except ValueError:
            choices = ", ".join(r.value for r in Role)
            raise ScenarioFileError(f"{where}.role: expected one of {choices}") from None
        v = _number(row, "v_kmh", where)
        if v < 0:
            raise ScenarioFileError(f"{where}.v_kmh: speed must be >= 0")
        vd = kmh_to_mps(_number(row, "v_desired_kmh", where)) if "v_desired_kmh" in row else math.nan
        if lane is Lane.HDV and math.isnan(vd):
            raise ScenarioFileError(f"{where}.v_desired_kmh: required for HDV-lane vehicles")
        out.append(_wrap(where, VehicleState, id=str(row["id"]), lane=lane, role=role,
                         x=_number(row, "x", where), v=kmh_to_mps(v), v_desired=vd))
    return out


def load_scenario_file(path) -> ScenarioFile:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as e:
        raise ScenarioFileError(f"cannot read scenario file {path}: {e.strerror}") from e
    except tomllib.TOMLDecodeError as e:
        raise ScenarioFileError(f"{path}: malformed TOML: {e}") from e
    return scenario_from_dict(data, source=str(path))


def scenario_from_dict(data: dict, source: Optional[str] = None) -> ScenarioFile:
    _check_keys(data, _TOP_KEYS, "scenario")
    if "cost" not in data:
        raise ScenarioFileError("cost: missing mandatory section (detour_distance, detour_speed_kmh)")
    has_gen = "generation" in data
    has_veh = "vehicles" in data
    if has_gen and has_veh:
        raise ScenarioFileError("scenario: [generation] and [[vehicles]] are mutually exclusive")

    dz = _parse_dz(_table(data, "dz"))
    cost = _parse_cost(_table(data, "cost"))
    newell = _parse_simple(_table(data, "newell"), _NEWELL_KEYS, "newell", NewellParams)
    ga = _parse_ga(_table(data, "ga"), newell)
    cf = _parse_simple(_table(data, "car_following"), _CF_KEYS, "car_following", SpringDamperParams)

    planner = data.get("planner", "pso")
    try:
        planner = PlannerKind(planner)
    except ValueError:
        raise ScenarioFileError("scenario.planner: expected 'pso' or 'ga'") from None
    duration = _number(data, "duration", "scenario") if "duration" in data else 120.0

    common = dict(dz=dz, cost=cost, ga=ga, newell=newell, car_following=cf,
                  planner=planner, duration=duration)
    if has_veh:
        vehicles = _parse_vehicles(data["vehicles"])
        base = _wrap("scenario", Scenario, vehicles=tuple(vehicles), **common)
        return ScenarioFile(base, None, 0, source)
    template, seed = _parse_generation(_table(data, "generation")) if has_gen else (GenerationTemplate(), 0)
    base = _wrap("scenario", Scenario, **common)
    sf = ScenarioFile(base, template, seed, source)
    # surface placement problems (e.g. spacing limits) at load time
    _wrap("generation", sf.build)
    return sf


def parse_scenario(path) -> Scenario:
    """Validated scenario from a TOML file, population generated with the file's seed."""
    return load_scenario_file(path).build()
