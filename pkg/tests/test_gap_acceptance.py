import pytest
from hypothesis import given, strategies as st

from psomerge.core import DzConfig, Lane, Role, VehicleState
from psomerge.gap_acceptance import (
    GaAction, GaParams, TargetSpeedRule, adjacent_vehicles, ga_min_headway, ga_step,
)

DZ = DzConfig()
GP = GaParams()
V0 = 100 / 3.6


def mlc(x, v=V0):
    return VehicleState("c", Lane.DEDICATED, Role.MLC_CAV, x, v)


def hdv(vid, x, v=22.0, vd=25.0):
    return VehicleState(vid, Lane.HDV, Role.HDV, x, v, vd)


def test_headway_three_points():
    assert ga_min_headway(DZ.x_s, DZ) == 1.5
    assert ga_min_headway(DZ.x_f, DZ) == 0.0
    assert ga_min_headway((DZ.x_s + DZ.x_f) / 2, DZ) == 0.75


def test_headway_outside_zone_rejected():
    with pytest.raises(ValueError):
        ga_min_headway(-1.0, DZ)


@given(st.floats(0, 1500), st.floats(0, 1500))
def test_headway_non_increasing(a, b):
    lo, hi = min(a, b), max(a, b)
    assert ga_min_headway(hi, DZ) <= ga_min_headway(lo, DZ)


def test_empty_lane_merges():
    assert ga_step(mlc(300.0), [], DZ, GP, 0.2).action is GaAction.MERGE


def test_zone_end_merges_with_any_gap():
    d = ga_step(mlc(DZ.x_f), [hdv("a", DZ.x_f + 5.0), hdv("b", DZ.x_f - 5.0)], DZ, GP, 0.2)
    assert d.action is GaAction.MERGE


def test_lead_gap_just_short_decelerates():
    x = 300.0
    need = ga_min_headway(x, DZ) * V0
    d = ga_step(mlc(x), [hdv("a", x + need - 1e-6)], DZ, GP, 0.2)
    assert d.action is GaAction.DECELERATE
    assert d.v_next == pytest.approx(V0 - GP.comfort_decel * 0.2)
    d = ga_step(mlc(x), [hdv("a", x + need + 1e-9)], DZ, GP, 0.2)
    assert d.action is GaAction.MERGE


def test_lag_gap_uses_lag_speed():
    x = 300.0
    need = ga_min_headway(x, DZ) * 25.0
    lag = hdv("b", x - need + 1e-6, v=25.0)
    assert ga_step(mlc(x), [lag], DZ, GP, 0.2).action is not GaAction.MERGE
    lead_only = GaParams(check_lag_gap=False)
    assert ga_step(mlc(x), [lag], DZ, lead_only, 0.2).action is GaAction.MERGE


def test_decelerates_toward_lead_speed_and_holds():
    x = 300.0
    lead = hdv("a", x + 5.0, v=V0 - 0.1)
    d = ga_step(mlc(x), [lead], DZ, GP, 0.2)
    assert d.action is GaAction.DECELERATE and d.v_next == pytest.approx(V0 - 0.1)
    d = ga_step(mlc(x, v=V0 - 0.1), [lead], DZ, GP, 0.2)
    assert d.action is GaAction.HOLD


def test_target_never_below_floor():
    d = ga_step(mlc(300.0, v=17.0), [hdv("a", 301.0, v=5.0)], DZ, GP, 0.2)
    assert d.v_next >= DZ.v_min_cav


def test_desired_mean_rule():
    gp = GaParams(target_speed_rule=TargetSpeedRule.HDV_DESIRED_MEAN)
    lane = [hdv("a", 305.0, v=10.0, vd=20.0), hdv("b", 295.0, v=10.0, vd=24.0)]
    d = ga_step(mlc(300.0), lane, DZ, gp, 0.2)
    assert d.target_speed == pytest.approx(22.0)


def test_no_leader_falls_back_to_desired_mean():
    lane = [hdv("b", 290.0, v=27.0, vd=23.0)]
    d = ga_step(mlc(300.0), lane, DZ, GP, 0.2)
    assert d.action is GaAction.DECELERATE and d.target_speed == pytest.approx(23.0)


def test_adjacent_vehicles():
    lane = [hdv("a", 310.0), hdv("b", 290.0), hdv("c", 400.0), hdv("d", 100.0)]
    lead, lag = adjacent_vehicles(300.0, lane)
    assert lead.id == "a" and lag.id == "b"


def test_params_validation():
    with pytest.raises(ValueError):
        GaParams(comfort_decel=0.0)


gap_st = st.floats(0, 200)


@given(st.floats(0, 1400), st.floats(0, 100), gap_st, gap_st, st.floats(17, 28), st.floats(0, 30))
def test_acceptance_monotone_in_position(x, dx, lead_gap, lag_gap, v, lag_v):
    def accepted(xx):
        lane = [hdv("a", xx + lead_gap), hdv("b", xx - lag_gap - 1e-3, v=lag_v)]
        return ga_step(mlc(xx, v), lane, DZ, GP, 0.2).action is GaAction.MERGE
    x2 = min(x + dx, DZ.x_f)
    if accepted(x):
        assert accepted(x2)


@given(st.floats(0, 1500), st.floats(16.7, 28), st.lists(st.tuples(st.floats(-100, 1600), st.floats(0, 30)), max_size=5))
def test_deceleration_within_comfort(x, v, lane):
    vs = [hdv(f"h{i}", hx, hv) for i, (hx, hv) in enumerate(dict(lane).items())]
    d = ga_step(mlc(x, v), vs, DZ, GP, 0.2)
    assert v - d.v_next <= GP.comfort_decel * 0.2 + 1e-12
    assert d.v_next <= v
