import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import joinable_point, rk4_profile
from psomerge.core import DzConfig, InvalidInputError, Lane, Role, TrajectoryPlan, VehicleState
from psomerge.kinematics import MlcProfile, mlc_position
from psomerge.sts import (
    LeaderTrajectory, PredictedLine, StsIntervalSet, attainable_set, attainable_upper,
    candidate_set, joinable_set, line_positions, min_spacing, planning_horizon, predict_hdv_lane,
    reachable_set,
)

DZ = DzConfig()
V0 = 100 / 3.6
VMIN = 60 / 3.6


def test_interval_set_canonical_form():
    s = StsIntervalSet.from_lists([[(5, 8), (1, 3), (2, 4)], [(0, 1), (1, 2)], [(3, 2)]])
    assert s.intervals(0) == [(1, 4), (5, 8)]
    assert s.intervals(1) == [(0, 2)]
    assert s.intervals(2) == [] and s.is_empty(2)


def test_interval_membership_is_closed():
    s = StsIntervalSet.from_lists([[(1.0, 2.0)]])
    assert s.contains(0, 1.0) and s.contains(0, 2.0)
    assert not s.contains(0, 2.0000001)
    assert not s.contains(5, 1.5)


def test_intersect_horizon_mismatch():
    with pytest.raises(ValueError, match="horizon"):
        StsIntervalSet.full(DZ, 3).intersect(StsIntervalSet.full(DZ, 4))


def test_reachable_start_is_a_point():
    r = reachable_set(100.0, V0, 0.3, DZ, 10)
    assert r.intervals(0) == [(100.0, 100.0)]


def test_reachable_single_profile_degenerates():
    r = reachable_set(0.0, V0, 0.0, DZ, 10)
    for k in range(11):
        (lo, hi), = r.intervals(k)
        assert lo == hi == pytest.approx(V0 * k * 0.2)


def test_reachable_example_against_brute_force():
    r = reachable_set(0.0, V0, 0.36, DZ, 60)
    (lo, hi), = r.intervals(50)
    # brute-force union over a fine beta grid, integrated numerically
    xs = [rk4_profile(0.0, V0, VMIN, b, 10.0, n=400)[0] for b in np.linspace(0, 0.36, 73)]
    assert lo == pytest.approx(min(xs), abs=1e-6)
    assert hi == pytest.approx(max(xs), abs=1e-6)
    assert (lo, hi) == pytest.approx((196.688, 277.778), abs=1e-3)


def test_reachable_clipped_to_zone():
    r = reachable_set(1400.0, V0, 0.36, DZ, 40)
    for k in range(41):
        for lo, hi in r.intervals(k):
            assert DZ.x_s <= lo <= hi <= DZ.x_f


@given(st.floats(0, 1400), st.floats(VMIN + 0.5, 30), st.floats(0, 1), st.integers(0, 60), st.floats(0, 1))
def test_reachable_contains_every_profile(x0, v0, bmax, k, frac):
    r = reachable_set(x0, v0, bmax, DZ, 60)
    x = mlc_position(MlcProfile(x0, v0, VMIN, bmax * frac), k * DZ.dt)
    if DZ.x_s <= x <= DZ.x_f:
        assert r.contains(k, x)


def test_min_spacing():
    assert min_spacing(1, DZ) == pytest.approx(13.8889, abs=1e-4)
    assert min_spacing(2, DZ) == pytest.approx(2 * min_spacing(1, DZ))
    with pytest.raises(ValueError):
        min_spacing(0, DZ)
    # a zero headway never reaches min_spacing: the zone config refuses it
    with pytest.raises(InvalidInputError, match="headways"):
        DzConfig(h_min_cav=0.0)


def test_attainable_without_leaders_is_zone():
    a = attainable_set(1, [], DZ, 5)
    assert all(a.intervals(k) == [(DZ.x_s, DZ.x_f)] for k in range(6))


def _parked_leader(x, step, dz):
    # v0 = 0 with beta = 0 stands still
    return LeaderTrajectory(1, TrajectoryPlan("L", 0.0, x, 0.0, 0.0, dz.dt, step, step * dz.dt, x, 0.0))


def test_attainable_example_upper_bound():
    a = attainable_set(2, [_parked_leader(500.0, 10, DZ)], DZ, 20)
    for k in range(11):
        assert a.intervals(k) == [(DZ.x_s, pytest.approx(486.11, abs=0.01))]
    # steps after the leader's merge carry no constraint from it
    for k in range(11, 21):
        assert a.intervals(k) == [(DZ.x_s, DZ.x_f)]


def test_holding_leader_constrains_whole_horizon():
    p = TrajectoryPlan("L", 0.0, 500.0, 0.0, 0.0, DZ.dt, None, feasible=False)
    up = attainable_upper(2, [LeaderTrajectory(1, p)], DZ, 20)
    assert np.all(up == pytest.approx(500.0 - min_spacing(1, DZ)))


def test_predict_lines():
    assert predict_hdv_lane([], [], DZ) == []
    h = VehicleState("h", Lane.HDV, Role.HDV, 300.0, 20.0, 25.0)
    line, = predict_hdv_lane([h], [], DZ)
    assert line.at(2.0) == pytest.approx(340.0)
    plan = TrajectoryPlan("c", 0.1, 0.0, 25.0, VMIN, 0.2, 20, 4.0, 200.0, 22.0)
    _, virt = predict_hdv_lane([h], [plan], DZ)
    assert virt.at(0.0) == pytest.approx(112.0)
    hold = TrajectoryPlan("d", 0.0, 0.0, 25.0, VMIN, 0.2, None, feasible=False)
    assert len(predict_hdv_lane([h], [hold], DZ)) == 1


def test_line_outside_window_is_ignored():
    pos = line_positions([PredictedLine("far", 2000.0, 0.0)], DZ, 2)
    assert np.all(np.isneginf(pos))
    j = joinable_set([PredictedLine("far", 2000.0, 0.0)], DZ, 2)
    assert j.intervals(0) == [(DZ.x_s, DZ.x_f)]


def test_joinable_examples():
    assert joinable_set([], DZ, 3).intervals(2) == [(DZ.x_s, DZ.x_f)]
    j = joinable_set([PredictedLine("h", 750.0, 0.0)], DZ, 3)
    (a, b), (c, d) = j.intervals(1)
    assert (a, b, c, d) == pytest.approx((0.0, 708.333, 791.667, 1500.0), abs=1e-3)
    g = DZ.hdv_gap
    assert j.contains(1, 750.0 + g) and j.contains(1, 750.0 - g)
    assert not j.contains(1, 750.0 + g - 1e-9)


def test_candidate_examples():
    r = StsIntervalSet.from_lists([[(100, 200)]])
    a = StsIntervalSet.from_lists([[(0, 150)]])
    j = StsIntervalSet.from_lists([[(120, 300)]])
    c = candidate_set(r, a, j)
    assert c.intervals(0) == [(120, 150)]
    # brute-force pointwise membership
    xs = np.linspace(0, 400, 4001)
    brute = [x for x in xs if 100 <= x <= 200 and 0 <= x <= 150 and 120 <= x <= 300]
    assert min(brute) == pytest.approx(120) and max(brute) == pytest.approx(150)
    empty = StsIntervalSet.from_lists([[]])
    assert candidate_set(r, a, empty).is_empty(0)
    full = StsIntervalSet.full(DZ, 0)
    assert candidate_set(r, full, full) == r


lines_st = st.lists(
    st.tuples(st.floats(-100, 1600), st.floats(0, 30), st.floats(0, 10)), max_size=6)


@given(lines_st, st.integers(0, 30), st.lists(st.floats(-50, 1550), min_size=20, max_size=20))
def test_joinable_matches_pointwise_rule(lines, k, probes):
    pl = [PredictedLine(f"l{i}", *l) for i, l in enumerate(lines)]
    j = joinable_set(pl, DZ, 30)
    for x in probes:
        assert j.contains(k, x) == joinable_point(x, k * DZ.dt, lines, DZ)


@given(lines_st, st.integers(0, 30))
def test_joinable_partition(lines, k):
    # joinable intervals plus forbidden bands rebuild the zone exactly
    pl = [PredictedLine(f"l{i}", *l) for i, l in enumerate(lines)]
    j = joinable_set(pl, DZ, 30)
    pos = line_positions(pl, DZ, 30)[k]
    bands = [(p - DZ.hdv_gap, p + DZ.hdv_gap) for p in pos if np.isfinite(p)]
    pieces = sorted(j.intervals(k) + [(max(a, DZ.x_s), min(b, DZ.x_f)) for a, b in bands if b > DZ.x_s and a < DZ.x_f])
    reach = DZ.x_s
    for a, b in pieces:
        assert a <= reach
        reach = max(reach, b)
    assert reach == DZ.x_f
    ivs = j.intervals(k)
    assert all(a <= b for a, b in ivs)
    assert all(b1 < a2 for (_, b1), (a2, _) in zip(ivs, ivs[1:]))


@given(st.floats(0, 1400), st.floats(VMIN + 0.5, 30), st.floats(0.01, 0.5), lines_st,
       st.floats(0, 1500), st.lists(st.tuples(st.integers(0, 40), st.floats(0, 1600)), min_size=10, max_size=10))
def test_candidate_inclusions(x0, v0, bmax, lines, lead_x, probes):
    h = planning_horizon(x0, DZ)
    r = reachable_set(x0, v0, bmax, DZ, h)
    a = attainable_set(2, [_parked_leader(lead_x, h // 2, DZ)], DZ, h)
    j = joinable_set([PredictedLine(f"l{i}", *l) for i, l in enumerate(lines)], DZ, h)
    c = candidate_set(r, a, j)
    for k, x in probes:
        k = min(k, h)
        if c.contains(k, x):
            assert r.contains(k, x) and a.contains(k, x) and j.contains(k, x)
        else:
            assert not (r.contains(k, x) and a.contains(k, x) and j.contains(k, x))
    for k in range(h + 1):
        ivs = c.intervals(k)
        assert all(a_ <= b_ for a_, b_ in ivs)
        assert all(b1 < a2 for (_, b1), (a2, _) in zip(ivs, ivs[1:]))


def test_planning_horizon():
    assert planning_horizon(0.0, DZ) == 450
    assert planning_horizon(1500.0, DZ) == 1
