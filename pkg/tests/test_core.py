import math

import pytest
from hypothesis import given, strategies as st

from psomerge.core import (
    DzConfig, InvalidInputError, Lane, Role, VehicleState, kmh_to_mps, mps_to_kmh,
    sort_and_classify,
)


def cav(vid, x, v=27.0, role=Role.MLC_CAV):
    return VehicleState(vid, Lane.DEDICATED, role, x, v)


def hdv(vid, x, v=25.0):
    return VehicleState(vid, Lane.HDV, Role.HDV, x, v, 25.0)


def test_unit_conversion_round_trip():
    assert kmh_to_mps(100.0) == pytest.approx(27.7777778)
    assert mps_to_kmh(kmh_to_mps(63.0)) == pytest.approx(63.0)


def test_default_zone():
    dz = DzConfig()
    assert (dz.x_s, dz.x_f, dz.dt) == (0.0, 1500.0, 0.2)
    assert dz.v_min_cav == pytest.approx(16.6666667)
    assert dz.hdv_gap == pytest.approx(41.6666667)


@pytest.mark.parametrize("kw, msg", [
    (dict(x_s=10.0, x_f=5.0), "x_s"),
    (dict(v_min_cav=30.0, v_max_cav=20.0), "v_min_cav"),
    (dict(h_min_cav=0.0), "headways"),
    (dict(dt=0.0), "dt"),
    (dict(d_beta=-0.1), "d_beta"),
])
def test_zone_invariants(kw, msg):
    with pytest.raises(InvalidInputError, match=msg):
        DzConfig(**kw)


def test_vehicle_invariants():
    with pytest.raises(InvalidInputError):
        VehicleState("a", Lane.DEDICATED, Role.HDV, 0.0, 1.0)
    with pytest.raises(InvalidInputError):
        VehicleState("a", Lane.HDV, Role.MLC_CAV, 0.0, 1.0)
    with pytest.raises(InvalidInputError):
        VehicleState("a", Lane.HDV, Role.HDV, 0.0, -1.0)
    with pytest.raises(InvalidInputError):
        VehicleState("a", Lane.HDV, Role.HDV, math.inf, 1.0)


def test_empty_ordering():
    o = sort_and_classify([], DzConfig())
    assert o.omega == o.omega_l == o.l_indices == o.pi == ()


def test_three_cavs_sorted_headmost_first():
    o = sort_and_classify([cav("a", 100), cav("b", 700), cav("c", 400)], DzConfig())
    assert o.omega == ("b", "c", "a")
    assert o.omega_l == ("b", "c", "a")
    assert o.l_indices == (1, 2, 3)


def test_lane_changers_indexed_within_omega():
    vs = [cav("a", 900), cav("t", 600, role=Role.THROUGH_CAV), cav("b", 300), cav("out", 1600)]
    o = sort_and_classify(vs, DzConfig())
    assert o.omega == ("a", "t", "b")
    assert o.omega_l == ("a", "b")
    assert o.l_indices == (1, 3)


def test_hdv_window_boundary_inclusive():
    dz = DzConfig()
    bound = dz.x_s - dz.h_min_hdv * dz.v_max_hdv
    o = sort_and_classify([hdv("in", bound), hdv("out", bound - 0.1)], dz)
    assert o.pi == ("in",)
    top = dz.x_f + dz.hdv_gap
    o = sort_and_classify([hdv("in", top), hdv("out", top + 0.1)], dz)
    assert o.pi == ("in",)


def test_duplicate_ids_rejected():
    with pytest.raises(InvalidInputError, match="duplicate"):
        sort_and_classify([cav("a", 1), cav("a", 50)], DzConfig())


def test_same_lane_overlap_rejected_other_lane_allowed():
    with pytest.raises(InvalidInputError, match="overlap"):
        sort_and_classify([cav("a", 100), cav("b", 100)], DzConfig())
    o = sort_and_classify([cav("a", 100), hdv("h", 100)], DzConfig())
    assert o.omega == ("a",) and o.pi == ("h",)


@given(st.lists(st.floats(-200, 1700, allow_nan=False), min_size=0, max_size=12, unique=True),
       st.lists(st.booleans(), min_size=12, max_size=12))
def test_ordering_properties(xs, mlc_flags):
    dz = DzConfig()
    vs = [cav(f"c{i}", x, role=Role.MLC_CAV if mlc_flags[i] else Role.THROUGH_CAV) for i, x in enumerate(xs)]
    o = sort_and_classify(vs, dz)
    pos = [o.positions[v] for v in o.omega]
    assert all(a > b for a, b in zip(pos, pos[1:]))
    assert set(o.omega) == {v.id for v in vs if dz.x_s <= v.x <= dz.x_f}
    assert list(o.omega_l) == [v for v in o.omega if v.startswith("c") and mlc_flags[int(v[1:])]]
    assert all(o.omega[i - 1] == vid for i, vid in zip(o.l_indices, o.omega_l))
    assert list(o.l_indices) == sorted(set(o.l_indices))
    # pure function
    assert sort_and_classify(vs, dz) == o
