import pytest
from hypothesis import given, strategies as st

from trajcheck.config import defaults
from trajcheck.kinematics import predict_envelope, safe_gap
from trajcheck.monitor import (BUILTIN_CATALOG, ReachableEnvelope, discretize, pair_features,
                               worst_case_gap)
from trajcheck.world import ObstacleState, TrajectoryPoint, lane_of

CFG = defaults()
ROAD = CFG.road
GUEST = CFG.guest
LANE2 = ROAD.lane_center(2)


def _state(point, obs, t=None):
    t = point.t if t is None else t
    env = predict_envelope(obs, GUEST, t)
    return discretize(point, env, obs, ROAD, GUEST, CFG).as_dict()


def test_catalog_shape():
    assert BUILTIN_CATALOG.sizes == (4, 3, 3, 3, 3)
    assert BUILTIN_CATALOG.state_space_size == 324


def test_far_lead_same_lane_is_safe():
    point = TrajectoryPoint(0.0, 0.0, LANE2, v_long=20.0)
    obs = ObstacleState(1, 200.0, LANE2, 0.0, 20.0)
    env = predict_envelope(obs, GUEST, 0.0)
    feats = pair_features(point, env, obs, ROAD, GUEST, CFG)
    ego = CFG.ego
    assert feats.d_min == pytest.approx(safe_gap(20, 20, ego.response_time, ego.a_accel_max,
                                                 ego.a_brake_min, GUEST.a_brake_max))
    assert feats.d_min == pytest.approx(28.015)
    s = _state(point, obs)
    assert s["relative_lane"] == "same"
    assert s["longitudinal_relation"] == "ahead"
    assert s["long_gap_zone"] == "safe"
    assert s["cut_in_threat"] == "none"


def test_alongside_left_is_overlapping():
    point = TrajectoryPoint(0.0, 0.0, LANE2, v_long=20.0)
    obs = ObstacleState(1, 1.0, ROAD.lane_center(3), 0.0, 20.0)
    s = _state(point, obs)
    assert s["longitudinal_relation"] == "overlapping"
    assert s["relative_lane"] == "adjacent_left"


def test_right_adjacent_guest_predicted_cut_in():
    # guest one lane to the right, ahead; its worst-case lateral reach enters the ego lane
    point = TrajectoryPoint(1.0, 20.0, LANE2, v_long=20.0)
    obs = ObstacleState(1, 30.0, ROAD.lane_center(1), 0.0, 18.0, 0.0)
    s = _state(point, obs)
    assert s["relative_lane"] == "adjacent_right"
    assert s["cut_in_threat"] == "predicted"


def test_lateral_motion_toward_ego_lane_is_imminent():
    # after 0.5 s the nominal body straddles the lane line while its center is still outside
    point = TrajectoryPoint(0.5, 10.0, LANE2, v_long=20.0)
    obs = ObstacleState(1, 30.0, ROAD.lane_center(1), 0.0, 18.0, 2.0)
    assert _state(point, obs)["cut_in_threat"] == "imminent"


def test_worst_case_gap_examples():
    p = TrajectoryPoint(0.0, 0.0, 0.0)
    ahead = ReachableEnvelope(0, 30, 35, 0, 0, 0, 0, 0, 0)
    behind = ReachableEnvelope(0, -40, -30, 0, 0, 0, 0, 0, 0)
    across = ReachableEnvelope(0, -3, 3, 0, 0, 0, 0, 0, 0)
    assert worst_case_gap(p, ahead, 2.5, 2.5) == 25.0
    assert worst_case_gap(p, behind, 2.5, 2.5) == 25.0
    assert worst_case_gap(p, across, 2.5, 2.5) == 0.0


def test_mismatched_times_rejected():
    point = TrajectoryPoint(1.0, 0.0, LANE2)
    obs = ObstacleState(1, 50.0, LANE2)
    env = predict_envelope(obs, GUEST, 0.5)
    with pytest.raises(ValueError):
        discretize(point, env, obs, ROAD, GUEST, CFG)


finite = st.floats(-300, 300, allow_nan=False)


@given(finite, st.floats(-5, 20), st.floats(0, 40), finite, st.floats(-5, 20),
       st.floats(0, 40), st.floats(-3, 3), st.floats(0, 5))
def test_discretize_is_total(ex, ey, ev, ox, oy, ov, olat, t):
    point = TrajectoryPoint(t, ex, ey, v_long=ev)
    obs = ObstacleState(1, ox, oy, 0.0, ov, olat)
    state = discretize(point, predict_envelope(obs, GUEST, t), obs, ROAD, GUEST, CFG)
    for (name, dom), i in zip(BUILTIN_CATALOG, state.indices):
        assert 0 <= i < len(dom)


ZONE_RANK = {"unsafe": 0, "marginal": 1, "safe": 2}


@given(st.floats(8, 300), st.floats(8, 300), st.floats(0, 40), st.floats(0, 40))
def test_zone_monotone_in_gap(d1, d2, ev, ov):
    d1, d2 = sorted((d1, d2))
    point = TrajectoryPoint(0.0, 0.0, LANE2, v_long=ev)
    z = [_state(point, ObstacleState(1, d, LANE2, 0.0, ov))["long_gap_zone"] for d in (d1, d2)]
    assert ZONE_RANK[z[0]] <= ZONE_RANK[z[1]]


@given(st.floats(0.01, 13.99), st.floats(0.01, 13.99))
def test_same_lane_agrees_with_lane_of(ey, oy):
    point = TrajectoryPoint(0.0, 0.0, ey, v_long=10.0)
    obs = ObstacleState(1, 60.0, oy, 0.0, 10.0)
    same = _state(point, obs)["relative_lane"] == "same"
    assert same == (lane_of(ey, ROAD) == lane_of(oy, ROAD))
