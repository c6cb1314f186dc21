import math

import numpy as np
import pytest
from hypothesis import assume as h_assume, given, strategies as st

from trajcheck.kinematics import (UNRECOVERABLE, longitudinal_extremes,
                                  min_safe_longitudinal_gap, nominal_envelope, predict_envelope,
                                  required_deceleration, safe_gap)
from trajcheck.world import AssumptionSet, InvalidWorldError, ObstacleState

from oracles import (bisect_braking, contact, oracle_envelope, random_envelope_case,
                     simulate_piecewise)

GUEST = AssumptionSet(v_long_min=0, v_long_max=30, a_accel_max=2, a_brake_max=8)
FIELDS = ("x_min", "x_max", "y_min", "y_max", "v_long_min", "v_long_max", "v_lat_min",
          "v_lat_max")


def _close(env, ref, tol=1e-3):
    return all(abs(getattr(env, f) - ref[f]) <= tol for f in FIELDS)


def test_zero_horizon_is_degenerate():
    obs = ObstacleState(1, 5.0, 2.0, 0.0, 10.0, 0.5)
    env = predict_envelope(obs, GUEST, 0.0)
    assert (env.x_min, env.x_max, env.y_min, env.y_max) == (5.0, 5.0, 2.0, 2.0)
    assert env.v_long_min == env.v_long_max == 10.0
    assert env.v_lat_min == env.v_lat_max == 0.5


def test_envelope_example_bang_bang():
    obs = ObstacleState(1, 0.0, 0.0, 0.0, 10.0)
    env = predict_envelope(obs, GUEST, 2.0)
    ref = oracle_envelope(0.0, 0.0, 10.0, 0.0, GUEST, 2000)
    assert env.x_max == pytest.approx(24.0, abs=1e-3)
    assert env.x_min == pytest.approx(6.25, abs=1e-3)
    assert _close(env, ref)


def test_envelope_example_speed_cap():
    capped = AssumptionSet(v_long_min=0, v_long_max=12, a_accel_max=2, a_brake_max=8)
    obs = ObstacleState(1, 0.0, 0.0, 0.0, 10.0)
    env = predict_envelope(obs, capped, 2.0)
    assert env.x_max == pytest.approx(23.0, abs=1e-3)
    assert _close(env, oracle_envelope(0.0, 0.0, 10.0, 0.0, capped, 2000))


def test_envelope_matches_oracle_on_random_grid():
    rng = np.random.default_rng(11)
    for _ in range(40):
        obs, assume, steps = random_envelope_case(rng)
        env = predict_envelope(obs, assume, steps / 1000.0)
        assert _close(env, oracle_envelope(obs.x, obs.y, obs.v_long, obs.v_lat, assume, steps))


def test_negative_dt_rejected():
    with pytest.raises(ValueError):
        predict_envelope(ObstacleState(1, 0, 0), GUEST, -0.1)


@given(st.floats(0, 30), st.floats(0, 5), st.floats(0, 5))
def test_envelope_nesting(v0, t1, t2):
    """Nested in the frame moving at the initial speed; velocity and lateral bounds nest directly."""
    t1, t2 = sorted((t1, t2))
    obs = ObstacleState(1, 0.0, 5.0, 0.0, v0, 0.0)
    e1, e2 = predict_envelope(obs, GUEST, t1), predict_envelope(obs, GUEST, t2)
    eps = 1e-9
    assert e2.x_min - v0 * t2 <= e1.x_min - v0 * t1 + eps
    assert e2.x_max - v0 * t2 >= e1.x_max - v0 * t1 - eps
    assert e2.y_min <= e1.y_min + eps and e2.y_max >= e1.y_max - eps
    assert e2.v_long_min <= e1.v_long_min + eps and e2.v_long_max >= e1.v_long_max - eps
    assert e2.v_lat_min <= e1.v_lat_min + eps and e2.v_lat_max >= e1.v_lat_max - eps


@given(st.integers(0, 2 ** 32 - 1))
def test_envelope_soundness_random_controls(seed):
    rng = np.random.default_rng(seed)
    v0 = float(rng.uniform(0, 30))
    controls = [(int(rng.integers(1, 800)), float(rng.uniform(-GUEST.a_brake_max,
                                                              GUEST.a_accel_max)))
                for _ in range(int(rng.integers(1, 8)))]
    lat = float(rng.uniform(GUEST.v_lat_min, GUEST.v_lat_max))
    traj = simulate_piecewise(0.0, v0, controls, GUEST.v_long_min, GUEST.v_long_max)
    obs = ObstacleState(1, 0.0, 5.0, 0.0, v0, lat)
    for k in range(0, len(traj), 97):
        x, v = traj[k]
        env = predict_envelope(obs, GUEST, k / 1000.0)
        assert env.contains(x, 5.0 + lat * k / 1000.0, v, lat, tol=1e-6)


def test_nominal_envelope_inside_worst_case():
    obs = ObstacleState(1, 0.0, 5.0, 0.0, 50.0, 9.0)
    for t in (0.0, 0.5, 2.0, 5.0):
        wc, nom = predict_envelope(obs, GUEST, t), nominal_envelope(obs, GUEST, t)
        assert wc.x_min <= nom.x_min == nom.x_max <= wc.x_max
        assert wc.y_min <= nom.y_min == nom.y_max <= wc.y_max


def test_longitudinal_extremes_clamps_initial_speed():
    dx_min, dx_max, lo, hi = longitudinal_extremes(50.0, 1.0, 0.0, 30.0, 2.0, 8.0)
    assert hi == 30.0 and dx_max == pytest.approx(30.0)
    assert lo == pytest.approx(22.0)


# ------------------------------------------------------------ safe distance

REAR = AssumptionSet(a_accel_max=2.0, a_brake_max=8.0, a_brake_min=4.0, response_time=0.1)
FRONT = AssumptionSet(a_brake_max=8.0)


def test_safe_gap_both_stationary():
    still = AssumptionSet(a_accel_max=0.0, a_brake_max=8.0, a_brake_min=4.0)
    assert min_safe_longitudinal_gap(0.0, 0.0, still, FRONT) == 0.0
    # a stationary rear vehicle may still accelerate during its response time
    assert min_safe_longitudinal_gap(0.0, 0.0, REAR, FRONT) == pytest.approx(0.01 + 0.04 / 8)


def test_safe_gap_example():
    d = min_safe_longitudinal_gap(20.0, 20.0, REAR, FRONT)
    assert d == pytest.approx(28.015, abs=1e-9)
    # brute force: smallest contact-free initial gap, 1 ms steps, within 0.05 m
    gaps = np.arange(27.5, 28.6, 0.01)
    hit = contact(gaps, 20.0, 20.0, 100, 2.0, 4.0, 8.0)
    oracle = gaps[~hit].min()
    assert abs(oracle - d) <= 0.05


def test_safe_gap_front_escapes():
    assert min_safe_longitudinal_gap(0.0, 30.0, REAR, FRONT) == 0.0


def test_braking_parameters_must_be_positive():
    with pytest.raises(InvalidWorldError):
        AssumptionSet(a_brake_min=0.0)


def test_required_deceleration_inverse_of_gap():
    gap = min_safe_longitudinal_gap(20.0, 15.0, REAR, FRONT)
    assert required_deceleration(gap, 20.0, 15.0, REAR, FRONT) == pytest.approx(4.0, abs=1e-12)


def test_required_deceleration_example():
    b = required_deceleration(10.0, 20.0, 20.0, REAR, FRONT)
    assert b == pytest.approx(408.04 / 65.98, abs=1e-9)
    oracle = float(bisect_braking([10.0], 20.0, 20.0, 100, 2.0, 8.0)[0])
    assert abs(oracle - b) <= 0.05


def test_required_deceleration_unrecoverable():
    assert required_deceleration(0.5, 30.0, 0.0, REAR, FRONT) == UNRECOVERABLE
    # even near-instant braking after the response time cannot avoid contact
    assert contact(0.5, 30.0, 0.0, 100, 2.0, 1e6, 8.0)[()]


def test_required_deceleration_rejects_non_positive_gap():
    with pytest.raises(ValueError):
        required_deceleration(0.0, 10.0, 10.0, REAR, FRONT)


speeds = st.floats(0, 40, allow_nan=False)


@given(st.floats(0.1, 200), st.floats(0.1, 200), speeds, speeds)
def test_required_deceleration_monotone_in_gap(g1, g2, vr, vf):
    g1, g2 = sorted((g1, g2))
    assert required_deceleration(g2, vr, vf, REAR, FRONT) <= \
        required_deceleration(g1, vr, vf, REAR, FRONT)


@given(st.floats(0.1, 200), speeds, speeds, speeds)
def test_required_deceleration_monotone_in_rear_speed(gap, v1, v2, vf):
    v1, v2 = sorted((v1, v2))
    assert required_deceleration(gap, v1, vf, REAR, FRONT) <= \
        required_deceleration(gap, v2, vf, REAR, FRONT)


@given(st.floats(0.1, 200), speeds, speeds, st.floats(0, 0.5), st.floats(0, 4))
def test_inverse_property(gap, vr, vf, rho, acc):
    rear = AssumptionSet(a_accel_max=acc, response_time=rho, a_brake_max=8.0)
    b = required_deceleration(gap, vr, vf, rear, FRONT)
    h_assume(math.isfinite(b) and b > 0.0)
    rear_b = AssumptionSet(a_accel_max=acc, response_time=rho, a_brake_max=max(8.0, b),
                           a_brake_min=b)
    assert abs(min_safe_longitudinal_gap(vr, vf, rear_b, FRONT) - gap) <= 1e-9


def test_safe_gap_scalar_matches_wrapper():
    assert safe_gap(20, 20, 0.1, 2, 4, 8) == min_safe_longitudinal_gap(20, 20, REAR, FRONT)
