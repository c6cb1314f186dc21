"""Worst-case reachability and RSS-style longitudinal safety distances.

All functions are closed form. Longitudinal extremes come from bang-bang
acceleration with velocity clamping; the lateral axis is bounded by the
lateral velocity limits only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

from .world import AssumptionSet, ObstacleState

#: Returned by :func:`required_deceleration` when no finite braking suffices.
UNRECOVERABLE = math.inf


@dataclass(frozen=True)
class ReachableEnvelope:
    t: float
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    v_long_min: float
    v_long_max: float
    v_lat_min: float
    v_lat_max: float

    def contains(self, x: float, y: float, v_long: float, v_lat: float,
                 tol: float = 1e-9) -> bool:
        return (self.x_min - tol <= x <= self.x_max + tol
                and self.y_min - tol <= y <= self.y_max + tol
                and self.v_long_min - tol <= v_long <= self.v_long_max + tol
                and self.v_lat_min - tol <= v_lat <= self.v_lat_max + tol)


def _clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def longitudinal_extremes(v0: float, dt: float, v_min: float, v_max: float,
                          a_accel: float, a_brake: float) -> Tuple[float, float, float, float]:
    """Displacement and speed under the two extremal policies.

    Returns ``(dx_min, dx_max, v_lo, v_hi)``: ``dx_max``/``v_hi`` from full
    acceleration capped at ``v_max``, ``dx_min``/``v_lo`` from full braking
    floored at ``v_min``. ``v0`` is clamped into ``[v_min, v_max]`` first.
    """
    v0 = _clamp(v0, v_min, v_max)
    if a_accel > 0.0 and v0 < v_max:
        t_sat = (v_max - v0) / a_accel
        if dt <= t_sat:
            dx_max = v0 * dt + 0.5 * a_accel * dt * dt
            v_hi = v0 + a_accel * dt
        else:
            dx_max = v0 * t_sat + 0.5 * a_accel * t_sat * t_sat + v_max * (dt - t_sat)
            v_hi = v_max
    else:
        dx_max = v0 * dt
        v_hi = v0
    if v0 > v_min:
        t_sat = (v0 - v_min) / a_brake
        if dt <= t_sat:
            dx_min = v0 * dt - 0.5 * a_brake * dt * dt
            v_lo = v0 - a_brake * dt
        else:
            dx_min = v0 * t_sat - 0.5 * a_brake * t_sat * t_sat + v_min * (dt - t_sat)
            v_lo = v_min
    else:
        dx_min = v0 * dt
        v_lo = v0
    return dx_min, dx_max, v_lo, v_hi


def predict_envelope(obs: ObstacleState, assume: AssumptionSet, dt: float) -> ReachableEnvelope:
    """Interval over-approximation of every state ``obs`` can reach after ``dt``."""
    if not dt >= 0.0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    dx_min, dx_max, v_lo, v_hi = longitudinal_extremes(
        obs.v_long, dt, assume.v_long_min, assume.v_long_max,
        assume.a_accel_max, assume.a_brake_max)
    if dt == 0.0:
        v_lat = _clamp(obs.v_lat, assume.v_lat_min, assume.v_lat_max)
        y_min = y_max = obs.y
        vl_min = vl_max = v_lat
    else:
        y_min = obs.y + assume.v_lat_min * dt
        y_max = obs.y + assume.v_lat_max * dt
        vl_min, vl_max = assume.v_lat_min, assume.v_lat_max
    return ReachableEnvelope(dt, obs.x + dx_min, obs.x + dx_max, y_min, y_max,
                             v_lo, v_hi, vl_min, vl_max)


def nominal_envelope(obs: ObstacleState, assume: AssumptionSet, dt: float) -> ReachableEnvelope:
    """Degenerate envelope at the constant-velocity extrapolation of ``obs``.

    The point is clamped into the worst-case envelope so it stays reachable.
    """
    wc = predict_envelope(obs, assume, dt)
    v_long = _clamp(obs.v_long, assume.v_long_min, assume.v_long_max)
    v_lat = _clamp(obs.v_lat, assume.v_lat_min, assume.v_lat_max)
    x = _clamp(obs.x + v_long * dt, wc.x_min, wc.x_max)
    y = _clamp(obs.y + v_lat * dt, wc.y_min, wc.y_max)
    return ReachableEnvelope(dt, x, x, y, y, v_long, v_long, v_lat, v_lat)


def safe_gap(v_rear: float, v_front: float, response_time: float, a_accel: float,
             brake_rear_min: float, brake_front_max: float) -> float:
    """Scalar form of :func:`min_safe_longitudinal_gap`."""
    v_resp = v_rear + response_time * a_accel
    d = (v_rear * response_time + 0.5 * a_accel * response_time * response_time
         + v_resp * v_resp / (2.0 * brake_rear_min)
         - v_front * v_front / (2.0 * brake_front_max))
    return d if d > 0.0 else 0.0


def braking_needed(gap: float, v_rear: float, v_front: float, response_time: float,
                   a_accel: float, brake_front_max: float) -> float:
    """Scalar form of :func:`required_deceleration`."""
    v_resp = v_rear + response_time * a_accel
    denom = 2.0 * (gap - v_rear * response_time - 0.5 * a_accel * response_time * response_time
                   + v_front * v_front / (2.0 * brake_front_max))
    if denom <= 0.0:
        return UNRECOVERABLE
    return v_resp * v_resp / denom


def min_safe_longitudinal_gap(v_rear: float, v_front: float, assume_rear: AssumptionSet,
                              assume_front: AssumptionSet) -> float:
    """Minimum bumper-to-bumper gap the rear vehicle must keep.

    The rear vehicle may accelerate for its response time and then brakes
    with its guaranteed braking ``a_brake_min``; the front vehicle brakes as
    hard as it possibly can.
    """
    if assume_rear.a_brake_min <= 0 or assume_front.a_brake_max <= 0:
        raise ValueError("braking parameters must be positive")
    return safe_gap(v_rear, v_front, assume_rear.response_time, assume_rear.a_accel_max,
                    assume_rear.a_brake_min, assume_front.a_brake_max)


def required_deceleration(gap: float, v_rear: float, v_front: float,
                          assume_rear: AssumptionSet, assume_front: AssumptionSet) -> float:
    """Smallest guaranteed braking that makes ``gap`` safe.

    Returns :data:`UNRECOVERABLE` (``inf``) when even unbounded braking
    after the response time cannot avoid contact.
    """
    if not gap > 0:
        raise ValueError(f"gap must be positive, got {gap}")
    if assume_front.a_brake_max <= 0:
        raise ValueError("braking parameters must be positive")
    return braking_needed(gap, v_rear, v_front, assume_rear.response_time,
                          assume_rear.a_accel_max, assume_front.a_brake_max)
