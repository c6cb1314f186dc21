"""Core domain types: road, trajectories, obstacles and world frames.

Frame of reference is a straight road: ``x`` runs along the road, ``y`` is
lateral and grows to the left. Lane 0 is the rightmost lane and its right
edge sits at ``y = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

DEFAULT_LANE_COUNT = 4
DEFAULT_LANE_WIDTH = 3.5
DEFAULT_MAX_HORIZON = 5.0


class InvalidWorldError(ValueError):
    """Raised when a domain value violates its invariants."""


def _require_finite(owner: str, **values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise InvalidWorldError(f"{owner}.{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class RoadModel:
    lane_count: int = DEFAULT_LANE_COUNT
    lane_width: float = DEFAULT_LANE_WIDTH

    def __post_init__(self):
        if self.lane_count < 1:
            raise InvalidWorldError("lane_count must be >= 1")
        if not (self.lane_width > 0 and math.isfinite(self.lane_width)):
            raise InvalidWorldError("lane_width must be positive")

    @property
    def width(self) -> float:
        return self.lane_count * self.lane_width

    def lane_span(self, lane: int) -> Tuple[float, float]:
        """Lateral extent ``(right, left)`` of ``lane``."""
        return lane * self.lane_width, (lane + 1) * self.lane_width

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width


def lane_of(y: float, road: RoadModel) -> Optional[int]:
    """Return the lane index containing ``y``, or ``None`` when off-road.

    A point on a lane boundary belongs to the lower-index lane, so lane 0
    covers ``[0, w]`` and lane ``i > 0`` covers ``(i*w, (i+1)*w]``.
    """
    if not (0.0 <= y <= road.lane_count * road.lane_width):
        return None
    if y == 0.0:
        return 0
    return max(0, math.ceil(y / road.lane_width) - 1)


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    x: float
    y: float
    heading: float = 0.0
    v_long: float = 0.0
    v_lat: float = 0.0
    a_long: float = 0.0
    a_lat: float = 0.0

    def __post_init__(self):
        _require_finite(
            "TrajectoryPoint", t=self.t, x=self.x, y=self.y, heading=self.heading,
            v_long=self.v_long, v_lat=self.v_lat, a_long=self.a_long, a_lat=self.a_lat,
        )
        if self.t < 0:
            raise InvalidWorldError(f"TrajectoryPoint.t must be >= 0, got {self.t}")

    def as_tuple(self) -> Tuple[float, ...]:
        return (self.t, self.x, self.y, self.heading, self.v_long, self.v_lat,
                self.a_long, self.a_lat)


@dataclass(frozen=True)
class Trajectory:
    id: int
    points: Tuple[TrajectoryPoint, ...]
    max_horizon: float = field(default=DEFAULT_MAX_HORIZON, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise InvalidWorldError(f"trajectory {self.id} has no points")
        prev = -math.inf
        for i, p in enumerate(self.points):
            if not p.t > prev:
                raise InvalidWorldError(
                    f"trajectory {self.id}: point {i} time {p.t} does not increase")
            prev = p.t
        if self.horizon > self.max_horizon + 1e-9:
            raise InvalidWorldError(
                f"trajectory {self.id}: horizon {self.horizon} exceeds {self.max_horizon}")

    @property
    def horizon(self) -> float:
        return self.points[-1].t


@dataclass(frozen=True)
class ObstacleState:
    id: int
    x: float
    y: float
    heading: float = 0.0
    v_long: float = 0.0
    v_lat: float = 0.0
    length: float = 4.5
    width: float = 1.8

    def __post_init__(self):
        _require_finite(
            "ObstacleState", x=self.x, y=self.y, heading=self.heading,
            v_long=self.v_long, v_lat=self.v_lat, length=self.length, width=self.width,
        )
        if self.length <= 0 or self.width <= 0:
            raise InvalidWorldError(f"obstacle {self.id}: dimensions must be positive")


@dataclass(frozen=True)
class AssumptionSet:
    """Behavioural bounds for one class of road user.

    ``a_brake_max`` is the strongest braking the vehicle may apply and
    ``a_brake_min`` the braking it is guaranteed to apply when it has to
    respond (``None`` means the same as ``a_brake_max``).
    """

    v_long_min: float = 0.0
    v_long_max: float = 40.0
    v_lat_min: float = -3.0
    v_lat_max: float = 3.0
    a_accel_max: float = 3.0
    a_brake_max: float = 8.0
    response_time: float = 0.1
    a_brake_min: Optional[float] = None

    def __post_init__(self):
        if self.a_brake_min is None:
            object.__setattr__(self, "a_brake_min", self.a_brake_max)
        _require_finite(
            "AssumptionSet", v_long_min=self.v_long_min, v_long_max=self.v_long_max,
            v_lat_min=self.v_lat_min, v_lat_max=self.v_lat_max,
            a_accel_max=self.a_accel_max, a_brake_max=self.a_brake_max,
            response_time=self.response_time, a_brake_min=self.a_brake_min,
        )
        if self.v_long_min > self.v_long_max:
            raise InvalidWorldError("v_long_min must not exceed v_long_max")
        if self.v_lat_min > self.v_lat_max:
            raise InvalidWorldError("v_lat_min must not exceed v_lat_max")
        if self.a_accel_max < 0:
            raise InvalidWorldError("a_accel_max must be >= 0")
        if self.a_brake_max <= 0 or self.a_brake_min <= 0:
            raise InvalidWorldError("braking magnitudes must be > 0")
        if self.response_time < 0:
            raise InvalidWorldError("response_time must be >= 0")


@dataclass(frozen=True)
class WorldFrame:
    frame_id: int
    timestamp: float
    ego_state: ObstacleState
    obstacles: Tuple[ObstacleState, ...] = ()
    trajectories: Tuple[Trajectory, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        _require_finite("WorldFrame", timestamp=self.timestamp)
        ids = [o.id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise InvalidWorldError("obstacle ids must be unique")
        tids = [tr.id for tr in self.trajectories]
        if len(set(tids)) != len(tids):
            raise InvalidWorldError("trajectory ids must be unique")


def make_trajectory(traj_id: int, points: Sequence[TrajectoryPoint],
                    max_horizon: float = DEFAULT_MAX_HORIZON) -> Trajectory:
    return Trajectory(traj_id, tuple(points), max_horizon=max_horizon)
