"""Instantiation of constraint kinds into numeric bounds and their validation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .config import CheckerConfig
from .dsl import ConstraintKind
from .monitor import PairFeatures
from .world import TrajectoryPoint


@dataclass(frozen=True)
class MotionConstraint:
    """A bound one trajectory point must respect.

    Units: MIN_BRAKE and MAX_ACCEL in m/s^2 (MIN_BRAKE is a braking
    magnitude), MAX_LAT_SPEED in m/s, MIN_GAP in m.
    """

    kind: ConstraintKind
    bound: float
    obstacle_id: int
    severity: str

    def __post_init__(self):
        if not math.isfinite(self.bound):
            raise ValueError("constraint bound must be finite")
        if self.kind is ConstraintKind.NONE:
            raise ValueError("NONE carries no bound")


class Check(NamedTuple):
    bound: float
    actual: float
    slack: float        # negative when the point violates the bound
    unrecoverable: bool


def check_kind(kind: int, feats: PairFeatures, point: TrajectoryPoint,
               cfg: CheckerConfig) -> Check:
    """Bound for ``kind`` from one pair's features, and the point's margin to it."""
    if kind == ConstraintKind.MIN_BRAKE:
        actual = -point.a_long
        required = feats.required_brake
        max_brake = cfg.ego.a_brake_max
        if required <= 0.0:
            return Check(0.0, actual, math.inf, False)
        if required > max_brake:
            return Check(max_brake, actual, -math.inf, True)
        return Check(required, actual, actual - required, False)
    if kind == ConstraintKind.MAX_ACCEL:
        return Check(cfg.accel_limit, point.a_long, cfg.accel_limit - point.a_long, False)
    if kind == ConstraintKind.MAX_LAT_SPEED:
        return Check(cfg.lat_speed_limit, feats.lat_toward,
                     cfg.lat_speed_limit - feats.lat_toward, False)
    if kind == ConstraintKind.MIN_GAP:
        return Check(feats.d_min, feats.gap, feats.gap - feats.d_min, False)
    raise ValueError(f"kind {kind!r} has no bound")
