"""Discretization of (ego point, obstacle envelope) pairs into semantic state.

The built-in catalog has five relational variables. Their order is the
variable order of every compiled policy tree, and the catalog hash ties a
policy file to the monitor that produces its inputs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, NamedTuple, Optional, Sequence, Tuple

from .config import CheckerConfig, defaults
from .kinematics import UNRECOVERABLE, ReachableEnvelope, braking_needed, safe_gap
from .world import AssumptionSet, ObstacleState, RoadModel, TrajectoryPoint, lane_of


@dataclass(frozen=True)
class StateVariableCatalog:
    variables: Tuple[Tuple[str, Tuple[str, ...]], ...]

    def __post_init__(self):
        variables = tuple((name, tuple(values)) for name, values in self.variables)
        object.__setattr__(self, "variables", variables)
        names = [name for name, _ in variables]
        if len(set(names)) != len(names):
            raise ValueError("catalog variable names must be unique")
        for name, values in variables:
            if len(values) < 2:
                raise ValueError(f"variable {name!r} needs at least two values")
            if len(set(values)) != len(values):
                raise ValueError(f"variable {name!r} has duplicate values")

    def __len__(self) -> int:
        return len(self.variables)

    def __iter__(self) -> Iterator[Tuple[str, Tuple[str, ...]]]:
        return iter(self.variables)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.variables)

    def domain(self, name: str) -> Tuple[str, ...]:
        for var, values in self.variables:
            if var == name:
                return values
        raise KeyError(name)

    def position(self, name: str) -> int:
        return self.names.index(name)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(values) for _, values in self.variables)

    @property
    def state_space_size(self) -> int:
        size = 1
        for n in self.sizes:
            size *= n
        return size

    def canonical_text(self) -> str:
        return "".join(f"{name}:{','.join(values)};" for name, values in self.variables)

    def digest(self) -> bytes:
        """32-byte SHA-256 identifying names, values and their order."""
        return hashlib.sha256(self.canonical_text().encode("utf-8")).digest()

    def assignments(self) -> Iterator[Tuple[int, ...]]:
        """All value-index tuples in lexicographic catalog order."""
        sizes = self.sizes
        idx = [0] * len(sizes)
        if not sizes:
            yield ()
            return
        while True:
            yield tuple(idx)
            pos = len(sizes) - 1
            while pos >= 0:
                idx[pos] += 1
                if idx[pos] < sizes[pos]:
                    break
                idx[pos] = 0
                pos -= 1
            if pos < 0:
                return

    def state(self, indices: Sequence[int]) -> "SemanticState":
        return SemanticState(self, tuple(indices))

    def state_from(self, **values: str) -> "SemanticState":
        indices = []
        for name, domain in self.variables:
            indices.append(domain.index(values[name]))
        return SemanticState(self, tuple(indices))


@dataclass(frozen=True)
class SemanticState:
    catalog: StateVariableCatalog
    indices: Tuple[int, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.catalog):
            raise ValueError("state must assign every catalog variable")
        for i, (name, values) in zip(self.indices, self.catalog):
            if not 0 <= i < len(values):
                raise ValueError(f"value index {i} out of range for {name!r}")

    def __getitem__(self, name: str) -> str:
        pos = self.catalog.position(name)
        return self.catalog.variables[pos][1][self.indices[pos]]

    def as_dict(self) -> Dict[str, str]:
        return {name: values[i] for i, (name, values) in zip(self.indices, self.catalog)}


BUILTIN_CATALOG = StateVariableCatalog((
    ("relative_lane", ("same", "adjacent_left", "adjacent_right", "distant")),
    ("longitudinal_relation", ("ahead", "behind", "overlapping")),
    ("long_gap_zone", ("safe", "marginal", "unsafe")),
    ("lat_gap_zone", ("safe", "marginal", "unsafe")),
    ("cut_in_threat", ("none", "predicted", "imminent")),
))

SAME, ADJ_LEFT, ADJ_RIGHT, DISTANT = range(4)
AHEAD, BEHIND, OVERLAPPING = range(3)
SAFE, MARGINAL, UNSAFE = range(3)
NO_THREAT, PREDICTED, IMMINENT = range(3)


class PairFeatures(NamedTuple):
    """Discrete state plus the physical quantities the constraint bounds need."""

    indices: Tuple[int, int, int, int, int]
    gap: float
    d_min: float
    required_brake: float
    lat_toward: float


def worst_case_gap(ego_point: TrajectoryPoint, env: ReachableEnvelope,
                   ego_half_length: float, obs_half_length: float) -> float:
    """Bumper-to-bumper gap to the closest position the envelope allows.

    Zero when the envelope's longitudinal span reaches the ego body.
    """
    front_gap = env.x_min - obs_half_length - (ego_point.x + ego_half_length)
    if front_gap >= 0.0:
        return front_gap
    rear_gap = (ego_point.x - ego_half_length) - (env.x_max + obs_half_length)
    if rear_gap >= 0.0:
        return rear_gap
    return 0.0


def _zone(gap: float, threshold: float, factor: float) -> int:
    if gap < threshold:
        return UNSAFE
    if gap < factor * threshold:
        return MARGINAL
    return SAFE


def pair_features(ego_point: TrajectoryPoint, env: ReachableEnvelope, obs: ObstacleState,
                  road: RoadModel, assume: AssumptionSet,
                  cfg: CheckerConfig) -> PairFeatures:
    t = env.t
    ego = cfg.ego
    half_ego_len = 0.5 * cfg.ego_length
    half_obs_len = 0.5 * obs.length
    half_ego_w = 0.5 * cfg.ego_width
    half_obs_w = 0.5 * obs.width

    x_nom = min(max(obs.x + obs.v_long * t, env.x_min), env.x_max)
    y_nom = min(max(obs.y + obs.v_lat * t, env.y_min), env.y_max)

    ego_lane = lane_of(ego_point.y, road)
    obs_lane = lane_of(y_nom, road)
    if ego_lane is None or obs_lane is None:
        rel_lane = DISTANT
    elif obs_lane == ego_lane:
        rel_lane = SAME
    elif obs_lane == ego_lane + 1:
        rel_lane = ADJ_LEFT
    elif obs_lane == ego_lane - 1:
        rel_lane = ADJ_RIGHT
    else:
        rel_lane = DISTANT

    dx = x_nom - ego_point.x
    if abs(dx) < half_ego_len + half_obs_len:
        relation = OVERLAPPING
    elif dx > 0.0:
        relation = AHEAD
    else:
        relation = BEHIND

    gap = worst_case_gap(ego_point, env, half_ego_len, half_obs_len)
    if relation == BEHIND:
        d_min = safe_gap(env.v_long_max, ego_point.v_long, assume.response_time,
                         assume.a_accel_max, assume.a_brake_min, ego.a_brake_max)
        required = 0.0
    else:
        d_min = safe_gap(ego_point.v_long, env.v_long_min, ego.response_time,
                         ego.a_accel_max, ego.a_brake_min, assume.a_brake_max)
        if relation == OVERLAPPING or gap <= 0.0:
            required = UNRECOVERABLE
        else:
            required = braking_needed(gap, ego_point.v_long, env.v_long_min,
                                      ego.response_time, ego.a_accel_max,
                                      assume.a_brake_max)
    long_zone = _zone(gap, d_min, cfg.zone_factor)

    ego_lo = ego_point.y - half_ego_w
    ego_hi = ego_point.y + half_ego_w
    obs_lo = env.y_min - half_obs_w
    obs_hi = env.y_max + half_obs_w
    lat_gap = max(obs_lo - ego_hi, ego_lo - obs_hi, 0.0)
    side = 1.0 if y_nom > ego_point.y else -1.0
    lat_toward = ego_point.v_lat * side
    closing = lat_toward - obs.v_lat * side
    drift = -assume.v_lat_min if side > 0.0 else assume.v_lat_max
    d_lat = (cfg.lat_margin + ego.response_time * max(closing, 0.0)
             + ego.response_time * max(drift, 0.0))
    lat_zone = _zone(lat_gap, d_lat, cfg.zone_factor)

    threat = NO_THREAT
    if rel_lane != SAME and ego_lane is not None:
        lane_lo, lane_hi = road.lane_span(ego_lane)
        if y_nom + half_obs_w > lane_lo and y_nom - half_obs_w < lane_hi:
            threat = IMMINENT
        elif obs_hi > lane_lo and obs_lo < lane_hi:
            threat = PREDICTED

    return PairFeatures((rel_lane, relation, long_zone, lat_zone, threat),
                        gap, d_min, required, lat_toward)


def discretize(ego_point: TrajectoryPoint, env: ReachableEnvelope, obs: ObstacleState,
               road: RoadModel, assume: AssumptionSet,
               cfg: Optional[CheckerConfig] = None) -> SemanticState:
    """Map one ego point and one obstacle envelope to the built-in catalog."""
    if env.t != ego_point.t:
        raise ValueError(f"envelope time {env.t} does not match point time {ego_point.t}")
    cfg = cfg or defaults()
    feats = pair_features(ego_point, env, obs, road, assume, cfg)
    return SemanticState(BUILTIN_CATALOG, feats.indices)


def catalog_from_pairs(pairs: Iterable[Tuple[str, Sequence[str]]]) -> StateVariableCatalog:
    return StateVariableCatalog(tuple((n, tuple(v)) for n, v in pairs))
