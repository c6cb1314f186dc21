"""Frame-level safety assessment of candidate trajectories.

Every (point, obstacle) pair is evaluated twice:

* on the obstacle's constant-velocity extrapolation, where the policy's hard
  kinds become hard violations when the point fails the bound, keeping the
  most restrictive obstacle per kind;
* on the worst-case envelope, where any failing kind of the reached leaf
  becomes an advisory prediction, reported once per obstacle, rule set and
  kind at the earliest point it occurs.
"""
from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import kernel
from ._layout import pack_params
from .config import CheckerConfig, defaults
from .dsl import ConstraintKind
from .monitor import BUILTIN_CATALOG
from .policy import CatalogMismatchError, PolicyTree
from .world import Trajectory, WorldFrame

HARD = "hard_violation"
ADVISORY = "advisory_prediction"
UNRECOVERABLE_RULE = "unrecoverable"

_SEVERITY_ORDER = {HARD: 0, ADVISORY: 1}


class MalformedTrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    trajectory_id: int
    point_index: int
    time_offset: float
    kind: ConstraintKind
    severity: str
    required: float
    actual: float
    obstacle_id: int
    rule_names: Tuple[str, ...]

    @property
    def hard(self) -> bool:
        return self.severity == HARD

    @property
    def unrecoverable(self) -> bool:
        return UNRECOVERABLE_RULE in self.rule_names

    def sort_key(self):
        return (self.point_index, self.obstacle_id, int(self.kind), _SEVERITY_ORDER[self.severity],
                self.rule_names)


@dataclass(frozen=True)
class TrajectoryAssessment:
    trajectory_id: int
    violations: Tuple[Violation, ...] = ()

    @property
    def hard_violations(self) -> Tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.hard)

    @property
    def advisories(self) -> Tuple[Violation, ...]:
        return tuple(v for v in self.violations if not v.hard)

    @property
    def earliest_hard_violation_offset(self) -> Optional[float]:
        offsets = [v.time_offset for v in self.violations if v.hard]
        return min(offsets) if offsets else None


@dataclass(frozen=True)
class Assessment:
    frame_id: int
    trajectories: Tuple[TrajectoryAssessment, ...] = ()
    points_checked: int = 0
    obstacle_count: int = 0
    # wall time of check_frame; excluded from equality so repeated runs compare equal
    elapsed_s: float = field(default=0.0, compare=False)

    def trajectory(self, trajectory_id: int) -> TrajectoryAssessment:
        for ta in self.trajectories:
            if ta.trajectory_id == trajectory_id:
                return ta
        raise KeyError(f"no trajectory with id {trajectory_id}")

    @property
    def violations(self) -> Tuple[Violation, ...]:
        return tuple(v for ta in self.trajectories for v in ta.violations)

    @property
    def hard_count(self) -> int:
        return sum(len(ta.hard_violations) for ta in self.trajectories)

    def canonical_bytes(self) -> bytes:
        """Stable encoding of everything except the timing field."""
        out = [struct.pack("<qHqi", self.frame_id, len(self.trajectories),
                           self.points_checked, self.obstacle_count)]
        for ta in self.trajectories:
            out.append(struct.pack("<qI", ta.trajectory_id, len(ta.violations)))
            for v in ta.violations:
                names = "\x1f".join(v.rule_names).encode("utf-8")
                out.append(struct.pack("<qidBBddqI", v.trajectory_id, v.point_index,
                                       v.time_offset, int(v.kind), _SEVERITY_ORDER[v.severity],
                                       v.required, v.actual, v.obstacle_id, len(names)))
                out.append(names)
        return b"".join(out)


def earliest_violation(assessment: Assessment, trajectory_id: int) -> Optional[float]:
    """Offset in seconds of the first hard violation, or ``None`` when clean."""
    return assessment.trajectory(trajectory_id).earliest_hard_violation_offset


def _validate(traj: Trajectory, cfg: CheckerConfig) -> None:
    if not traj.points:
        raise MalformedTrajectoryError(f"trajectory {traj.id} has no points")
    if traj.points[-1].t > cfg.max_horizon + 1e-9:
        raise MalformedTrajectoryError(
            f"trajectory {traj.id} spans {traj.points[-1].t} s, beyond {cfg.max_horizon} s")
    prev = -math.inf
    for p in traj.points:
        if not p.t > prev:
            raise MalformedTrajectoryError(f"trajectory {traj.id} times are not increasing")
        prev = p.t


def _assess(traj: Trajectory, frame: WorldFrame, policy: PolicyTree, out: kernel.KernelOutput
            ) -> TrajectoryAssessment:
    obstacles = frame.obstacles
    leaves = policy.leaves
    points = traj.points
    found: List[Violation] = []

    rows, kinds = np.nonzero((out.hard_i[:, :, 0] >= 0) & (out.hard_f[:, :, 2] < 0.0))
    for i, k in zip(rows.tolist(), kinds.tolist()):
        bound, actual, _ = out.hard_f[i, k].tolist()
        j, leaf, unrec = out.hard_i[i, k].tolist()
        kind = ConstraintKind(k)
        names = leaves[leaf].rules_for(kind, hard=True)
        if unrec:
            names = names + (UNRECOVERABLE_RULE,)
        found.append(Violation(traj.id, i, points[i].t, kind, HARD, bound, actual,
                               obstacles[j].id, names))

    earliest: Dict[tuple, Violation] = {}
    for j, leaf, k in zip(*(a.tolist() for a in np.nonzero(out.adv_i[..., 0] >= 0))):
        i, unrec = out.adv_i[j, leaf, k].tolist()
        bound, actual = out.adv_f[j, leaf, k].tolist()
        kind = ConstraintKind(k)
        names = leaves[leaf].rules_for(kind, hard=True) + leaves[leaf].rules_for(kind, hard=False)
        if unrec:
            names = names + (UNRECOVERABLE_RULE,)
        key = (j, k, names)
        prev = earliest.get(key)
        if prev is None or i < prev.point_index:
            earliest[key] = Violation(traj.id, i, points[i].t, kind, ADVISORY, bound, actual,
                                      obstacles[j].id, names)
    found.extend(earliest.values())
    found.sort(key=Violation.sort_key)
    return TrajectoryAssessment(traj.id, tuple(found))


def check_frame(frame: WorldFrame, policy: PolicyTree, config: Optional[CheckerConfig] = None,
                backend: Optional[str] = None) -> Assessment:
    """Assess every candidate trajectory of ``frame`` against ``policy``."""
    start = time.perf_counter_ns()
    cfg = config or defaults()
    if policy.catalog_digest != BUILTIN_CATALOG.digest():
        raise CatalogMismatchError("policy was compiled against a different state catalog")
    for traj in frame.trajectories:
        _validate(traj, cfg)
    flat = policy.flat
    params = pack_params(cfg)
    obs = kernel.obstacle_array(frame.obstacles)
    results = []
    n_points = 0
    for traj in frame.trajectories:
        n_points += len(traj.points)
        out = kernel.run_kernel(kernel.point_array(traj), obs, params, flat, backend)
        results.append(_assess(traj, frame, policy, out))
    elapsed = (time.perf_counter_ns() - start) * 1e-9
    return Assessment(frame.frame_id, tuple(results), n_points, len(frame.obstacles), elapsed)
