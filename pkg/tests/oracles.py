"""Independent reference implementations used as test oracles.

Nothing here calls into the closed-form kinematics or the policy compiler;
each oracle reaches its answer by simulation or brute-force enumeration.
"""
from __future__ import annotations

import itertools
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from trajcheck.dsl import ConstraintKind, RuleModel, evaluate_condition

STEP = 1e-3


# ------------------------------------------------------------ kinematics

def integrate_extremal(x0: float, v0: float, accel: float, v_floor: float, v_ceil: float,
                       steps: int, h: float = STEP) -> Tuple[float, float]:
    """Integrate one constant-control policy with velocity saturation.

    Positions use the step-average velocity, so the only error comes from the
    single step in which the velocity saturates (at most ``|a| h^2 / 8``).
    """
    x, v = x0, v0
    for _ in range(steps):
        nv = min(max(v + accel * h, v_floor), v_ceil)
        x += 0.5 * (v + nv) * h
        v = nv
    return x, v


def simulate_piecewise(x0: float, v0: float, controls: Sequence[Tuple[int, float]],
                       v_floor: float, v_ceil: float, h: float = STEP) -> List[Tuple[float, float]]:
    """Trajectory under piecewise-constant acceleration, one sample per step (plus start)."""
    out = [(x0, v0)]
    x, v = x0, v0
    for n, accel in controls:
        for _ in range(n):
            nv = min(max(v + accel * h, v_floor), v_ceil)
            x += 0.5 * (v + nv) * h
            v = nv
            out.append((x, v))
    return out


def _advance(x: np.ndarray, v: np.ndarray, a: np.ndarray, h: float):
    """Exact constant-acceleration step that stops at zero speed instead of reversing."""
    nv = v + a * h
    stopping = nv < 0.0
    safe_a = np.where(a == 0.0, 1.0, a)
    dx = np.where(stopping, -v * v / (2.0 * safe_a), 0.5 * (v + np.maximum(nv, 0.0)) * h)
    return x + dx, np.maximum(nv, 0.0)


def min_gap_braking(gap0, v_rear, v_front, response_ms, a_accel, brake_rear, brake_front,
                    h: float = STEP) -> np.ndarray:
    """Smallest bumper gap over a braking manoeuvre, sampled every ``h`` seconds.

    The front vehicle brakes with ``brake_front`` from t = 0. The rear
    vehicle accelerates with ``a_accel`` for ``response_ms`` steps and then
    brakes with ``brake_rear``. All arguments broadcast; the loop ends once
    the rear vehicle stands still, after which the gap can only grow.
    """
    gap0, v_rear, v_front, response_ms, a_accel, brake_rear, brake_front = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in
          (gap0, v_rear, v_front, response_ms, a_accel, brake_rear, brake_front)))
    xr = np.zeros_like(gap0)
    xf = gap0.copy()
    vr = v_rear.copy()
    vf = v_front.copy()
    low = gap0.copy()
    k = 0
    while True:
        ar = np.where(k < response_ms, a_accel, -brake_rear)
        xr, vr = _advance(xr, vr, ar, h)
        xf, vf = _advance(xf, vf, -brake_front, h)
        k += 1
        np.minimum(low, xf - xr, out=low)
        if k >= response_ms.max() and not vr.any():
            return low


CONTACT_TOL = 1e-6


def contact(gap0, v_rear, v_front, response_ms, a_accel, brake_rear, brake_front) -> np.ndarray:
    return min_gap_braking(gap0, v_rear, v_front, response_ms, a_accel, brake_rear,
                           brake_front) < -CONTACT_TOL


def bisect_braking(gap, v_rear, v_front, response_ms, a_accel, brake_front,
                   lo: float = 0.5, hi: float = 40.0, tol: float = 0.01) -> np.ndarray:
    """Smallest rear braking without contact, by bisection on the simulator."""
    gap = np.asarray(gap, dtype=np.float64)
    lo_a = np.full_like(gap, lo)
    hi_a = np.full_like(gap, hi)
    while (hi_a - lo_a).max() > tol:
        mid = 0.5 * (lo_a + hi_a)
        hit = contact(gap, v_rear, v_front, response_ms, a_accel, mid, brake_front)
        lo_a = np.where(hit, mid, lo_a)
        hi_a = np.where(hit, hi_a, mid)
    return hi_a


# ----------------------------------------------------- rule semantics

class BruteForceSemantics:
    """Rule-model semantics by enumerating action subsets.

    A set of hard rules is satisfiable when some mutex-free subset of the
    enabled actions contains at least one required action of every rule.
    Priority groups are processed from the highest priority: a rule that
    cannot join the rules already accepted is discarded, and a conflict is
    declared when a group has a rule with no enabled action or when the
    group's survivors cannot be satisfied together.
    """

    def __init__(self, model: RuleModel):
        self.model = model
        self.names = [a.name for a in model.actions]
        self.bit = {n: 1 << i for i, n in enumerate(self.names)}
        self.kind = {a.name: a.kind for a in model.actions}
        self.bad_pairs = set()
        for m in model.mutexes:
            for a, b in itertools.combinations(m.actions, 2):
                self.bad_pairs.add(frozenset((a, b)))
        self._free: Dict[int, List[int]] = {}

    def enabled(self, values: Dict[str, str]) -> Dict[str, bool]:
        return {a.name: evaluate_condition(a.precondition, values) for a in self.model.actions}

    def free_subsets(self, enabled_mask: int) -> List[int]:
        subs = self._free.get(enabled_mask)
        if subs is None:
            members = [n for n in self.names if enabled_mask & self.bit[n]]
            subs = []
            for r in range(len(members) + 1):
                for combo in itertools.combinations(members, r):
                    if not any(frozenset(p) in self.bad_pairs
                               for p in itertools.combinations(combo, 2)):
                        subs.append(sum(self.bit[n] for n in combo))
            self._free[enabled_mask] = subs
        return subs

    def req_mask(self, rule) -> int:
        return sum(self.bit[a] for a in rule.requirement)

    def satisfiable(self, rules, enabled_mask: int) -> bool:
        masks = [self.req_mask(r) for r in rules]
        return any(all(s & m for m in masks) for s in self.free_subsets(enabled_mask))

    def resolve(self, values: Dict[str, str]):
        """``(accepted rules, conflict flag)`` at one assignment."""
        en = self.enabled(values)
        enabled_mask = sum(self.bit[n] for n, ok in en.items() if ok)
        applicable = [r for r in self.model.rules
                      if r.severity == "hard" and evaluate_condition(r.condition, values)]
        accepted: list = []
        for prio in sorted({r.priority for r in applicable}):
            group = [r for r in applicable if r.priority == prio]
            if any(not (self.req_mask(r) & enabled_mask) for r in group):
                return accepted, True
            fits = [r for r in group if self.satisfiable(accepted + [r], enabled_mask)]
            if not self.satisfiable(accepted + fits, enabled_mask):
                return accepted, True
            accepted.extend(fits)
        return accepted, False

    def first_choice(self, rules, enabled: Dict[str, bool]) -> Optional[Tuple[str, ...]]:
        """Lexicographically first action vector (one action per rule, in rule order)."""
        for combo in itertools.product(*(r.requirement for r in rules)):
            if all(enabled[a] for a in combo) and not any(
                    frozenset((a, b)) in self.bad_pairs
                    for a, b in itertools.combinations(combo, 2)):
                return combo
        return None

    def decide(self, values: Dict[str, str]):
        """``(hard, advisory)`` in the same shape as a policy leaf, or ``None`` on conflict."""
        accepted, conflict = self.resolve(values)
        if conflict:
            return None
        en = self.enabled(values)
        chosen = self.first_choice(accepted, en)
        hard: Dict[ConstraintKind, List[str]] = {}
        for rule, action in zip(accepted, chosen):
            if self.kind[action] is not ConstraintKind.NONE:
                hard.setdefault(self.kind[action], []).append(rule.name)
        advisory: Dict[ConstraintKind, List[str]] = {}
        for rule in self.model.rules:
            if rule.severity != "advisory" or not evaluate_condition(rule.condition, values):
                continue
            for a in rule.requirement:
                if en[a]:
                    if self.kind[a] is not ConstraintKind.NONE:
                        advisory.setdefault(self.kind[a], []).append(rule.name)
                    break
        return (tuple((k, tuple(hard[k])) for k in sorted(hard)),
                tuple((k, tuple(advisory[k])) for k in sorted(advisory)))


def all_assignments(model: RuleModel):
    names = [n for n, _ in model.catalog]
    for combo in itertools.product(*(d for _, d in model.catalog)):
        yield dict(zip(names, combo))


# --------------------------------------------------- random rule models

KINDS = ("MIN_BRAKE", "MAX_ACCEL", "MAX_LAT_SPEED", "MIN_GAP", "NONE")


def _random_condition(rng: np.random.Generator, catalog, depth: int) -> str:
    roll = rng.random()
    if depth <= 0 or roll < 0.45:
        name, dom = catalog[rng.integers(len(catalog))]
        op = "==" if rng.random() < 0.75 else "!="
        return f"{name} {op} {dom[rng.integers(len(dom))]}"
    if roll < 0.55:
        return "true" if rng.random() < 0.7 else "false"
    if roll < 0.65:
        return f"not ({_random_condition(rng, catalog, depth - 1)})"
    op = " and " if roll < 0.85 else " or "
    parts = [_random_condition(rng, catalog, depth - 1) for _ in range(rng.integers(2, 4))]
    return "(" + op.join(parts) + ")"


def random_model_source(rng: np.random.Generator, max_states: int = 10_000,
                        mutex_rate: float = 0.5) -> str:
    while True:
        sizes = [int(rng.integers(2, 5)) for _ in range(rng.integers(1, 7))]
        if int(np.prod(sizes)) <= max_states:
            break
    catalog = [(f"v{i}", [f"s{i}_{j}" for j in range(d)]) for i, d in enumerate(sizes)]
    lines = [f"statevar {n} {{ {', '.join(d)} }}" for n, d in catalog]
    n_actions = int(rng.integers(1, 6))
    actions = [f"a{i}" for i in range(n_actions)]
    for a in actions:
        pre = "true" if rng.random() < 0.6 else _random_condition(rng, catalog, 1)
        lines.append(f"action {a} {{ pre: {pre}; kind: {KINDS[rng.integers(len(KINDS))]} }}")
    if n_actions >= 2:
        for _ in range(int(rng.integers(0, 3))):
            if rng.random() < mutex_rate:
                k = int(rng.integers(2, min(3, n_actions) + 1))
                members = rng.choice(actions, size=k, replace=False)
                lines.append(f"mutex {{ {', '.join(members)} }}")
    for i in range(int(rng.integers(0, 7))):
        prio = int(rng.integers(1, 4))
        sev = "hard" if rng.random() < 0.6 else "advisory"
        k = int(rng.integers(1, min(3, n_actions) + 1))
        req = " or ".join(rng.choice(actions, size=k, replace=False))
        cond = _random_condition(rng, catalog, 2)
        lines.append(f"rule r{i} priority {prio} severity {sev}: when {cond} require {req}")
    return "\n".join(lines) + "\n"


def oracle_envelope(x0: float, y0: float, v0: float, v_lat0: float, assume, steps: int,
                    h: float = STEP) -> Dict[str, float]:
    """Envelope bounds after ``steps`` steps from integrating the extremal policies."""
    v0 = min(max(v0, assume.v_long_min), assume.v_long_max)
    x_hi, v_hi = integrate_extremal(x0, v0, assume.a_accel_max, assume.v_long_min,
                                    assume.v_long_max, steps, h)
    x_lo, v_lo = integrate_extremal(x0, v0, -assume.a_brake_max, assume.v_long_min,
                                    assume.v_long_max, steps, h)
    if steps == 0:
        v_lat = min(max(v_lat0, assume.v_lat_min), assume.v_lat_max)
        y_lo = y_hi = y0
        vl_lo = vl_hi = v_lat
    else:
        y_lo = y_hi = y0
        for _ in range(steps):
            y_lo += assume.v_lat_min * h
            y_hi += assume.v_lat_max * h
        vl_lo, vl_hi = assume.v_lat_min, assume.v_lat_max
    return {"x_min": x_lo, "x_max": x_hi, "y_min": y_lo, "y_max": y_hi,
            "v_long_min": v_lo, "v_long_max": v_hi, "v_lat_min": vl_lo, "v_lat_max": vl_hi}


def random_envelope_case(rng: np.random.Generator):
    """Random (obstacle, assumption set, step count) drawn from a wide grid."""
    from trajcheck.world import AssumptionSet, ObstacleState

    v_min = float(rng.choice([0.0, 0.0, rng.uniform(0.0, 10.0)]))
    v_max = float(rng.uniform(v_min + 0.5, 45.0))
    lat_lo = float(rng.uniform(-4.0, 0.0))
    assume = AssumptionSet(v_long_min=v_min, v_long_max=v_max, v_lat_min=lat_lo,
                           v_lat_max=float(rng.uniform(0.0, 4.0)),
                           a_accel_max=float(rng.uniform(0.0, 5.0)),
                           a_brake_max=float(rng.uniform(0.5, 10.0)))
    obs = ObstacleState(1, float(rng.uniform(-100, 100)), float(rng.uniform(0, 14)), 0.0,
                        float(rng.uniform(v_min, v_max)), float(rng.uniform(-2, 2)))
    return obs, assume, int(rng.integers(0, 5001))
