"""Deterministic straight-road scenarios, simulation and trace output.

Scenario files are INI-style::

    [scenario]
    name = cut_in_1
    family = cut_in
    duration = 12.0
    seed = 1

    [parameters]
    trigger_gap = 10

    [ego]
    lane = 2
    x = 0.0
    v = 20.0

    [guest 1]
    lane = 3
    x = 24.5
    v = 18.0
    script =
        lane_change to=2 lat_speed=1.5 lat_accel=2.0 when gap(ego) < 10

Script lines run in order; each is armed once the previous one has fired.
Triggers are ``at <t>`` or ``when gap(<ego|id>) < <m>``; a line without a
trigger fires as soon as it is armed. A ``[traffic]`` section adds seeded
background vehicles.

Vehicles advance in 1 ms substeps. Frames are emitted every 100 ms and
contain the guests, the ego state and the ego's candidate trajectories.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .checker import HARD, Assessment, check_frame
from .config import CheckerConfig, defaults
from .dsl import ConstraintKind
from .policy import PolicyTree
from .world import ObstacleState, RoadModel, Trajectory, TrajectoryPoint, WorldFrame

FAMILIES = ("cut_in", "cut_out", "traffic_jam", "lane_change_obstacle", "double_cut_in")
MANEUVERS = ("cruise", "lane_change", "brake", "accelerate")

SUBSTEP = 0.001
SUBSTEPS_PER_FRAME = 100
FRAME_PERIOD = SUBSTEP * SUBSTEPS_PER_FRAME
CANDIDATE_HORIZON = 5.0
CANDIDATE_SPACING = 0.1

SCENARIO_DIR = Path(__file__).with_name("data") / "scenarios"


class ScenarioError(ValueError):
    pass


# ------------------------------------------------------------------ spec

@dataclass(frozen=True)
class Trigger:
    kind: str                 # "now", "time" or "gap"
    value: float = 0.0
    ref: Optional[int] = None  # gap reference vehicle; 0 is the ego


@dataclass(frozen=True)
class Maneuver:
    kind: str
    params: Tuple[Tuple[str, float], ...] = ()
    trigger: Trigger = Trigger("now")

    def param(self, name: str, default: Optional[float] = None) -> float:
        for k, v in self.params:
            if k == name:
                return v
        if default is None:
            raise ScenarioError(f"{self.kind} needs {name}=")
        return default


@dataclass(frozen=True)
class GuestBehavior:
    maneuvers: Tuple[Maneuver, ...] = ()


@dataclass(frozen=True)
class VehicleSpec:
    id: int
    lane: int
    x: float
    v: float
    length: float = 4.5
    width: float = 1.8
    behavior: GuestBehavior = GuestBehavior()


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    family: str
    duration: float
    seed: int
    ego: VehicleSpec
    guests: Tuple[VehicleSpec, ...]
    parameters: Tuple[Tuple[str, float], ...] = ()
    candidates: Tuple[str, ...] = ("keep",)
    road: RoadModel = field(default_factory=RoadModel)

    @property
    def frame_count(self) -> int:
        return int(round(self.duration / FRAME_PERIOD)) + 1

    def parameter(self, name: str) -> float:
        return dict(self.parameters)[name]


_LINE = re.compile(
    r"^(?P<kind>[a-z_]+)(?P<args>(?:\s+[a-z_]+=[-+0-9.eE]+)*)\s*"
    r"(?:at\s+(?P<at>[0-9.]+)|when\s+gap\((?P<ref>ego|\d+)\)\s*<\s*(?P<gap>[0-9.]+))?\s*$")


def parse_script_line(line: str) -> Maneuver:
    m = _LINE.match(line.strip())
    if not m:
        raise ScenarioError(f"cannot parse script line {line.strip()!r}")
    kind = m["kind"]
    if kind not in MANEUVERS:
        raise ScenarioError(f"unknown maneuver {kind!r}")
    params = []
    for arg in m["args"].split():
        key, _, raw = arg.partition("=")
        params.append((key, float(raw)))
    if m["at"] is not None:
        trig = Trigger("time", float(m["at"]))
    elif m["gap"] is not None:
        trig = Trigger("gap", float(m["gap"]), 0 if m["ref"] == "ego" else int(m["ref"]))
    else:
        trig = Trigger("now")
    return Maneuver(kind, tuple(params), trig)


def _vehicle(section: configparser.SectionProxy, vid: int) -> VehicleSpec:
    known = {"lane", "x", "v", "length", "width", "script"}
    extra = set(section) - known
    if extra:
        raise ScenarioError(f"[{section.name}]: unknown keys {sorted(extra)}")
    try:
        script = [ln for ln in section.get("script", "").splitlines() if ln.strip()]
        return VehicleSpec(
            id=vid, lane=section.getint("lane"), x=section.getfloat("x"),
            v=section.getfloat("v"), length=section.getfloat("length", 4.5),
            width=section.getfloat("width", 1.8),
            behavior=GuestBehavior(tuple(parse_script_line(ln) for ln in script)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"[{section.name}]: {exc}") from None


def _traffic(section: configparser.SectionProxy, seed: int, first_id: int,
             explicit: Sequence[VehicleSpec]) -> List[VehicleSpec]:
    lanes = [int(s) for s in section.get("lanes").split(",")]
    speeds = [float(s) for s in section.get("speeds").split(",")]
    if len(speeds) != len(lanes):
        raise ScenarioError("[traffic]: one speed per lane required")
    count = section.getint("count")
    spacing = section.getfloat("spacing", 15.0)
    x_start = section.getfloat("x_start", -60.0)
    jitter = section.getfloat("jitter", 1.0)
    rng = np.random.default_rng(seed)
    out: List[VehicleSpec] = []
    slot = 0
    while len(out) < count:
        lane_idx = slot % len(lanes)
        x = x_start + (slot // len(lanes)) * spacing + float(rng.uniform(-jitter, jitter))
        slot += 1
        lane = lanes[lane_idx]
        if any(g.lane == lane and abs(g.x - x) < spacing for g in explicit):
            continue
        out.append(VehicleSpec(first_id + len(out), lane, x, speeds[lane_idx]))
        if slot > 10 * count + 100:
            raise ScenarioError("[traffic]: cannot place vehicles")
    return out


def loads(text: str, source: str = "<string>") -> ScenarioSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    if "scenario" not in cp or "ego" not in cp:
        raise ScenarioError(f"{source}: [scenario] and [ego] sections are required")
    sc = cp["scenario"]
    try:
        name = sc.get("name", Path(source).stem)
        family = sc.get("family")
        duration = sc.getfloat("duration")
        seed = sc.getint("seed", 0)
        candidates = tuple(c for c in sc.get("candidates", "keep").split() if c)
    except ValueError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    params = tuple((k, float(v)) for k, v in cp["parameters"].items()) if "parameters" in cp else ()
    ego = _vehicle(cp["ego"], 0)
    guests: List[VehicleSpec] = []
    for sec in cp.sections():
        m = re.fullmatch(r"guest\s+(\d+)", sec)
        if m:
            guests.append(_vehicle(cp[sec], int(m[1])))
        elif sec not in ("scenario", "parameters", "ego", "traffic"):
            raise ScenarioError(f"{source}: unknown section [{sec}]")
    if "traffic" in cp:
        first = max((g.id for g in guests), default=0) + 1
        guests.extend(_traffic(cp["traffic"], seed, first, guests))
    spec = ScenarioSpec(name, family, duration, seed, ego, tuple(guests), params, candidates)
    validate(spec)
    return spec


def load(path: Union[str, Path]) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    return loads(text, str(path))


def resolve(name_or_path: Union[str, Path]) -> Path:
    """Accept a path or the bare name of a shipped scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = SCENARIO_DIR / (p.name if p.suffix == ".scn" else p.name + ".scn")
    if shipped.exists():
        return shipped
    raise ScenarioError(f"no scenario {str(name_or_path)!r}")


def shipped_scenarios() -> List[ScenarioSpec]:
    return [load(p) for p in sorted(SCENARIO_DIR.glob("*.scn"))]


_FAMILY_GUESTS = {"cut_in": (1, 1), "cut_out": (2, 2), "traffic_jam": (30, 30),
                  "lane_change_obstacle": (1, 10), "double_cut_in": (2, 2)}
_FAMILY_RANGES = {"cut_in": {"trigger_gap": (5.0, 50.0)},
                  "cut_out": {"reveal_gap": (5.0, 60.0)},
                  "traffic_jam": {"trigger_gap": (5.0, 40.0)},
                  "lane_change_obstacle": {"obstacle_gap": (20.0, 150.0)},
                  "double_cut_in": {"trigger_time": (0.5, 10.0)}}


def validate(spec: ScenarioSpec, config: Optional[CheckerConfig] = None) -> None:
    """Structural checks plus guest behavior inside the guest assumptions."""
    cfg = config or defaults()
    g = cfg.guest
    if spec.family not in FAMILIES:
        raise ScenarioError(f"{spec.name}: unknown family {spec.family!r}")
    lo, hi = _FAMILY_GUESTS[spec.family]
    if not lo <= len(spec.guests) <= hi:
        raise ScenarioError(f"{spec.name}: {spec.family} needs {lo}..{hi} guests, "
                            f"got {len(spec.guests)}")
    params = dict(spec.parameters)
    for key, (a, b) in _FAMILY_RANGES[spec.family].items():
        if key not in params:
            raise ScenarioError(f"{spec.name}: parameter {key} is required")
        if not a <= params[key] <= b:
            raise ScenarioError(f"{spec.name}: {key}={params[key]} outside [{a}, {b}]")
    if not 0.0 < spec.duration <= 120.0:
        raise ScenarioError(f"{spec.name}: duration must be in (0, 120]")
    if abs(spec.duration / FRAME_PERIOD - round(spec.duration / FRAME_PERIOD)) > 1e-9:
        raise ScenarioError(f"{spec.name}: duration must be a multiple of {FRAME_PERIOD} s")
    for c in spec.candidates:
        if c != "keep" and not re.fullmatch(r"brake:[0-9.]+", c):
            raise ScenarioError(f"{spec.name}: unknown candidate {c!r}")
    ids = [v.id for v in spec.guests]
    if len(set(ids)) != len(ids) or 0 in ids:
        raise ScenarioError(f"{spec.name}: guest ids must be unique and non-zero")
    for v in (spec.ego,) + spec.guests:
        who = "ego" if v.id == 0 else f"guest {v.id}"
        if not 0 <= v.lane < spec.road.lane_count:
            raise ScenarioError(f"{spec.name}: {who} lane {v.lane} off-road")
        if not g.v_long_min <= v.v <= g.v_long_max:
            raise ScenarioError(f"{spec.name}: {who} speed {v.v} outside guest assumptions")
        for man in v.behavior.maneuvers:
            if v.id == 0 and (man.kind != "lane_change" or man.trigger.kind == "gap"):
                raise ScenarioError(f"{spec.name}: ego scripts allow only timed lane changes")
            if man.trigger.kind == "gap" and man.trigger.ref not in [0] + ids:
                raise ScenarioError(f"{spec.name}: {who} refers to unknown vehicle")
            if man.kind == "lane_change":
                to = int(man.param("to"))
                if not 0 <= to < spec.road.lane_count:
                    raise ScenarioError(f"{spec.name}: {who} lane change to lane {to}")
                speed = man.param("lat_speed", 1.5)
                if not 0.0 < speed <= min(-g.v_lat_min, g.v_lat_max):
                    raise ScenarioError(f"{spec.name}: {who} lat_speed {speed} out of range")
                if not man.param("lat_accel", 2.0) > 0.0:
                    raise ScenarioError(f"{spec.name}: {who} lat_accel must be positive")
            elif man.kind == "brake":
                if not 0.0 < man.param("decel") <= g.a_brake_max:
                    raise ScenarioError(f"{spec.name}: {who} decel out of range")
                if not g.v_long_min <= man.param("until", 0.0) <= g.v_long_max:
                    raise ScenarioError(f"{spec.name}: {who} brake target out of range")
            elif man.kind == "accelerate":
                if not 0.0 < man.param("accel") <= g.a_accel_max:
                    raise ScenarioError(f"{spec.name}: {who} accel out of range")
                if not g.v_long_min <= man.param("until") <= g.v_long_max:
                    raise ScenarioError(f"{spec.name}: {who} speed target out of range")


# -------------------------------------------------------------- dynamics

@dataclass(frozen=True)
class LateralProfile:
    """Rest-to-rest trapezoidal lateral move starting at ``t0``."""

    t0: float
    y0: float
    y1: float
    speed: float
    accel: float

    @property
    def _shape(self) -> Tuple[float, float, float]:
        dist = abs(self.y1 - self.y0)
        if dist >= self.speed * self.speed / self.accel:
            t_acc = self.speed / self.accel
            return t_acc, (dist - self.speed * t_acc) / self.speed, self.speed
        t_acc = math.sqrt(dist / self.accel)
        return t_acc, 0.0, self.accel * t_acc

    @property
    def end(self) -> float:
        t_acc, t_cruise, _ = self._shape
        return self.t0 + 2 * t_acc + t_cruise

    def at(self, t: float) -> Tuple[float, float, float]:
        """Lateral position, speed and acceleration at absolute time ``t``."""
        sign = 1.0 if self.y1 >= self.y0 else -1.0
        t_acc, t_cruise, peak = self._shape
        a = self.accel
        s = t - self.t0
        if s <= 0.0:
            return self.y0, 0.0, 0.0
        if s < t_acc:
            return self.y0 + sign * 0.5 * a * s * s, sign * a * s, sign * a
        d_acc = 0.5 * a * t_acc * t_acc
        if s < t_acc + t_cruise:
            return self.y0 + sign * (d_acc + peak * (s - t_acc)), sign * peak, 0.0
        r = s - t_acc - t_cruise
        if r < t_acc:
            d = d_acc + peak * t_cruise + peak * r - 0.5 * a * r * r
            return self.y0 + sign * d, sign * (peak - a * r), -sign * a
        return self.y1, 0.0, 0.0


class _Vehicle:
    __slots__ = ("id", "x", "y", "v", "v_lat", "a_long", "length", "width", "script",
                 "next", "accel", "v_goal", "lateral")

    def __init__(self, vs: VehicleSpec, road: RoadModel):
        self.id = vs.id
        self.x = vs.x
        self.y = road.lane_center(vs.lane)
        self.v = vs.v
        self.v_lat = 0.0
        self.a_long = 0.0
        self.length = vs.length
        self.width = vs.width
        self.script = vs.behavior.maneuvers
        self.next = 0
        self.accel = 0.0
        self.v_goal = vs.v
        self.lateral: Optional[LateralProfile] = None

    def state(self) -> ObstacleState:
        heading = math.atan2(self.v_lat, self.v) if (self.v or self.v_lat) else 0.0
        return ObstacleState(self.id, self.x, self.y, heading, self.v, self.v_lat,
                             self.length, self.width)

    def gap_to(self, other: "_Vehicle") -> float:
        return abs(other.x - self.x) - 0.5 * (self.length + other.length)


def _overlap(a: _Vehicle, b: _Vehicle) -> bool:
    return (abs(a.x - b.x) < 0.5 * (a.length + b.length)
            and abs(a.y - b.y) < 0.5 * (a.width + b.width))


class Simulator:
    """Stateful 1 ms simulation of one scenario."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.road = spec.road
        self.ego = _Vehicle(spec.ego, spec.road)
        self.guests = [_Vehicle(g, spec.road) for g in spec.guests]
        self._by_id = {0: self.ego, **{g.id: g for g in self.guests}}
        self.steps = 0
        self.collisions: List[Tuple[float, int]] = []
        self._touching: set = set()

    @property
    def t(self) -> float:
        return self.steps * SUBSTEP

    @property
    def frame_index(self) -> int:
        return self.steps // SUBSTEPS_PER_FRAME

    def _fire(self, veh: _Vehicle, t: float) -> None:
        while veh.next < len(veh.script):
            man = veh.script[veh.next]
            trig = man.trigger
            if trig.kind == "time" and t < trig.value - 1e-9:
                return
            if trig.kind == "gap" and not veh.gap_to(self._by_id[trig.ref]) < trig.value:
                return
            if man.kind == "lane_change":
                if veh.lateral is not None:
                    return
                target = self.road.lane_center(int(man.param("to")))
                veh.lateral = LateralProfile(t, veh.y, target, man.param("lat_speed", 1.5),
                                             man.param("lat_accel", 2.0))
            elif man.kind == "brake":
                veh.accel = -man.param("decel")
                veh.v_goal = man.param("until", 0.0)
            elif man.kind == "accelerate":
                veh.accel = man.param("accel")
                veh.v_goal = man.param("until")
            else:
                veh.accel = 0.0
            veh.next += 1

    @staticmethod
    def _longitudinal(veh: _Vehicle, accel: float, floor: float, ceil: float) -> None:
        v0 = veh.v
        if accel == 0.0 or (accel < 0.0 and v0 <= floor) or (accel > 0.0 and v0 >= ceil):
            veh.x += v0 * SUBSTEP
            veh.a_long = 0.0
            return
        v1 = v0 + accel * SUBSTEP
        goal = floor if accel < 0.0 else ceil
        if (accel < 0.0 and v1 < goal) or (accel > 0.0 and v1 > goal):
            t_hit = (goal - v0) / accel
            veh.x += v0 * t_hit + 0.5 * accel * t_hit * t_hit + goal * (SUBSTEP - t_hit)
            veh.v = goal
        else:
            veh.x += v0 * SUBSTEP + 0.5 * accel * SUBSTEP * SUBSTEP
            veh.v = v1
        veh.a_long = accel

    def _substep(self, ego_brake: float) -> None:
        t = self.t
        for veh in [self.ego] + self.guests:
            self._fire(veh, t)
        t1 = (self.steps + 1) * SUBSTEP
        for veh in [self.ego] + self.guests:
            if veh is self.ego and ego_brake > 0.0:
                self._longitudinal(veh, -ego_brake, 0.0, math.inf)
            elif veh.accel < 0.0:
                self._longitudinal(veh, veh.accel, veh.v_goal, math.inf)
            else:
                self._longitudinal(veh, veh.accel, 0.0, veh.v_goal)
            if veh.lateral is not None:
                veh.y, veh.v_lat, _ = veh.lateral.at(t1)
                if t1 >= veh.lateral.end:
                    veh.y, veh.v_lat = veh.lateral.y1, 0.0
                    veh.lateral = None
        self.steps += 1
        for g in self.guests:
            if _overlap(self.ego, g):
                if g.id not in self._touching:
                    self.collisions.append((self.t, g.id))
                    self._touching.add(g.id)
            else:
                self._touching.discard(g.id)

    def advance(self, ego_brake: float = 0.0) -> None:
        """Simulate one frame period with constant ego braking ``ego_brake``."""
        for _ in range(SUBSTEPS_PER_FRAME):
            self._substep(ego_brake)

    def _ego_lateral_plan(self) -> List[LateralProfile]:
        plan = [self.ego.lateral] if self.ego.lateral is not None else []
        t_free = plan[0].end if plan else self.t
        y = plan[0].y1 if plan else self.ego.y
        for man in self.ego.script[self.ego.next:]:
            start = max(t_free, man.trigger.value if man.trigger.kind == "time" else self.t)
            target = self.road.lane_center(int(man.param("to")))
            prof = LateralProfile(start, y, target, man.param("lat_speed", 1.5),
                                  man.param("lat_accel", 2.0))
            plan.append(prof)
            t_free, y = prof.end, target
        return plan

    def candidates(self) -> Tuple[Trajectory, ...]:
        """Ego candidate trajectories: constant speed, plus configured braking profiles."""
        ego = self.ego
        plan = self._ego_lateral_plan()
        n = int(round(CANDIDATE_HORIZON / CANDIDATE_SPACING)) + 1
        lateral = []
        for k in range(n):
            tau = round(k * CANDIDATE_SPACING, 9)
            ta = self.t + tau
            y, v_lat, a_lat = ego.y, ego.v_lat, 0.0
            for prof in plan:
                if ta >= prof.t0 or prof is plan[0]:
                    y, v_lat, a_lat = prof.at(ta)
            lateral.append((tau, y, v_lat, a_lat))
        out = []
        for cid, kind in enumerate(self.spec.candidates):
            decel = 0.0 if kind == "keep" else float(kind.split(":")[1])
            pts = []
            for tau, y, v_lat, a_lat in lateral:
                if decel > 0.0 and ego.v > 0.0:
                    t_stop = ego.v / decel
                    s = min(tau, t_stop)
                    v = ego.v - decel * s
                    x = ego.x + ego.v * s - 0.5 * decel * s * s
                    a = -decel if tau < t_stop else 0.0
                else:
                    v, x, a = ego.v, ego.x + ego.v * tau, 0.0
                heading = math.atan2(v_lat, v) if (v or v_lat) else 0.0
                pts.append(TrajectoryPoint(tau, x, y, heading, v, v_lat, a, a_lat))
            out.append(Trajectory(cid, tuple(pts)))
        return tuple(out)

    def frame(self) -> WorldFrame:
        return WorldFrame(self.frame_index, round(self.t, 9), self.ego.state(),
                          tuple(g.state() for g in self.guests), self.candidates())


def step(spec: ScenarioSpec, t: float) -> WorldFrame:
    """World frame of ``spec`` at time ``t`` (open loop)."""
    k = round(t / FRAME_PERIOD)
    if not 0.0 <= t <= spec.duration + 1e-9 or abs(t - k * FRAME_PERIOD) > 1e-9:
        raise ScenarioError(f"t={t} is not on the {FRAME_PERIOD} s grid within [0, {spec.duration}]")
    sim = Simulator(spec)
    for _ in range(k):
        sim.advance()
    return sim.frame()


# ----------------------------------------------------------------- runs

@dataclass
class FrameRecord:
    frame: WorldFrame
    assessment: Assessment
    applied_brake: float  # ego braking during the interval following this frame

    @property
    def t(self) -> float:
        return self.frame.timestamp


@dataclass
class ScenarioTrace:
    spec: ScenarioSpec
    closed_loop: bool
    frames: List[FrameRecord]
    collisions: List[Tuple[float, int]]

    @property
    def collided(self) -> bool:
        return bool(self.collisions)


def commanded_brake(assessment: Assessment, trajectory_id: int = 0) -> float:
    """Most restrictive MIN_BRAKE bound among the trajectory's hard violations."""
    best = 0.0
    for v in assessment.trajectory(trajectory_id).violations:
        if v.severity == HARD and v.kind == ConstraintKind.MIN_BRAKE and v.required > best:
            best = v.required
    return best


def run(spec: ScenarioSpec, policy: PolicyTree, config: Optional[CheckerConfig] = None,
        closed_loop: bool = False, backend: Optional[str] = None) -> ScenarioTrace:
    """Replay every frame through the checker.

    In closed loop the ego applies the braking commanded by frame ``k`` during
    the interval after frame ``k + 1``; otherwise it follows its script.
    """
    cfg = config or defaults()
    sim = Simulator(spec)
    records: List[FrameRecord] = []
    pending = 0.0
    for k in range(spec.frame_count):
        frame = sim.frame()
        assessment = check_frame(frame, policy, cfg, backend)
        applied = pending if closed_loop else 0.0
        records.append(FrameRecord(frame, assessment, applied))
        pending = commanded_brake(assessment) if closed_loop else 0.0
        if k + 1 < spec.frame_count:
            sim.advance(applied)
    return ScenarioTrace(spec, closed_loop, records, list(sim.collisions))


# --------------------------------------------------------------- output

CSV_FIELDS = ("frame", "t", "trajectory", "point_index", "time_offset", "obstacle", "kind",
              "severity", "required", "actual", "rules")


def write_csv(trace: ScenarioTrace, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rec in trace.frames:
        for v in rec.assessment.violations:
            w.writerow((rec.frame.frame_id, f"{rec.t:.1f}", v.trajectory_id, v.point_index,
                        f"{v.time_offset:.1f}", v.obstacle_id, v.kind.name, v.severity,
                        repr(v.required), repr(v.actual), ";".join(v.rule_names)))


def _finite(x: float):
    return x if math.isfinite(x) else str(x)


def write_jsonl(trace: ScenarioTrace, out: TextIO) -> None:
    for rec in trace.frames:
        ego = rec.frame.ego_state
        row = {
            "frame": rec.frame.frame_id, "t": rec.t, "applied_brake": rec.applied_brake,
            "ego": {"x": ego.x, "y": ego.y, "v_long": ego.v_long, "v_lat": ego.v_lat},
            "guests": [{"id": o.id, "x": o.x, "y": o.y, "v_long": o.v_long, "v_lat": o.v_lat}
                       for o in rec.frame.obstacles],
            "violations": [{"trajectory": v.trajectory_id, "point": v.point_index,
                            "offset": v.time_offset, "obstacle": v.obstacle_id,
                            "kind": v.kind.name, "severity": v.severity,
                            "required": _finite(v.required), "actual": _finite(v.actual),
                            "rules": list(v.rule_names)}
                           for v in rec.assessment.violations],
        }
        out.write(json.dumps(row, sort_keys=True) + "\n")
    out.write(json.dumps({"collisions": [{"t": t, "guest": g} for t, g in trace.collisions]})
              + "\n")


def summarize(trace: ScenarioTrace) -> Dict[str, object]:
    hard = sum(rec.assessment.hard_count for rec in trace.frames)
    first = next((rec.t for rec in trace.frames if rec.assessment.hard_count), None)
    return {"scenario": trace.spec.name, "closed_loop": trace.closed_loop,
            "frames": len(trace.frames), "hard_violations": hard,
            "first_hard_frame_t": first, "collisions": len(trace.collisions)}


def iter_hard(trace: ScenarioTrace) -> Iterable[Tuple[FrameRecord, object]]:
    for rec in trace.frames:
        for v in rec.assessment.violations:
            if v.severity == HARD:
                yield rec, v
