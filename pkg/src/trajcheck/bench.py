"""Latency benchmark of ``check_frame`` across obstacle, horizon and trajectory counts."""
from __future__ import annotations

import csv
import gc
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from . import kernel
from .checker import check_frame
from .config import CheckerConfig, defaults
from .policy import PolicyTree
from .world import ObstacleState, Trajectory, TrajectoryPoint, WorldFrame

POINT_SPACING = 0.1
MAX_GRID_CALLS = 2_000_000
CSV_FIELDS = ("obstacles", "horizon_s", "n_trajectories", "median_us", "p95_us", "max_us")


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    obstacles: Tuple[int, ...] = tuple(range(1, 31))
    horizons: Tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    trajectories: Tuple[int, ...] = tuple(range(1, 11))
    repetitions: int = 100
    warmup: int = 10
    # the trajectory-count sweep holds these fixed
    sweep_obstacles: int = 5
    sweep_horizon: float = 5.0
    seed: int = 7

    def __post_init__(self):
        if not self.obstacles or not self.horizons or not self.trajectories:
            raise BenchError("grid axes must be non-empty")
        if any(n < 0 for n in self.obstacles) or self.sweep_obstacles < 0:
            raise BenchError("obstacle counts must be >= 0")
        if any(h < POINT_SPACING or h > 5.0 for h in self.horizons + (self.sweep_horizon,)):
            raise BenchError(f"horizons must lie in [{POINT_SPACING}, 5] s")
        if any(m < 1 for m in self.trajectories):
            raise BenchError("trajectory counts must be >= 1")
        if self.repetitions < 1 or self.warmup < 0:
            raise BenchError("repetitions must be >= 1 and warmup >= 0")
        if len(self.cells()) * (self.repetitions + self.warmup) > MAX_GRID_CALLS:
            raise BenchError("benchmark grid too large")

    def cells(self) -> List[Tuple[int, float, int]]:
        cells = [(n, h, 1) for h in self.horizons for n in self.obstacles]
        cells += [(self.sweep_obstacles, self.sweep_horizon, m) for m in self.trajectories]
        seen, out = set(), []
        for c in cells:
            if c not in seen:
                seen.add(c)
                out.append(c)
        return out


@dataclass(frozen=True)
class BenchRow:
    obstacles: int
    horizon_s: float
    n_trajectories: int
    median_us: float
    p95_us: float
    max_us: float


def synthetic_frame(n_obstacles: int, horizon: float, n_trajectories: int = 1,
                    seed: int = 7, config: Optional[CheckerConfig] = None) -> WorldFrame:
    """Ego in lane 1 at 20 m/s among obstacles spread over every lane."""
    cfg = config or defaults()
    road = cfg.road
    rng = np.random.default_rng(seed)
    ego_y = road.lane_center(1)
    obstacles = []
    for j in range(n_obstacles):
        lane = j % road.lane_count
        obstacles.append(ObstacleState(
            j + 1, float(rng.uniform(-60.0, 160.0)),
            road.lane_center(lane) + float(rng.uniform(-0.3, 0.3)), 0.0,
            float(rng.uniform(10.0, 30.0)), float(rng.uniform(-0.5, 0.5))))
    n_pts = int(round(horizon / POINT_SPACING)) + 1
    trajs = []
    for m in range(n_trajectories):
        decel = 0.5 * m  # candidate m brakes at 0.5*m m/s^2
        lat = (-0.3, 0.0, 0.3)[m % 3]
        pts = []
        for k in range(n_pts):
            t = round(k * POINT_SPACING, 9)
            v = max(20.0 - decel * t, 0.0)
            x = 20.0 * t - 0.5 * decel * t * t if v > 0.0 else 200.0 / decel
            pts.append(TrajectoryPoint(t, x, ego_y + lat * t, math.atan2(lat, max(v, 1e-3)),
                                       v, lat, -decel if v > 0.0 else 0.0, 0.0))
        trajs.append(Trajectory(m, tuple(pts)))
    ego = ObstacleState(0, 0.0, ego_y, 0.0, 20.0, 0.0)
    return WorldFrame(0, 0.0, ego, tuple(obstacles), tuple(trajs))


def _summary(samples: np.ndarray) -> Tuple[float, float, float]:
    return (float(np.median(samples)), float(np.percentile(samples, 95)), float(samples.max()))


def time_cell(frame: WorldFrame, policy: PolicyTree, config: CheckerConfig, repetitions: int,
              warmup: int, backend: Optional[str] = None) -> Tuple[float, float, float]:
    """Median, p95 and max of the ``check_frame`` call in microseconds."""
    for _ in range(warmup):
        check_frame(frame, policy, config, backend)
    samples = np.empty(repetitions, dtype=np.float64)
    clock = time.perf_counter_ns
    with _gc_paused():
        for i in range(repetitions):
            start = clock()
            check_frame(frame, policy, config, backend)
            samples[i] = (clock() - start) / 1000.0
    return _summary(samples)


@contextmanager
def _gc_paused():
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def run_bench(bc: BenchConfig, policy: PolicyTree, config: Optional[CheckerConfig] = None,
              backend: Optional[str] = None, progress=None) -> List[BenchRow]:
    """Time every cell of the grid.

    Repetitions are interleaved: each round times every cell once, in a
    seeded shuffled order, so slow drift of the machine affects all cells
    alike instead of bending the latency curves.
    """
    cfg = config or defaults()
    cells = bc.cells()
    frames = [synthetic_frame(n, h, m, bc.seed, cfg) for n, h, m in cells]
    for frame in frames:
        for _ in range(bc.warmup):
            check_frame(frame, policy, cfg, backend)
    samples = np.empty((len(cells), bc.repetitions), dtype=np.float64)
    rng = np.random.default_rng(bc.seed)
    clock = time.perf_counter_ns
    with _gc_paused():
        for rep in range(bc.repetitions):
            for c in rng.permutation(len(cells)).tolist():
                frame = frames[c]
                start = clock()
                check_frame(frame, policy, cfg, backend)
                samples[c, rep] = (clock() - start) / 1000.0
            if progress:
                progress(rep + 1, bc.repetitions)
    return [BenchRow(n, h, m, *_summary(samples[c])) for c, (n, h, m) in enumerate(cells)]


def write_csv(rows: Iterable[BenchRow], out: TextIO, backend: Optional[str] = None) -> None:
    out.write(f"# point_spacing_s={POINT_SPACING}\n")
    out.write(f"# backend={backend or kernel.BACKEND}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow((r.obstacles, f"{r.horizon_s:g}", r.n_trajectories, f"{r.median_us:.3f}",
                    f"{r.p95_us:.3f}", f"{r.max_us:.3f}"))


def read_csv(stream: TextIO) -> List[BenchRow]:
    lines = [ln for ln in stream if not ln.startswith("#")]
    return [BenchRow(int(r["obstacles"]), float(r["horizon_s"]), int(r["n_trajectories"]),
                     float(r["median_us"]), float(r["p95_us"]), float(r["max_us"]))
            for r in csv.DictReader(lines)]


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float, float]:
    """Least-squares ``y = slope*x + intercept``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) < 2:
        raise BenchError("need at least two points for a fit")
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return float(slope), float(intercept), r2


def obstacle_fits(rows: Iterable[BenchRow]) -> Dict[float, Tuple[float, float, float]]:
    """Fit of median latency against obstacle count for each single-trajectory horizon."""
    by_h: Dict[float, List[BenchRow]] = {}
    for r in rows:
        if r.n_trajectories == 1:
            by_h.setdefault(r.horizon_s, []).append(r)
    return {h: linear_fit([r.obstacles for r in rs], [r.median_us for r in rs])
            for h, rs in sorted(by_h.items()) if len({r.obstacles for r in rs}) >= 2}


def gnuplot_script(csv_path: str) -> str:
    return "\n".join([
        "set datafile separator ','",
        "set key left top",
        "set xlabel 'number of obstacles'",
        "set ylabel 'median latency (us)'",
        f"plot for [h in '1 2 3 4 5'] '{csv_path}' using "
        "(($2==h+0 && $3==1) ? $1 : 1/0):4 skip 3 with linespoints title sprintf('%s s', h)",
        "",
    ])
