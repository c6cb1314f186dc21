"""Backend selection and array marshalling for the checker kernel.

The compiled ``_ckernel`` is used when it was built and
``TRAJCHECK_PURE_PYTHON`` is not set to a true value; otherwise the
reference ``_pykernel`` runs. Both fill the same output arrays:

``hard_f[P, 4, 3]``  bound, actual, slack of the most restrictive hard check
``hard_i[P, 4, 3]``  obstacle row (-1 if none), leaf, unrecoverable flag
``adv_i[N, L, 4, 2]`` first failing point (-1 if none), unrecoverable flag
``adv_f[N, L, 4, 2]`` bound, actual at that point
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _pykernel
from ._layout import pack_params
from .config import CheckerConfig
from .policy import FlatPolicy
from .world import ObstacleState, Trajectory

N_KINDS = 4


def _want_pure() -> bool:
    return os.environ.get("TRAJCHECK_PURE_PYTHON", "").strip().lower() in ("1", "true", "yes")


try:
    from . import _ckernel
except ImportError:
    _ckernel = None

COMPILED_AVAILABLE = _ckernel is not None
BACKEND = "python" if _ckernel is None or _want_pure() else "cython"


def backend_module(name: str | None = None):
    name = name or BACKEND
    if name == "cython":
        if _ckernel is None:
            raise RuntimeError("compiled kernel is not available")
        return _ckernel
    if name == "python":
        return _pykernel
    raise ValueError(f"unknown backend {name!r}")


@dataclass
class KernelOutput:
    hard_f: np.ndarray
    hard_i: np.ndarray
    adv_i: np.ndarray
    adv_f: np.ndarray


def obstacle_array(obstacles: Sequence[ObstacleState]) -> np.ndarray:
    arr = np.empty((len(obstacles), 7), dtype=np.float64)
    for j, o in enumerate(obstacles):
        arr[j] = (o.x, o.y, o.heading, o.v_long, o.v_lat, o.length, o.width)
    return arr


def point_array(traj: Trajectory) -> np.ndarray:
    return np.array([p.as_tuple() for p in traj.points], dtype=np.float64).reshape(-1, 8)


def run_kernel(points: np.ndarray, obstacles: np.ndarray, params: np.ndarray,
               flat: FlatPolicy, backend: str | None = None) -> KernelOutput:
    n_pts, n_obs, n_leaves = len(points), len(obstacles), len(flat.leaf_hard)
    hard_f = np.zeros((n_pts, N_KINDS, 3), dtype=np.float64)
    hard_f[:, :, 2] = np.inf
    hard_i = np.zeros((n_pts, N_KINDS, 3), dtype=np.int32)
    hard_i[:, :, 0] = -1
    adv_i = np.zeros((n_obs, n_leaves, N_KINDS, 2), dtype=np.int32)
    adv_i[..., 0] = -1
    adv_f = np.zeros((n_obs, n_leaves, N_KINDS, 2), dtype=np.float64)
    backend_module(backend).run(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(obstacles, dtype=np.float64),
        np.ascontiguousarray(params, dtype=np.float64),
        flat.node_var, flat.node_start, flat.children,
        flat.leaf_hard, flat.leaf_advisory, int(flat.root),
        hard_f, hard_i, adv_i, adv_f)
    return KernelOutput(hard_f, hard_i, adv_i, adv_f)


def check_trajectory(traj: Trajectory, obstacles: Sequence[ObstacleState], cfg: CheckerConfig,
                     flat: FlatPolicy, backend: str | None = None) -> KernelOutput:
    return run_kernel(point_array(traj), obstacle_array(obstacles), pack_params(cfg),
                      flat, backend)
