"""Flat parameter vector shared by both checker kernels.

Index  Meaning
-----  -------------------------------------------
0      road lane count
1      road lane width
2      ego length
3      ego width
4      zone factor
5      lateral margin
6      MAX_ACCEL bound
7      MAX_LAT_SPEED bound
8-11   ego: response time, a_accel_max, a_brake_min, a_brake_max
12-19  guest: v_long_min, v_long_max, v_lat_min, v_lat_max,
       a_accel_max, a_brake_max, a_brake_min, response time
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .config import CheckerConfig
from .world import AssumptionSet, RoadModel

N_PARAMS = 20


def pack_params(cfg: CheckerConfig) -> np.ndarray:
    e, g = cfg.ego, cfg.guest
    return np.array([
        cfg.road.lane_count, cfg.road.lane_width, cfg.ego_length, cfg.ego_width,
        cfg.zone_factor, cfg.lat_margin, cfg.accel_limit, cfg.lat_speed_limit,
        e.response_time, e.a_accel_max, e.a_brake_min, e.a_brake_max,
        g.v_long_min, g.v_long_max, g.v_lat_min, g.v_lat_max,
        g.a_accel_max, g.a_brake_max, g.a_brake_min, g.response_time,
    ], dtype=np.float64)


@lru_cache(maxsize=8)
def _unpack(raw: bytes) -> CheckerConfig:
    p = np.frombuffer(raw, dtype=np.float64).tolist()
    ego = AssumptionSet(response_time=p[8], a_accel_max=p[9], a_brake_min=p[10],
                        a_brake_max=p[11])
    guest = AssumptionSet(v_long_min=p[12], v_long_max=p[13], v_lat_min=p[14],
                          v_lat_max=p[15], a_accel_max=p[16], a_brake_max=p[17],
                          a_brake_min=p[18], response_time=p[19])
    return CheckerConfig(road=RoadModel(int(p[0]), p[1]), ego=ego, guest=guest,
                         ego_length=p[2], ego_width=p[3], zone_factor=p[4],
                         lat_margin=p[5], accel_limit=p[6], lat_speed_limit=p[7])


def unpack_params(params: np.ndarray) -> CheckerConfig:
    """Rebuild the subset of the configuration the kernels read."""
    return _unpack(np.ascontiguousarray(params, dtype=np.float64).tobytes())
