"""Checker configuration: every tunable physical parameter lives here.

Files are INI-style::

    [ego]
    a_brake_min = 4.0

    [checker]
    zone_factor = 1.5

Unknown sections or keys are rejected so that a misspelled limit can never
be silently ignored.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

from .world import AssumptionSet, InvalidWorldError, RoadModel


class ConfigError(ValueError):
    pass


def default_ego_assumptions() -> AssumptionSet:
    # a_brake_min is the braking the ego commits to; a_brake_max its physical limit
    return AssumptionSet(v_long_min=0.0, v_long_max=40.0, v_lat_min=-3.0, v_lat_max=3.0,
                         a_accel_max=2.0, a_brake_max=8.0, response_time=0.1,
                         a_brake_min=4.0)


def default_guest_assumptions() -> AssumptionSet:
    return AssumptionSet(v_long_min=0.0, v_long_max=40.0, v_lat_min=-3.0, v_lat_max=3.0,
                         a_accel_max=3.0, a_brake_max=8.0, response_time=0.1,
                         a_brake_min=4.0)


@dataclass(frozen=True)
class CheckerConfig:
    road: RoadModel = field(default_factory=RoadModel)
    ego: AssumptionSet = field(default_factory=default_ego_assumptions)
    guest: AssumptionSet = field(default_factory=default_guest_assumptions)
    ego_length: float = 4.5
    ego_width: float = 1.8
    zone_factor: float = 1.5
    lat_margin: float = 0.2
    accel_limit: float = 0.0
    lat_speed_limit: float = 0.5
    frame_period: float = 0.1
    max_horizon: float = 5.0

    def __post_init__(self):
        validate(self)

    @property
    def ego_max_brake(self) -> float:
        return self.ego.a_brake_max


_CHECKER_KEYS = ("ego_length", "ego_width", "zone_factor", "lat_margin", "accel_limit",
                 "lat_speed_limit", "frame_period", "max_horizon")
_ASSUMPTION_KEYS = tuple(f.name for f in dataclasses.fields(AssumptionSet))


def validate(cfg: CheckerConfig) -> None:
    for key in _CHECKER_KEYS:
        value = getattr(cfg, key)
        if not math.isfinite(value):
            raise ConfigError(f"checker.{key} must be finite")
    for key in ("ego_length", "ego_width", "lat_margin", "frame_period", "max_horizon"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"checker.{key} must be positive")
    if cfg.lat_speed_limit < 0:
        raise ConfigError("checker.lat_speed_limit must be >= 0")
    if not cfg.zone_factor > 1.0:
        raise ConfigError(f"checker.zone_factor must be > 1, got {cfg.zone_factor}")
    if cfg.ego.a_brake_min > cfg.ego.a_brake_max:
        raise ConfigError("ego.a_brake_min must not exceed ego.a_brake_max")


def defaults() -> CheckerConfig:
    return CheckerConfig()


def _as_float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: not a number: {raw!r}") from None


def loads(text: str, source: str = "<string>") -> CheckerConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    base = defaults()
    road_kw: Dict[str, object] = {}
    assume_kw: Dict[str, Dict[str, float]] = {"ego": {}, "guest": {}}
    checker_kw: Dict[str, float] = {}
    for section in parser.sections():
        items = parser.items(section)
        if section == "road":
            for key, raw in items:
                if key == "lane_count":
                    try:
                        road_kw[key] = int(raw)
                    except ValueError:
                        raise ConfigError(f"road.lane_count: not an integer: {raw!r}") from None
                elif key == "lane_width":
                    road_kw[key] = _as_float(section, key, raw)
                else:
                    raise ConfigError(f"{source}: unknown key road.{key}")
        elif section in assume_kw:
            for key, raw in items:
                if key not in _ASSUMPTION_KEYS:
                    raise ConfigError(f"{source}: unknown key {section}.{key}")
                assume_kw[section][key] = _as_float(section, key, raw)
        elif section == "checker":
            for key, raw in items:
                if key not in _CHECKER_KEYS:
                    raise ConfigError(f"{source}: unknown key checker.{key}")
                checker_kw[key] = _as_float(section, key, raw)
        else:
            raise ConfigError(f"{source}: unknown section [{section}]")

    try:
        road = dataclasses.replace(base.road, **road_kw)
        ego = dataclasses.replace(base.ego, **assume_kw["ego"])
        guest = dataclasses.replace(base.guest, **assume_kw["guest"])
    except InvalidWorldError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return dataclasses.replace(base, road=road, ego=ego, guest=guest, **checker_kw)


def load(path: Union[str, Path]) -> CheckerConfig:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), source=str(path))


def dumps(cfg: CheckerConfig) -> str:
    out = io.StringIO()
    out.write("[road]\n")
    out.write(f"lane_count = {cfg.road.lane_count}\n")
    out.write(f"lane_width = {cfg.road.lane_width!r}\n")
    for name in ("ego", "guest"):
        assume = getattr(cfg, name)
        out.write(f"\n[{name}]\n")
        for key in _ASSUMPTION_KEYS:
            out.write(f"{key} = {getattr(assume, key)!r}\n")
    out.write("\n[checker]\n")
    for key in _CHECKER_KEYS:
        out.write(f"{key} = {getattr(cfg, key)!r}\n")
    return out.getvalue()


def save(cfg: CheckerConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")
