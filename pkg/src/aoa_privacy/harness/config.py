"""Scenario configuration: TOML in, validated dataclasses out.

Every key is optional; omitted keys take the defaults below, which describe
the 40 m x 30 m four-AP room used for the trend experiment. Unknown keys are
rejected so a typo never silently falls back to a default. The full schema
with defaults is in ``docs/config.md`` and ``configs/room.toml``.
"""
from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ..attacker import ProfileGrid
from ..defender import MODES, ObfuscationPolicy
from ..errors import ConfigError
from ..geometry import ApPose, Environment, Reflector, room_walls, wall_center_aps
from ..phy import ArrayConfig, OfdmConfig

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "num_positions": 100,
    "snr_db": 20.0,
    "angle_error_std_deg": 0.0,
    "range_sigma": 0.0,
    "policies": ["none", "nulling", "beam_delay", "mirage"],
    "out": "results",
    "jobs": 1,
    "room": {
        "width": 40.0,
        "height": 30.0,
        "wall_gamma": 1.0,
        "max_order": 1,
        "position_margin": 1.0,
        "aps": "wall_centers",
        "reflectors": [
            {"start": [8.0, 9.0], "end": [14.0, 9.0], "gamma": 0.7},
            {"start": [26.0, 21.0], "end": [32.0, 21.0], "gamma": 0.7},
            {"start": [10.0, 18.0], "end": [10.0, 24.0], "gamma": 0.7},
            {"start": [30.0, 6.0], "end": [30.0, 12.0], "gamma": 0.7},
        ],
    },
    "array": {"num_antennas": 4, "spacing": 0.026},
    "ofdm": {"center_frequency": 5.18e9, "bandwidth": 20e6, "num_subcarriers": 52},
    "sfo": {"span": None},
    "policy": {
        "d_obf": None,
        "margin": 5.0,
        "combine_rule": "projection",
        "normalization": "average",
    },
    "attacker": {
        "num_paths": "true",
        "eig_ratio": 0.01,
        "sub_antennas": 2,
        "sub_subcarriers": None,
        "peak_threshold_db": -10.0,
        "floor": 1e-5,
        "anchor": True,
        "anchor_guard": 5.0,
        "angle_step_deg": 1.0,
        "max_distance": 80.0,
        "distance_step": 0.25,
    },
}


@dataclass(frozen=True)
class AttackerConfig:
    num_paths: str | int = "true"
    eig_ratio: float = 0.01
    sub_antennas: int = 2
    sub_subcarriers: int | None = None
    peak_threshold_db: float = -10.0
    floor: float = 1e-5
    anchor: bool = True
    anchor_guard: float = 5.0
    grid: ProfileGrid = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ScenarioConfig:
    environment: Environment
    array: ArrayConfig
    ofdm: OfdmConfig
    policies: tuple[str, ...]
    policy: ObfuscationPolicy
    attacker: AttackerConfig
    num_positions: int = 100
    snr_db: float = 20.0
    angle_error_std: float = 0.0
    range_sigma: float = 0.0
    sfo_span: float | None = None
    max_order: int = 1
    position_margin: float = 1.0
    seed: int = 0
    out: str = "results"
    jobs: int = 1
    resolved: dict | None = None

    def policy_for(self, mode: str) -> ObfuscationPolicy:
        p = self.policy
        return ObfuscationPolicy(mode, p.d_obf, p.margin, p.combine_rule, p.normalization)


def _merge(defaults: dict, given: dict, where: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{where}.{key}" if where else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a table")
            out[key] = _merge(defaults[key], value, path)
        else:
            out[key] = value
    return out


def _check_reflector_table(table: dict, i: int) -> Reflector:
    allowed = {"start", "end", "gamma"}
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)} in room.reflectors[{i}]")
    try:
        return Reflector(tuple(map(float, table["start"])), tuple(map(float, table["end"])),
                         float(table.get("gamma", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"room.reflectors[{i}] is missing {exc.args[0]!r}") from None


def _aps(spec, width: float, height: float) -> list[ApPose]:
    if spec == "wall_centers":
        return wall_center_aps(width, height)
    if not isinstance(spec, list) or not spec:
        raise ConfigError("room.aps must be 'wall_centers' or a list of {position, orientation_deg}")
    poses = []
    for i, table in enumerate(spec):
        extra = set(table) - {"position", "orientation_deg"}
        if extra or "position" not in table:
            raise ConfigError(f"room.aps[{i}] needs 'position' and optional 'orientation_deg'")
        poses.append(ApPose(tuple(map(float, table["position"])),
                            math.radians(float(table.get("orientation_deg", 0.0)))))
    return poses


def build_config(raw: dict | None = None, **overrides) -> ScenarioConfig:
    """Validate a raw (TOML-shaped) mapping and build the typed config.

    ``overrides`` replace top-level keys after merging, as the CLI flags do.
    """
    data = _merge(DEFAULTS, raw or {})
    for key, value in overrides.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown override {key!r}")
        if value is not None:
            data[key] = value

    if int(data["num_positions"]) < 1:
        raise ConfigError("num_positions must be >= 1")
    if int(data["jobs"]) < 1:
        raise ConfigError("jobs must be >= 1")
    policies = list(data["policies"])
    for mode in policies:
        if mode not in MODES:
            raise ConfigError(f"unknown policy {mode!r}; choose from {MODES}")
    if "none" not in policies:
        policies.insert(0, "none")  # baseline is always present
    policies = sorted(set(policies), key=MODES.index)
    data["policies"] = policies

    room = data["room"]
    width, height = float(room["width"]), float(room["height"])
    if not (width > 0 and height > 0):
        raise ConfigError("room width and height must be positive")
    reflectors = room_walls(width, height, float(room["wall_gamma"]))
    reflectors += [_check_reflector_table(t, i) for i, t in enumerate(room["reflectors"])]
    env = Environment(width, height, tuple(reflectors), tuple(_aps(room["aps"], width, height)),
                      int(data["seed"]))
    if len(env.ap_poses) < 1:
        raise ConfigError("at least one AP is required")
    if int(room["max_order"]) < 0:
        raise ConfigError("room.max_order must be >= 0")
    margin = float(room["position_margin"])
    if not 0 <= margin < min(width, height) / 2:
        raise ConfigError("room.position_margin must leave a non-empty placement area")

    array = ArrayConfig(int(data["array"]["num_antennas"]), float(data["array"]["spacing"]))
    o = data["ofdm"]
    ofdm = OfdmConfig(float(o["center_frequency"]), float(o["bandwidth"]), int(o["num_subcarriers"]))

    p = data["policy"]
    policy = ObfuscationPolicy("none", None if p["d_obf"] is None else float(p["d_obf"]),
                               float(p["margin"]), p["combine_rule"], p["normalization"])

    a = data["attacker"]
    num_paths = a["num_paths"]
    if not (num_paths in ("true", "auto") or (isinstance(num_paths, int) and num_paths >= 1)):
        raise ConfigError("attacker.num_paths must be 'true', 'auto' or a positive integer")
    if not 1 <= int(a["sub_antennas"]) <= array.num_antennas:
        raise ConfigError("attacker.sub_antennas must lie in [1, num_antennas]")
    grid = ProfileGrid.from_steps(float(a["angle_step_deg"]), float(a["max_distance"]),
                                  float(a["distance_step"]))
    try:
        grid.validate_for(ofdm)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    attacker = AttackerConfig(
        num_paths, float(a["eig_ratio"]), int(a["sub_antennas"]),
        None if a["sub_subcarriers"] is None else int(a["sub_subcarriers"]),
        float(a["peak_threshold_db"]), float(a["floor"]), bool(a["anchor"]),
        float(a["anchor_guard"]), grid,
    )
    span = data["sfo"]["span"]
    if span is not None and not 0 <= float(span) <= ofdm.alias_distance:
        raise ConfigError("sfo.span must lie in [0, alias distance]")
    snr = float(data["snr_db"])
    if math.isnan(snr):
        raise ConfigError("snr_db is NaN")

    return ScenarioConfig(
        environment=env, array=array, ofdm=ofdm, policies=tuple(policies), policy=policy,
        attacker=attacker, num_positions=int(data["num_positions"]), snr_db=snr,
        angle_error_std=math.radians(float(data["angle_error_std_deg"])),
        range_sigma=float(data["range_sigma"]),
        sfo_span=None if span is None else float(span),
        max_order=int(room["max_order"]), position_margin=margin, seed=int(data["seed"]),
        out=str(data["out"]), jobs=int(data["jobs"]), resolved=data,
    )


def load_config(path, **overrides) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return build_config(raw, **overrides)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot write {type(value).__name__} as TOML")


def dump_resolved(data: dict) -> str:
    """Resolved config as TOML; absent optional values are written as comments."""
    lines: list[str] = []

    def table(prefix: str, mapping: dict):
        scalars = [(k, v) for k, v in mapping.items()
                   if not isinstance(v, dict) and not (isinstance(v, list) and v and isinstance(v[0], dict))]
        for k, v in scalars:
            if v is None:
                lines.append(f"# {k} = (unset)")
            else:
                lines.append(f"{k} = {_toml_value(v)}")
        for k, v in mapping.items():
            name = f"{prefix}.{k}" if prefix else k
            if isinstance(v, dict):
                lines.append("")
                lines.append(f"[{name}]")
                table(name, v)
            elif isinstance(v, list) and v and isinstance(v[0], dict):
                for item in v:
                    lines.append("")
                    lines.append(f"[[{name}]]")
                    table(name, item)

    table("", data)
    return "\n".join(lines) + "\n"
