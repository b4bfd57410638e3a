"""Scenario configuration: a single human-readable YAML file with explicit
units in the key names (unit bugs are the dominant failure mode in dynamics
configs), plus the sweep axes consumed by the batch runner.

Parsing then serializing a config is idempotent; unknown keys are rejected
with a path diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import yaml

from .core import Color, GainsConfig, LimitsConfig, SignalSchedule
from .hdv import IdmParams
from .sim import IntersectionTopology, LeaderAccelPolicy

SWEEP_AXES = ("phi_per_s", "cav_fraction", "gain_triples")


class ConfigError(ValueError):
    """Malformed scenario file; message carries the offending key path."""


@dataclass
class SweepSpec:
    axis: str
    values: List  # floats, or [kappa_rear, kappa_cross, kappa_virtual] triples

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep.values must be nonempty")


@dataclass
class ScenarioConfig:
    limits: LimitsConfig = field(default_factory=LimitsConfig)
    gains: GainsConfig = field(default_factory=GainsConfig)
    idm: IdmParams = field(default_factory=IdmParams)
    topology: IntersectionTopology = field(default_factory=IntersectionTopology)
    green_s: float = 15.0
    red_s: float = 15.0
    offsets_s: List[float] = field(default_factory=lambda: [0.0, 15.0, 0.0, 15.0])
    arrival_rate_vph: float = 5000.0
    cav_fraction: float = 0.4
    right_turn_fraction: float = 0.2
    spawn_speed_mps: float = 12.0
    leader_accel_policy: LeaderAccelPolicy = LeaderAccelPolicy.CONSTANT
    dt_s: float = 0.05
    duration_s: float = 60.0
    spawn_until_s: Optional[float] = None
    drain: bool = False
    max_time_s: float = 600.0
    seeds: List[int] = field(default_factory=lambda: [0])
    sweep: Optional[SweepSpec] = None

    def __post_init__(self):
        if self.duration_s < 0:
            raise ConfigError("run.duration_s must be nonnegative")
        if not self.seeds:
            raise ConfigError("run.seeds must be nonempty")
        if len(self.offsets_s) != self.topology.n_approaches:
            raise ConfigError("signal.offsets_s needs one entry per approach")

    def schedules(self) -> List[SignalSchedule]:
        phases = ((Color.GREEN, self.green_s), (Color.RED, self.red_s))
        return [SignalSchedule(phases, off) for off in self.offsets_s]


def _take(section: dict, path: str, key: str, default, cast):
    if key in section:
        raw = section.pop(key)
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.{key}: {exc}") from None
    return default


def _close_section(section: dict, path: str):
    if section:
        raise ConfigError(f"unknown key(s) under {path}: {sorted(section)}")


def from_dict(data: dict) -> ScenarioConfig:
    data = dict(data or {})
    defaults = ScenarioConfig()

    sec = dict(data.pop("limits", {}))
    limits = LimitsConfig(
        u_max=_take(sec, "limits", "u_max_mps2", defaults.limits.u_max, float),
        v_max=_take(sec, "limits", "v_max_mps", defaults.limits.v_max, float),
        v_des=_take(sec, "limits", "v_des_mps", defaults.limits.v_des, float),
        gamma=_take(sec, "limits", "standstill_gap_m", defaults.limits.gamma, float),
    )
    _close_section(sec, "limits")

    sec = dict(data.pop("gains", {}))
    gains = GainsConfig(
        phi=_take(sec, "gains", "phi_per_s", defaults.gains.phi, float),
        kappa_s=_take(sec, "gains", "kappa_speed_per_s", defaults.gains.kappa_s, float),
        kappa_T=_take(sec, "gains", "kappa_cross_per_s", defaults.gains.kappa_T, float),
        kappa_R=_take(sec, "gains", "kappa_rear_per_s", defaults.gains.kappa_R, float),
        kappa_imag=_take(sec, "gains", "kappa_virtual_per_s", defaults.gains.kappa_imag, float),
        tau_s=_take(sec, "gains", "merge_margin_s", defaults.gains.tau_s, float),
    )
    _close_section(sec, "gains")

    sec = dict(data.pop("idm", {}))
    idm = IdmParams(
        v_des=_take(sec, "idm", "v_des_mps", defaults.idm.v_des, float),
        xi=_take(sec, "idm", "exponent", defaults.idm.xi, float),
        T_headway=_take(sec, "idm", "time_headway_s", defaults.idm.T_headway, float),
        beta=_take(sec, "idm", "comfort_decel_mps2", defaults.idm.beta, float),
        gamma=limits.gamma,
    )
    _close_section(sec, "idm")

    sec = dict(data.pop("topology", {}))
    topo = IntersectionTopology(
        region_length=_take(sec, "topology", "region_length_m",
                            defaults.topology.region_length, float),
        exit_length=_take(sec, "topology", "exit_length_m",
                          defaults.topology.exit_length, float),
        conflict_offset=_take(sec, "topology", "conflict_offset_m",
                              defaults.topology.conflict_offset, float),
        turn_path_length=_take(sec, "topology", "turn_path_length_m",
                               defaults.topology.turn_path_length, float),
        sensing_range=_take(sec, "topology", "sensing_range_m",
                            defaults.topology.sensing_range, float),
        stop_standoff=_take(sec, "topology", "stop_standoff_m",
                            defaults.topology.stop_standoff, float),
    )
    _close_section(sec, "topology")

    sec = dict(data.pop("signal", {}))
    green_s = _take(sec, "signal", "green_s", defaults.green_s, float)
    red_s = _take(sec, "signal", "red_s", defaults.red_s, float)
    offsets = _take(sec, "signal", "offsets_s", list(defaults.offsets_s),
                    lambda v: [float(x) for x in v])
    _close_section(sec, "signal")

    sec = dict(data.pop("traffic", {}))
    rate = _take(sec, "traffic", "arrival_rate_vph", defaults.arrival_rate_vph, float)
    cav_fraction = _take(sec, "traffic", "cav_fraction", defaults.cav_fraction, float)
    right_fraction = _take(sec, "traffic", "right_turn_fraction",
                           defaults.right_turn_fraction, float)
    spawn_speed = _take(sec, "traffic", "spawn_speed_mps", defaults.spawn_speed_mps, float)
    _close_section(sec, "traffic")

    sec = dict(data.pop("run", {}))
    dt = _take(sec, "run", "dt_s", defaults.dt_s, float)
    duration = _take(sec, "run", "duration_s", defaults.duration_s, float)
    spawn_until = _take(sec, "run", "spawn_until_s", None,
                        lambda v: None if v is None else float(v))
    drain = _take(sec, "run", "drain", defaults.drain, bool)
    max_time = _take(sec, "run", "max_time_s", defaults.max_time_s, float)
    seeds = _take(sec, "run", "seeds", list(defaults.seeds),
                  lambda v: [int(x) for x in v])
    _close_section(sec, "run")

    policy_raw = data.pop("leader_accel_policy", defaults.leader_accel_policy.value)
    try:
        policy = LeaderAccelPolicy(policy_raw)
    except ValueError:
        raise ConfigError(f"leader_accel_policy: unknown value {policy_raw!r}") from None

    sweep = None
    if "sweep" in data:
        sec = dict(data.pop("sweep") or {})
        axis = _take(sec, "sweep", "axis", None, str)
        values = _take(sec, "sweep", "values", None, list)
        _close_section(sec, "sweep")
        if axis is None or values is None:
            raise ConfigError("sweep requires both axis and values")
        sweep = SweepSpec(axis, values)

    _close_section(data, "<root>")
    return ScenarioConfig(
        limits=limits, gains=gains, idm=idm, topology=topo,
        green_s=green_s, red_s=red_s, offsets_s=offsets,
        arrival_rate_vph=rate, cav_fraction=cav_fraction,
        right_turn_fraction=right_fraction, spawn_speed_mps=spawn_speed,
        leader_accel_policy=policy, dt_s=dt, duration_s=duration,
        spawn_until_s=spawn_until, drain=drain, max_time_s=max_time,
        seeds=seeds, sweep=sweep,
    )


def to_dict(cfg: ScenarioConfig) -> dict:
    out: Dict[str, object] = {
        "limits": {
            "u_max_mps2": cfg.limits.u_max,
            "v_max_mps": cfg.limits.v_max,
            "v_des_mps": cfg.limits.v_des,
            "standstill_gap_m": cfg.limits.gamma,
        },
        "gains": {
            "phi_per_s": cfg.gains.phi,
            "kappa_speed_per_s": cfg.gains.kappa_s,
            "kappa_cross_per_s": cfg.gains.kappa_T,
            "kappa_rear_per_s": cfg.gains.kappa_R,
            "kappa_virtual_per_s": cfg.gains.kappa_imag,
            "merge_margin_s": cfg.gains.tau_s,
        },
        "idm": {
            "v_des_mps": cfg.idm.v_des,
            "exponent": cfg.idm.xi,
            "time_headway_s": cfg.idm.T_headway,
            "comfort_decel_mps2": cfg.idm.beta,
        },
        "topology": {
            "region_length_m": cfg.topology.region_length,
            "exit_length_m": cfg.topology.exit_length,
            "conflict_offset_m": cfg.topology.conflict_offset,
            "turn_path_length_m": cfg.topology.turn_path_length,
            "sensing_range_m": cfg.topology.sensing_range,
            "stop_standoff_m": cfg.topology.stop_standoff,
        },
        "signal": {
            "green_s": cfg.green_s,
            "red_s": cfg.red_s,
            "offsets_s": list(cfg.offsets_s),
        },
        "traffic": {
            "arrival_rate_vph": cfg.arrival_rate_vph,
            "cav_fraction": cfg.cav_fraction,
            "right_turn_fraction": cfg.right_turn_fraction,
            "spawn_speed_mps": cfg.spawn_speed_mps,
        },
        "run": {
            "dt_s": cfg.dt_s,
            "duration_s": cfg.duration_s,
            "spawn_until_s": cfg.spawn_until_s,
            "drain": cfg.drain,
            "max_time_s": cfg.max_time_s,
            "seeds": list(cfg.seeds),
        },
        "leader_accel_policy": cfg.leader_accel_policy.value,
    }
    if cfg.sweep is not None:
        out["sweep"] = {"axis": cfg.sweep.axis, "values": list(cfg.sweep.values)}
    return out


def load(path: str) -> ScenarioConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data)


def save(cfg: ScenarioConfig, path: str):
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=False)
