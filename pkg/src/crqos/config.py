"""Experiment configuration: YAML loading, validation and the figure presets.

A config file is a YAML mapping; every key is optional. Example::

    name: my-run
    channels:
      - {n_states: 5, p_stay: 0.85, p_avail_to_busy: 0.05, p_busy_stay: 0.1}
    sensor: {epsilon: 0.6, kappa: 3.0, sigma: 0.1}
    rd: {ds0: 74, ds1: 124, eta: 1.4, a: 0.01, b: 1.0, efd: 100}
    horizon: 200
    seeds: 50
    methods: [oracle, belief_map, last_ack, constant_beta]
    sweep: {param: sensor.sigma, values: [0.05, 0.1, 0.2]}

Sweep parameters are dotted paths into the config; ``channels.*.x`` sets a
field on every channel.
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from crqos.belief_pomdp import SensedChannel
from crqos.markov_channel import ChannelModel, build_transition, default_gains, default_loss, stationary_distribution
from crqos.policy_sim import (
    SINGLE_CHANNEL_KINDS,
    Method,
    Scenario,
)
from crqos.rd_model import BetaGrid, RdParams
from crqos.sensing_obs import RocModel, operating_point_for_collision, sensor_for_epsilon


class ConfigError(Exception):
    kind = "config"


class ConfigFileNotFound(ConfigError):
    kind = "missing_file"


class ConfigParseError(ConfigError):
    kind = "parse"


class ConfigValidationError(ConfigError):
    kind = "validation"

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class SensorConfig:
    """Shared sensor settings. ``zeta``, when set, overrides ``epsilon``
    through the ROC inversion."""

    epsilon: float = 0.6
    zeta: float | None = None
    kappa: float = 3.0
    sigma: float = 0.1


@dataclass
class ChannelConfig:
    n_states: int = 5
    p_stay: float = 0.85
    p_avail_to_busy: float = 0.05
    p_busy_stay: float = 0.1
    gains: list | None = None
    loss: list | None = None
    bandwidth: float = 1e6
    slot: float = 0.01
    # per-channel sensor overrides
    epsilon: float | None = None
    zeta: float | None = None
    sigma: float | None = None


@dataclass
class SweepConfig:
    param: str
    values: list


@dataclass
class ExperimentConfig:
    name: str = "default"
    channels: list = field(default_factory=lambda: [ChannelConfig()])
    sensor: SensorConfig = field(default_factory=SensorConfig)
    rd: RdParams = field(default_factory=RdParams)
    horizon: int = 200
    seeds: int = 50
    seed_offset: int = 0
    methods: list | None = None
    sweep: SweepConfig | None = None
    grid_resolution: int | None = None
    penalty: float = 500.0
    beta_step: float = 0.01
    max_joint_points: int = 1_000_000

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def method_list(self) -> list:
        if self.methods is not None:
            return [Method.parse(m) for m in self.methods]
        if self.n_channels == 1:
            return [Method.parse(m) for m in ("oracle", "belief_map", "last_ack", "constant_beta")]
        return [Method.parse(m) for m in ("pomdp_channel", "random_channel_const_beta", "oracle_channel")]

    def resolution(self) -> int:
        if self.grid_resolution is not None:
            return self.grid_resolution
        return 10 if self.n_channels == 1 else 8

    def sweep_points(self) -> list:
        """``[(value, config_at_value)]``; a single ``(None, self)`` without a sweep."""
        if self.sweep is None:
            return [(None, self)]
        return [(v, with_param(self, self.sweep.param, v)) for v in self.sweep.values]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rd"] = dataclasses.asdict(self.rd)
        return _prune(d)


def _prune(obj):
    if isinstance(obj, dict):
        return {k: _prune(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_prune(v) for v in obj]
    return obj


# -- dotted-path access -------------------------------------------------------


def with_param(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    out = copy.deepcopy(cfg)
    out.sweep = None
    parts = path.split(".")
    if parts[0] == "channels":
        if len(parts) != 3:
            raise ConfigValidationError("sweep.param", f"bad channel path {path!r}")
        targets = out.channels if parts[1] == "*" else [_channel_at(out, parts[1], path)]
        for ch in targets:
            _set_field(ch, parts[2], value, path)
    elif parts[0] in ("sensor", "rd") and len(parts) == 2:
        if parts[0] == "rd":
            try:
                out.rd = dataclasses.replace(out.rd, **{parts[1]: _coerce(out.rd, parts[1], value, path)})
            except (TypeError, ValueError) as exc:
                raise ConfigValidationError(path, str(exc)) from exc
        else:
            _set_field(out.sensor, parts[1], value, path)
    elif len(parts) == 1 and parts[0] in ("horizon", "penalty", "grid_resolution", "beta_step"):
        _set_field(out, parts[0], value, path)
    else:
        raise ConfigValidationError("sweep.param", f"unknown parameter path {path!r}")
    return out


def _channel_at(cfg, idx, path):
    try:
        return cfg.channels[int(idx)]
    except (ValueError, IndexError):
        raise ConfigValidationError("sweep.param", f"no channel {idx} in {path!r}") from None


def _coerce(obj, name, value, path):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    if name not in fields:
        raise ConfigValidationError(path, f"unknown field {name!r}")
    current = getattr(obj, name)
    if name in ("n_states", "horizon", "grid_resolution", "seeds"):
        if float(value) != int(value):
            raise ConfigValidationError(path, f"must be an integer, got {value}")
        return int(value)
    if isinstance(current, (int, float)) or current is None:
        return float(value) if value is not None else None
    return value


def _set_field(obj, name, value, path):
    setattr(obj, name, _coerce(obj, name, value, path))


# -- loading -----------------------------------------------------------------


def _take(d: dict, cls, key: str):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigValidationError(key, "expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigValidationError(f"{key}.{unknown[0]}", "unknown key")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigValidationError(key, str(exc)) from exc


def config_from_dict(d: dict | None) -> ExperimentConfig:
    d = dict(d or {})
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(d) - top)
    if unknown:
        raise ConfigValidationError(unknown[0], "unknown key")
    kw = {}
    if "channels" in d:
        chans = d.pop("channels")
        if not isinstance(chans, list) or not chans:
            raise ConfigValidationError("channels", "expected a nonempty list")
        kw["channels"] = [_take(c, ChannelConfig, f"channels.{i}") for i, c in enumerate(chans)]
    if "sensor" in d:
        kw["sensor"] = _take(d.pop("sensor"), SensorConfig, "sensor")
    if "rd" in d:
        kw["rd"] = _take(d.pop("rd"), RdParams, "rd")
    if "sweep" in d and d["sweep"] is not None:
        kw["sweep"] = _take(d.pop("sweep"), SweepConfig, "sweep")
    kw.update(d)
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigFileNotFound(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigParseError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


# -- validation and model building ----------------------------------------------


def _sensor_for(cfg: ExperimentConfig, ch: ChannelConfig, key: str) -> tuple:
    roc = RocModel(cfg.sensor.kappa)
    zeta = ch.zeta if ch.zeta is not None else (cfg.sensor.zeta if ch.epsilon is None else None)
    eps = ch.epsilon if ch.epsilon is not None else cfg.sensor.epsilon
    sigma = ch.sigma if ch.sigma is not None else cfg.sensor.sigma
    if sigma is None or not sigma >= 0 or not math.isfinite(sigma):
        raise ConfigValidationError(f"{key}.sigma" if ch.sigma is not None else "sensor.sigma",
                                    f"must be a finite value >= 0, got {sigma}")
    if zeta is not None:
        if not 0 < zeta <= 1:
            raise ConfigValidationError("sensor.zeta", f"must be in (0, 1], got {zeta}")
        return operating_point_for_collision(roc, zeta), sigma
    if not 0 <= eps <= 1:
        raise ConfigValidationError(f"{key}.epsilon" if ch.epsilon is not None else "sensor.epsilon",
                                    f"must be in [0, 1], got {eps}")
    return sensor_for_epsilon(roc, eps), sigma


def _channel_model(ch: ChannelConfig, key: str) -> ChannelModel:
    if ch.n_states < 2:
        raise ConfigValidationError(f"{key}.n_states", f"must be >= 2, got {ch.n_states}")
    try:
        A = build_transition(ch.n_states, ch.p_stay, ch.p_avail_to_busy, ch.p_busy_stay)
    except ValueError as exc:
        raise ConfigValidationError(f"{key}.p_stay", str(exc)) from exc
    gains = default_gains(ch.n_states) if ch.gains is None else tuple(ch.gains)
    loss = default_loss(ch.n_states) if ch.loss is None else tuple(ch.loss)
    try:
        model = ChannelModel(ch.n_states, gains, loss, A, bandwidth=ch.bandwidth, slot=ch.slot)
    except ValueError as exc:
        which = "gains" if "gain" in str(exc) else "loss"
        raise ConfigValidationError(f"{key}.{which}", str(exc)) from exc
    try:
        stationary_distribution(A)
    except ValueError as exc:
        raise ConfigValidationError(f"{key}.p_busy_stay", str(exc)) from exc
    return model


def _validate_point(cfg: ExperimentConfig) -> None:
    if cfg.horizon < 1:
        raise ConfigValidationError("horizon", f"must be >= 1, got {cfg.horizon}")
    if cfg.seeds < 1:
        raise ConfigValidationError("seeds", f"must be >= 1, got {cfg.seeds}")
    if not cfg.penalty > 0:
        raise ConfigValidationError("penalty", f"must be > 0, got {cfg.penalty}")
    if cfg.n_channels < 1:
        raise ConfigValidationError("channels", "need at least one channel")
    if cfg.grid_resolution is not None and cfg.grid_resolution < 1:
        raise ConfigValidationError("grid_resolution", "must be >= 1")
    try:
        grid = BetaGrid.uniform(cfg.beta_step)
        grid.validate_for(cfg.rd)
    except ValueError as exc:
        raise ConfigValidationError("beta_step", str(exc)) from exc
    for i, ch in enumerate(cfg.channels):
        _channel_model(ch, f"channels.{i}")
        _sensor_for(cfg, ch, f"channels.{i}")
    try:
        methods = cfg.method_list()
    except ValueError as exc:
        raise ConfigValidationError("methods", str(exc)) from exc
    for m in methods:
        if m.kind in SINGLE_CHANNEL_KINDS and cfg.n_channels != 1:
            raise ConfigValidationError("methods", f"{m} needs exactly one channel")
        if m.beta0 is not None and m.beta0 not in grid:
            raise ConfigValidationError("methods", f"{m}: beta {m.beta0} not on the grid")


def validate(cfg: ExperimentConfig) -> None:
    if cfg.sweep is not None:
        if not cfg.sweep.values:
            raise ConfigValidationError("sweep.values", "empty sweep")
        for _, point in cfg.sweep_points():
            _validate_point(point)
    else:
        _validate_point(cfg)


def build_channels(cfg: ExperimentConfig) -> tuple:
    rd = cfg.rd
    grid = BetaGrid.uniform(cfg.beta_step)
    out = []
    for i, ch in enumerate(cfg.channels):
        model = _channel_model(ch, f"channels.{i}")
        sensor, sigma = _sensor_for(cfg, ch, f"channels.{i}")
        out.append(SensedChannel.build(model, sensor, sigma, rd, grid))
    return tuple(out)


def build_scenario(cfg: ExperimentConfig, solution=None) -> Scenario:
    if cfg.sweep is not None:
        raise ValueError("resolve the sweep first (ExperimentConfig.sweep_points)")
    return Scenario(
        channels=build_channels(cfg),
        rd=cfg.rd,
        horizon=cfg.horizon,
        penalty=cfg.penalty,
        beta_grid=BetaGrid.uniform(cfg.beta_step),
        solution=solution,
    )


# -- presets -------------------------------------------------------------------


def _single(name, sweep, **chan):
    base = dict(n_states=5, p_stay=0.85, p_avail_to_busy=0.05, p_busy_stay=0.1)
    base.update(chan)
    return ExperimentConfig(name=name, channels=[ChannelConfig(**base)], sweep=sweep)


def _two(name, sweep, ch1: dict, ch2: dict, epsilon=0.62):
    c1 = ChannelConfig(n_states=3, p_stay=0.5, **ch1)
    c2 = ChannelConfig(n_states=3, p_stay=0.3, **ch2)
    return ExperimentConfig(name=name, channels=[c1, c2], sensor=SensorConfig(epsilon=epsilon, sigma=0.1),
                            sweep=sweep)


def _ladder(lo, hi, step):
    n = int(round((hi - lo) / step))
    return [round(lo + k * step, 10) for k in range(n + 1)]


_PRESETS = {
    "fig3": ("distortion vs number of states",
             lambda: _single("fig3", SweepConfig("channels.0.n_states", [3, 4, 5, 6, 7, 8]))),
    "fig4": ("distortion vs probability an available state stays",
             lambda: _single("fig4", SweepConfig("channels.0.p_stay", _ladder(0.5, 0.95, 0.05)))),
    "fig5": ("distortion vs probability of an available state turning busy",
             lambda: _single("fig5", SweepConfig("channels.0.p_avail_to_busy", _ladder(0.01, 0.15, 0.02)),
                             p_stay=0.5)),
    "fig6": ("distortion vs receiver gain-estimation sigma",
             lambda: _single("fig6", SweepConfig("sensor.sigma", [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5]))),
    "fig7": ("distortion vs sensor false-alarm probability",
             lambda: _single("fig7", SweepConfig("sensor.epsilon", _ladder(0.1, 0.9, 0.1)))),
    "fig8": ("two channels: utilization vs channel-1 busy persistence",
             lambda: _two("fig8", SweepConfig("channels.0.p_busy_stay", _ladder(0.1, 0.9, 0.1)),
                          dict(p_avail_to_busy=0.2, p_busy_stay=0.4),
                          dict(p_avail_to_busy=0.6, p_busy_stay=0.8))),
    "fig9": ("two channels: utilization vs channel-1 available-to-busy probability",
             lambda: _two("fig9", SweepConfig("channels.0.p_avail_to_busy", [0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4]),
                          dict(p_avail_to_busy=0.2, p_busy_stay=0.4),
                          dict(p_avail_to_busy=0.6, p_busy_stay=0.8))),
    "fig10": ("two channels: distortion vs channel-1 busy persistence",
              lambda: _two("fig10", SweepConfig("channels.0.p_busy_stay", _ladder(0.1, 0.9, 0.1)),
                           dict(p_avail_to_busy=0.2, p_busy_stay=0.4),
                           dict(p_avail_to_busy=0.6, p_busy_stay=0.8))),
    "fig11": ("two channels: utilization vs shared sensor false-alarm probability",
              lambda: _two("fig11", SweepConfig("sensor.epsilon", _ladder(0.1, 0.9, 0.1)),
                           dict(p_avail_to_busy=0.15, p_busy_stay=0.4),
                           dict(p_avail_to_busy=0.2, p_busy_stay=0.6))),
    "fig12": ("two channels: distortion vs shared sensor false-alarm probability",
              lambda: _two("fig12", SweepConfig("sensor.epsilon", _ladder(0.1, 0.9, 0.1)),
                           dict(p_avail_to_busy=0.15, p_busy_stay=0.4),
                           dict(p_avail_to_busy=0.2, p_busy_stay=0.6))),
}


class UnknownPresetError(ConfigError):
    kind = "preset"


def preset_names() -> list:
    return list(_PRESETS)


def preset_description(name: str) -> str:
    return _PRESETS[name][0]


def preset(name: str) -> ExperimentConfig:
    try:
        cfg = _PRESETS[name][1]()
    except KeyError:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {', '.join(_PRESETS)}") from None
    validate(cfg)
    return cfg
