"""Configuration schema, loading/validation, and seeded random streams.

The config file is YAML (or JSON) with a ``schema_version`` key. Every
section maps onto a frozen dataclass below; omitted keys take the defaults.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

SCHEMA_VERSION = 1

POLICIES = ("mdr-gba", "mac-gba", "random", "static", "greedy-sensing")
LEARNED_POLICIES = ("mdr-gba", "mac-gba")


class ConfigError(ValueError):
    """Raised for parse failures, schema violations and infeasible parameters."""


@dataclass(frozen=True)
class ClockConfig:
    slot_length: float = 1.0  # seconds (epsilon)
    horizon: int = 300  # number of slots |T|


@dataclass(frozen=True)
class RsuConfig:
    location: tuple[float, float] = (1500.0, 1500.0)
    range: float = 1000.0  # meters
    bandwidth: float = 3.0e6  # Hz


@dataclass(frozen=True)
class ChannelConfig:
    noise_dbm: float = -90.0
    fading_mean: float = 2.0
    fading_variance: float = 0.4
    antenna_gain: float = 1.0
    path_loss_exponent: float = 3.0
    tx_power_mw: float = 1.0
    # N0* is drawn per slot, uniformly in this range (dB)
    noise_uncertainty_db: tuple[float, float] = (0.0, 3.0)


@dataclass(frozen=True)
class VehiclesConfig:
    count: int = 10
    source: str = "synthetic"  # "synthetic" | "csv"
    trajectory_csv: str | None = None
    projection_origin: tuple[float, float] | None = None  # (lon, lat)
    area: tuple[float, float] = (3000.0, 3000.0)
    speed_range: tuple[float, float] = (5.0, 15.0)  # m/s
    max_gap: float = 30.0  # seconds; larger gaps in a CSV trace split it
    gap_policy: str = "split"  # "split" | "drop"


@dataclass(frozen=True)
class CategoriesConfig:
    count: int = 5  # J
    lambda_min: tuple[float, ...] = (0.5, 0.5, 0.5, 0.5, 0.5)
    lambda_max: tuple[float, ...] = (5.0, 5.0, 5.0, 5.0, 5.0)
    ser_mean: tuple[float, ...] = (0.04, 0.06, 0.08, 0.10, 0.12)
    ser_second_moment: tuple[float, ...] = (0.0032, 0.0072, 0.0128, 0.02, 0.0288)


@dataclass(frozen=True)
class DataConfig:
    size_min_bytes: float = 100.0
    size_max_bytes: float = 1.0e6

    @property
    def mean_bits(self) -> float:
        return 4.0 * (self.size_min_bytes + self.size_max_bytes)


@dataclass(frozen=True)
class ViewsConfig:
    count: int = 10
    mean_size_bytes: float = 6.46e6
    schedule_prob: float = 0.5


@dataclass(frozen=True)
class AovConfig:
    weights: tuple[float, float, float] = (0.3, 0.4, 0.3)
    completeness_threshold: float = 0.8
    # "calibrated": fixed window [min, quantile] of a random-policy reference episode
    # "episode": running min/max over the views scored so far in the episode
    normalization: str = "calibrated"
    calibration_quantile: float = 0.95


@dataclass(frozen=True)
class AllocationConfig:
    omega: float = 1.0
    prediction_horizon: int = 5
    predictor: str = "linear"  # "linear" | "em"
    em_window: int = 10


@dataclass(frozen=True)
class EngineConfig:
    slot_deadline: bool = False


@dataclass(frozen=True)
class AgentsConfig:
    policy: str = "mdr-gba"
    hidden: tuple[int, ...] = (64, 64)
    gamma: float = 0.95
    batch_size: int = 64
    buffer_size: int = 100_000
    soft_update: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    noise_init: float = 0.2
    noise_floor: float = 0.01
    noise_decay_slots: int = 6000
    warmup: int = 256
    train_every: int = 1
    freshness_cap: int = 20


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 20
    eval_every: int = 5
    eval_episodes: int = 2
    checkpoint_every: int = 1


@dataclass(frozen=True)
class SimulationConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    clock: ClockConfig = field(default_factory=ClockConfig)
    rsu: RsuConfig = field(default_factory=RsuConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    vehicles: VehiclesConfig = field(default_factory=VehiclesConfig)
    categories: CategoriesConfig = field(default_factory=CategoriesConfig)
    data: DataConfig = field(default_factory=DataConfig)
    views: ViewsConfig = field(default_factory=ViewsConfig)
    aov: AovConfig = field(default_factory=AovConfig)
    allocation: AllocationConfig = field(default_factory=AllocationConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    agents: AgentsConfig = field(default_factory=AgentsConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)


@dataclass(frozen=True)
class SimClock:
    slot_length_eps: float
    horizon: int
    slot_index: int = 0

    def advance(self) -> SimClock:
        return dataclasses.replace(self, slot_index=self.slot_index + 1)

    @property
    def running(self) -> bool:
        return self.slot_index < self.horizon

    @property
    def now(self) -> float:
        return self.slot_index * self.slot_length_eps


@dataclass(frozen=True)
class Rsu:
    location: tuple[float, float]
    range_r_e: float
    bandwidth_b_e: float


@dataclass(frozen=True)
class CategoryParams:
    lambda_t: float
    lambda_min: float
    lambda_max: float
    priority_p: float
    ser_mean: float
    ser_second_moment: float


@dataclass(frozen=True)
class DataItem:
    category_j: int
    index_k: int
    size_bits: float


# --------------------------------------------------------------------------
# dict <-> dataclass


def _coerce(f: dataclasses.Field, value: Any, path: str) -> Any:
    typ = str(f.type)
    nullable = "None" in typ
    if value is None:
        if nullable:
            return None
        raise ConfigError(f"{path}: null is not allowed")
    if typ.startswith("tuple"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        conv = int if "int" in typ else float
        try:
            return tuple(conv(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: non-numeric entry in {value!r}") from None
    if typ == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if typ in ("int", "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if typ == "int":
            if float(value) != int(value):
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
            return int(value)
        return float(value)
    if typ.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _from_dict(cls: type, data: dict, prefix: str = "") -> Any:
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        where = f"{prefix}.{unknown[0]}" if prefix else unknown[0]
        raise ConfigError(f"{where}: unknown key")
    kwargs = {}
    for name, f in known.items():
        if name in data:
            path = f"{prefix}.{name}" if prefix else name
            if cls is SimulationConfig and name in _SECTIONS:
                if not isinstance(data[name], dict):
                    raise ConfigError(f"{path}: expected a mapping")
                kwargs[name] = _from_dict(_SECTIONS[name], data[name], path)
            else:
                kwargs[name] = _coerce(f, data[name], path)
    return cls(**kwargs)


_SECTIONS = {
    "clock": ClockConfig,
    "rsu": RsuConfig,
    "channel": ChannelConfig,
    "vehicles": VehiclesConfig,
    "categories": CategoriesConfig,
    "data": DataConfig,
    "views": ViewsConfig,
    "aov": AovConfig,
    "allocation": AllocationConfig,
    "engine": EngineConfig,
    "agents": AgentsConfig,
    "training": TrainingConfig,
}


def config_to_dict(cfg: SimulationConfig) -> dict:
    def conv(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: conv(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return [conv(v) for v in obj]
        return obj

    return conv(cfg)


def config_from_dict(data: dict) -> SimulationConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    data = dict(data)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    data = _broadcast_categories(data)
    cfg = _from_dict(SimulationConfig, data)
    validate(cfg)
    return cfg


def _broadcast_categories(data: dict) -> dict:
    """Allow scalar per-category values; broadcast them to ``count`` entries."""
    cats = data.get("categories")
    if not isinstance(cats, dict):
        return data
    cats = dict(cats)
    count = cats.get("count", CategoriesConfig.count)
    for key in ("lambda_min", "lambda_max", "ser_mean", "ser_second_moment"):
        if key in cats and isinstance(cats[key], (int, float)) and not isinstance(cats[key], bool):
            cats[key] = [cats[key]] * int(count)
        elif key not in cats and count != CategoriesConfig.count:
            default = getattr(CategoriesConfig, key)
            cats[key] = [default[0]] * int(count)
    data["categories"] = cats
    return data


def with_overrides(cfg: SimulationConfig, overrides: dict[str, Any]) -> SimulationConfig:
    """Return a validated copy with dotted-key overrides applied, e.g. ``{"rsu.bandwidth": 5e6}``."""
    data = config_to_dict(cfg)
    for key, value in overrides.items():
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"{key}: unknown key")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"{key}: unknown key")
        node[parts[-1]] = value
    return config_from_dict(data)


def load_config(path: str | Path) -> SimulationConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: parse failure: {exc}") from None
    if data is None:
        data = {}
    return config_from_dict(data)


def _check(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def validate(cfg: SimulationConfig) -> None:
    """Reject parameter sets for which C1-C5 cannot be satisfied."""
    _check(cfg.clock.slot_length > 0, "clock.slot_length", "must be > 0")
    _check(cfg.clock.horizon >= 0, "clock.horizon", "must be >= 0")
    _check(cfg.rsu.range > 0, "rsu.range", "must be > 0")
    _check(cfg.rsu.bandwidth > 0, "rsu.bandwidth", "must be > 0")
    _check(len(cfg.rsu.location) == 2, "rsu.location", "must be [x, y]")

    ch = cfg.channel
    _check(ch.fading_mean > 0, "channel.fading_mean", "must be > 0")
    _check(ch.fading_variance >= 0, "channel.fading_variance", "must be >= 0")
    _check(ch.antenna_gain > 0, "channel.antenna_gain", "must be > 0")
    _check(ch.path_loss_exponent >= 2, "channel.path_loss_exponent", "must be >= 2")
    _check(ch.tx_power_mw >= 0, "channel.tx_power_mw", "must be >= 0")
    lo, hi = ch.noise_uncertainty_db
    _check(0 <= lo <= hi, "channel.noise_uncertainty_db", "need 0 <= low <= high")

    v = cfg.vehicles
    _check(v.count >= 1, "vehicles.count", "must be >= 1")
    _check(v.source in ("synthetic", "csv"), "vehicles.source", "must be 'synthetic' or 'csv'")
    _check(v.source != "csv" or bool(v.trajectory_csv), "vehicles.trajectory_csv", "required when source is 'csv'")
    _check(min(v.area) > 0, "vehicles.area", "must be positive")
    _check(0 <= v.speed_range[0] <= v.speed_range[1], "vehicles.speed_range", "need 0 <= low <= high")
    _check(v.gap_policy in ("split", "drop"), "vehicles.gap_policy", "must be 'split' or 'drop'")

    c = cfg.categories
    _check(c.count >= 1, "categories.count", "must be >= 1")
    for key in ("lambda_min", "lambda_max", "ser_mean", "ser_second_moment"):
        _check(len(getattr(c, key)) == c.count, f"categories.{key}", f"needs {c.count} entries")
    for j in range(c.count):
        _check(c.lambda_min[j] > 0, f"categories.lambda_min[{j}]", "must be > 0 (C1)")
        _check(
            c.lambda_min[j] <= c.lambda_max[j],
            f"categories.lambda_min[{j}]",
            f"lambda_min {c.lambda_min[j]} > lambda_max {c.lambda_max[j]} (C1)",
        )
        _check(c.ser_mean[j] > 0, f"categories.ser_mean[{j}]", "must be > 0")
        _check(
            c.ser_second_moment[j] >= c.ser_mean[j] ** 2 * (1 - 1e-12),
            f"categories.ser_second_moment[{j}]",
            "must be >= ser_mean**2",
        )
    base = sum(lm * s for lm, s in zip(c.lambda_min, c.ser_mean))
    _check(base < 0.99, "categories.lambda_min", f"minimum workload {base:.4g} leaves C4 infeasible")

    d = cfg.data
    _check(0 <= d.size_min_bytes <= d.size_max_bytes, "data.size_min_bytes", "need 0 <= min <= max")

    vw = cfg.views
    _check(vw.count >= 1, "views.count", "must be >= 1")
    _check(vw.mean_size_bytes > 0, "views.mean_size_bytes", "must be > 0")
    _check(0 < vw.schedule_prob <= 1, "views.schedule_prob", "must be in (0, 1]")

    w = cfg.aov.weights
    _check(len(w) == 3 and min(w) >= 0, "aov.weights", "need three non-negative weights")
    _check(abs(sum(w) - 1) < 1e-9, "aov.weights", f"must sum to 1, got {sum(w)}")
    _check(0 <= cfg.aov.completeness_threshold <= 1, "aov.completeness_threshold", "must be in [0, 1]")
    _check(cfg.aov.normalization in ("calibrated", "episode"), "aov.normalization", "must be 'calibrated' or 'episode'")
    _check(0 < cfg.aov.calibration_quantile <= 1, "aov.calibration_quantile", "must be in (0, 1]")

    a = cfg.allocation
    _check(a.omega > 0, "allocation.omega", "must be > 0")
    _check(a.prediction_horizon >= 1, "allocation.prediction_horizon", "must be >= 1")
    _check(a.predictor in ("linear", "em"), "allocation.predictor", "must be 'linear' or 'em'")

    ag = cfg.agents
    _check(ag.policy in POLICIES, "agents.policy", f"must be one of {', '.join(POLICIES)}")
    _check(0 <= ag.gamma < 1, "agents.gamma", "must be in [0, 1)")
    _check(ag.batch_size >= 1, "agents.batch_size", "must be >= 1")
    _check(ag.buffer_size >= ag.batch_size, "agents.buffer_size", "must be >= batch_size")
    _check(0 < ag.soft_update <= 1, "agents.soft_update", "must be in (0, 1]")
    _check(ag.freshness_cap >= 1, "agents.freshness_cap", "must be >= 1")
    _check(all(h >= 1 for h in ag.hidden), "agents.hidden", "layer widths must be >= 1")

    t = cfg.training
    _check(t.episodes >= 0, "training.episodes", "must be >= 0")
    _check(t.eval_every >= 0, "training.eval_every", "must be >= 0")
    _check(t.checkpoint_every >= 1, "training.checkpoint_every", "must be >= 1")


# --------------------------------------------------------------------------
# seeding


def seeded_rng(master_seed: int, stream_label: str) -> np.random.Generator:
    """Independent, reproducible generator for a (seed, label) pair."""
    digest = hashlib.sha256(stream_label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), *words])))


def derive_seed(master_seed: int, label: str) -> int:
    return int(seeded_rng(master_seed, label).integers(0, 2**31 - 1))


# --------------------------------------------------------------------------
# manifest


def code_version() -> str:
    from aovsim import __version__

    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(out_dir: str | Path, cfg: SimulationConfig, seed: int, **extra: Any) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "code_version": code_version(),
        "seed": seed,
        "config": config_to_dict(cfg),
        **extra,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
