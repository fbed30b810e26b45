"""Experiment configuration: schema, defaults, strict parsing.

Config files are JSON. Every key is optional (defaults below), unknown keys
are rejected by dotted path, and the resolved form embedded in report.json
re-parses to an equivalent config.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from .errors import ConfigError
from .losses import LossWeights
from .memory import StoragePolicy

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class WorldConfig:
    """Knobs of the synthetic domain-shift scenario."""

    categories: int = 20
    input_dim: int = 32
    feature_dim: int = 64
    class_separation: float = 4.0
    class_spread: float = 0.4
    modes_per_category: int = 3
    mode_scatter: float = 1.5
    zipf_exponent: float = 1.2
    rotation_angle_deg: float = 35.0
    shift_offset_scale: float = 1.0
    target_noise: float = 0.1
    source_images: int = 800
    target_images: int = 400
    instances_per_image: Tuple[int, int] = (1, 1)
    min_per_category: int = 10

    def __post_init__(self) -> None:
        if self.categories < 2:
            raise ConfigError("world.categories: need >= 2")
        for key in ("input_dim", "feature_dim", "source_images", "target_images"):
            if getattr(self, key) < 1:
                raise ConfigError(f"world.{key}: need >= 1")
        for key in (
            "class_separation",
            "class_spread",
            "mode_scatter",
            "zipf_exponent",
            "shift_offset_scale",
            "target_noise",
        ):
            if getattr(self, key) < 0:
                raise ConfigError(f"world.{key}: need >= 0")
        if self.modes_per_category < 1:
            raise ConfigError("world.modes_per_category: need >= 1")
        lo, hi = self.instances_per_image
        if not 1 <= lo <= hi:
            raise ConfigError("world.instances_per_image: need 1 <= lo <= hi")
        if self.min_per_category < 0:
            raise ConfigError("world.min_per_category: need >= 0")


@dataclass(frozen=True)
class ScheduleConfig:
    """Optimizer and cadence settings of one training run."""

    epochs: int = 12
    batch_size: int = 8
    memory_update_fraction: float = 1.0 / 3.0
    learning_rate: float = 0.04
    momentum: float = 0.9
    k_retrieval: int = 1
    base_delta: float = 0.7
    nms_iou: float = 0.5

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ConfigError("schedule.epochs: need >= 0")
        if self.batch_size < 1:
            raise ConfigError("schedule.batch_size: need >= 1")
        if not 0.0 < self.memory_update_fraction <= 1.0:
            raise ConfigError("schedule.memory_update_fraction: need in (0, 1]")
        if self.learning_rate <= 0.0:
            raise ConfigError("schedule.learning_rate: need > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("schedule.momentum: need in [0, 1)")
        if self.k_retrieval < 1:
            raise ConfigError("schedule.k_retrieval: need >= 1")
        if not 0.0 < self.base_delta < 1.0:
            raise ConfigError("schedule.base_delta: need in (0, 1)")
        if not 0.0 < self.nms_iou < 1.0:
            raise ConfigError("schedule.nms_iou: need in (0, 1)")

    @property
    def rebuilds_per_epoch(self) -> int:
        return round(1.0 / self.memory_update_fraction)


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, validated description of one experiment."""

    seed: int = 0
    out_dir: Optional[str] = None
    world: WorldConfig = field(default_factory=WorldConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    policy: StoragePolicy = field(default_factory=StoragePolicy)

    def __post_init__(self) -> None:
        steps = self.world.source_images // self.schedule.batch_size
        if self.schedule.epochs > 0 and steps < self.schedule.rebuilds_per_epoch:
            raise ConfigError(
                "schedule.memory_update_fraction: "
                f"{self.schedule.rebuilds_per_epoch} rebuilds per epoch need at "
                f"least that many steps, but source_images/batch_size gives {steps}"
            )

    def replace(self, **kwargs: Any) -> "ExperimentConfig":
        """Functional update; nested sections accept plain dict patches."""
        state: Dict[str, Any] = {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "world": self.world,
            "schedule": self.schedule,
            "weights": self.weights,
            "policy": self.policy,
        }
        for key, value in kwargs.items():
            if key not in state:
                raise ConfigError(f"unknown key '{key}'")
            if isinstance(value, Mapping) and key in ("world", "schedule", "weights", "policy"):
                current = asdict(state[key])
                current.update(value)
                value = type(state[key])(**current)
            state[key] = value
        return ExperimentConfig(**state)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "world": asdict(self.world),
            "schedule": asdict(self.schedule),
            "weights": asdict(self.weights),
            "policy": asdict(self.policy),
        }
        out["world"]["instances_per_image"] = list(self.world.instances_per_image)
        return out


_SECTION_TYPES = {
    "world": WorldConfig,
    "schedule": ScheduleConfig,
    "weights": LossWeights,
    "policy": StoragePolicy,
}


def _build_section(name: str, cls: type, data: Mapping[str, Any]) -> Any:
    defaults = cls()
    known = set(asdict(defaults))
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key '{name}.{sorted(unknown)[0]}'")
    merged = asdict(defaults)
    merged.update(data)
    if name == "world" and "instances_per_image" in merged:
        rng = merged["instances_per_image"]
        if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
            raise ConfigError("world.instances_per_image: need a [lo, hi] pair")
        merged["instances_per_image"] = (int(rng[0]), int(rng[1]))
    return cls(**merged)


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build a config from parsed JSON, rejecting unknown keys by name."""
    if not isinstance(data, Mapping):
        raise ConfigError("config root: expected an object")
    known = {"schema_version", "seed", "out_dir"} | set(_SECTION_TYPES)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}'")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version: {version} unsupported (expected {SCHEMA_VERSION})"
        )

    sections = {}
    for name, cls in _SECTION_TYPES.items():
        raw = data.get(name, {})
        if not isinstance(raw, Mapping):
            raise ConfigError(f"{name}: expected an object")
        sections[name] = _build_section(name, cls, raw)

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed: need a non-negative integer")
    out_dir = data.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir: need a string or null")

    return ExperimentConfig(seed=seed, out_dir=out_dir, **sections)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse and validate a JSON config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config file: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file: invalid JSON ({exc})") from exc
    return config_from_dict(data)
