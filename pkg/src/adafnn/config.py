"""Declarative experiment configuration (YAML or JSON file, flags override)."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .model import HEAD_PRESETS
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class SourceConfig:
    simulation: Optional[int] = None  # case id 1..5
    csv: Optional[str] = None
    task: str = "regression"
    n_train: int = 1500
    n_val: int = 300
    n_test: int = 300
    split: Tuple[float, float, float] = (0.7, 0.15, 0.15)

    def __post_init__(self):
        if (self.simulation is None) == (self.csv is None):
            raise ConfigError("source needs exactly one of 'simulation' or 'csv'")
        if self.simulation is not None:
            if self.simulation not in (1, 2, 3, 4, 5):
                raise ConfigError(f"unknown simulation case {self.simulation}")
            if self.task != "regression":
                raise ConfigError("simulation cases are regression tasks")
        if self.task not in ("regression", "classification"):
            raise ConfigError(f"unknown task {self.task!r}")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ConfigError("sample sizes must be positive")
        self.split = tuple(float(f) for f in self.split)
        if len(self.split) != 3 or any(f <= 0 for f in self.split) or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError("split must be three positive fractions summing to 1")

    @property
    def label(self) -> str:
        return f"case{self.simulation}" if self.simulation is not None else Path(self.csv).stem


@dataclass
class ModelConfig:
    type: str
    n_bases: int = 2
    lambda1: List[float] = field(default_factory=lambda: [0.0])
    lambda2: List[float] = field(default_factory=lambda: [0.0])
    n_basis: int = 15  # B-splines
    degree: int = 3
    fve: float = 0.9
    micro_dropout: float = 0.0
    pairs_per_batch: int = 10

    def __post_init__(self):
        if self.type not in ("adafnn", "raw", "bspline", "fpca"):
            raise ConfigError(f"unknown model type {self.type!r}")
        self.lambda1 = [float(v) for v in _as_list(self.lambda1)]
        self.lambda2 = [float(v) for v in _as_list(self.lambda2)]
        if any(v < 0 for v in self.lambda1 + self.lambda2):
            raise ConfigError("lambda values must be non-negative")
        if not self.lambda1 or not self.lambda2:
            raise ConfigError("lambda grids must be non-empty")
        if self.n_bases < 1:
            raise ConfigError("n_bases must be positive")
        if self.type == "adafnn" and self.n_bases < 2 and any(v > 0 for v in self.lambda1):
            raise ConfigError("orthogonality penalty needs n_bases >= 2")
        if not 0.0 < self.fve <= 1.0:
            raise ConfigError("fve must lie in (0, 1]")
        if self.n_basis < self.degree + 1:
            raise ConfigError("n_basis must be at least degree + 1")

    def variants(self) -> List[Tuple[float, float]]:
        if self.type != "adafnn":
            return [(0.0, 0.0)]
        return list(itertools.product(self.lambda1, self.lambda2))


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass
class ExperimentConfig:
    source: SourceConfig
    models: List[ModelConfig]
    architecture: str = "large"
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: List[int] = field(default_factory=lambda: [0])
    output_dir: str = "runs/experiment"
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.models:
            raise ConfigError("at least one model is required")
        if self.architecture not in HEAD_PRESETS:
            raise ConfigError(f"unknown architecture preset {self.architecture!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["source"]["split"] = list(d["source"]["split"])
        return d


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    data = dict(data)
    for key in ("source", "models"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    data["source"] = _build(SourceConfig, data["source"], "source")
    if not isinstance(data["models"], list):
        raise ConfigError("models must be a list")
    data["models"] = [_build(ModelConfig, m, f"models[{i}]") for i, m in enumerate(data["models"])]
    data["train"] = _build(TrainConfig, data.get("train", {}), "train")
    if "seeds" in data:
        data["seeds"] = [int(s) for s in _as_list(data["seeds"])]
    return _build(ExperimentConfig, data, "config")


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read a config file and apply dotted-key overrides such as ``train.max_epochs``."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data is None:
        raise ConfigError(f"{path}: empty config")
    for key, value in (overrides or {}).items():
        target = data
        *head, last = key.split(".")
        for part in head:
            target = target.setdefault(part, {})
        target[last] = value
    return config_from_dict(data)
