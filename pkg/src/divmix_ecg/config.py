"""Hyperparameter records and the TOML config loader.

A config file has up to four sections, each optional:

    [train]       TrainConfig keys
    [model]       ModelConfig scalar keys (n_labels, width_mult, ...)
    [synthetic]   SyntheticConfig keys
    [experiment]  ExperimentConfig keys
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 160
    baseline_batch_size: int = 240
    warmup_epochs: int = 2
    em_iters: int = 10
    lambda_n: float = 0.5
    mixup_alpha: float = 4.0
    p_clean: float = 0.5
    swa_epochs: int = 13
    threshold: float = 0.3
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.0
    bn_refresh_samples: int = 2048
    target_rate: float = 500.0
    window_s: float = 15.0
    min_duration_s: float = 10.0
    eval_batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.epochs < 1 or self.batch_size < 2 or self.baseline_batch_size < 2:
            raise ConfigError("epochs >= 1 and batch sizes >= 2 required")
        if not 0 <= self.warmup_epochs:
            raise ConfigError("warmup_epochs must be >= 0")
        if not 0.0 <= self.lambda_n <= 1.0:
            raise ConfigError("lambda_n must lie in [0, 1]")
        if self.mixup_alpha <= 0 or self.em_iters < 1 or self.swa_epochs < 0:
            raise ConfigError("mixup_alpha > 0, em_iters >= 1, swa_epochs >= 0 required")

    @property
    def swa_start(self) -> int:
        """First (1-based) epoch whose end-of-epoch weights are averaged."""
        return self.epochs - self.swa_epochs + 1


def _build(cls, section: dict, name: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class FileConfig:
    train: "TrainConfig" = field(default_factory=TrainConfig)
    model: dict = field(default_factory=dict)
    synthetic: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)


def load_config(path=None) -> FileConfig:
    if path is None:
        return FileConfig()
    with open(Path(path), "rb") as fh:
        raw = tomllib.load(fh)
    unknown = set(raw) - {"train", "model", "synthetic", "experiment"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return FileConfig(
        train=_build(TrainConfig, raw.get("train", {}), "train"),
        model=dict(raw.get("model", {})),
        synthetic=dict(raw.get("synthetic", {})),
        experiment=dict(raw.get("experiment", {})),
    )


def build_section(cls, section: dict, name: str):
    return _build(cls, section, name)
