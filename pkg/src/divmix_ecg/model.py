"""1D EfficientNet classifier with wide-feature conditioning."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import nn_core
from .errors import ConfigError, ShapeError
from .signal_prep import WIDE_DIM

DEFAULT_THRESHOLD = 0.3


@dataclass(frozen=True)
class Stage:
    op: str  # "conv" or "fmbconv"
    kernel: int
    stride: int
    out_channels: int
    num_layers: int
    expand: int = 1


TABLE1_STAGES = (
    Stage("conv", 7, 2, 32, 1),
    Stage("fmbconv", 5, 2, 32, 2, expand=2),
    Stage("fmbconv", 5, 2, 64, 1, expand=1),
    Stage("fmbconv", 7, 2, 128, 2, expand=2),
    Stage("fmbconv", 7, 2, 128, 1, expand=1),
    Stage("fmbconv", 7, 2, 256, 2, expand=2),
    Stage("fmbconv", 7, 2, 256, 2, expand=2),
    Stage("conv", 1, 1, 512, 1),
)


def _round_channels(c: float, divisor: int = 8) -> int:
    return max(divisor, int(c + divisor / 2) // divisor * divisor)


@dataclass
class ModelConfig:
    stages: tuple = TABLE1_STAGES
    n_labels: int = 24
    wide_in: int = WIDE_DIM
    wide_dim: int = 32
    wide_layers: int = 4
    mlp_hidden: int = 256
    # channel multiplier for desk-scale runs; 1.0 reproduces the table exactly
    width_mult: float = 1.0
    # start the pointwise weights on broadcast wide channels at zero so the
    # time-constant conditioning cannot swamp the signal path early in training
    zero_init_wide: bool = True

    def __post_init__(self):
        self.stages = tuple(s if isinstance(s, Stage) else Stage(**s) for s in self.stages)
        if not self.stages or self.n_labels < 1 or self.width_mult <= 0:
            raise ConfigError("invalid model config")
        for s in self.stages:
            if s.op not in ("conv", "fmbconv") or s.num_layers < 1 or s.kernel % 2 == 0:
                raise ConfigError(f"invalid stage {s}")

    def channels(self, stage: Stage) -> int:
        if self.width_mult == 1.0:
            return stage.out_channels
        return _round_channels(stage.out_channels * self.width_mult)

    @property
    def hidden_dim(self) -> int:
        return self.channels(self.stages[-1])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = [asdict(s) for s in self.stages]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["stages"] = tuple(Stage(**s) for s in d.get("stages", [asdict(s) for s in TABLE1_STAGES]))
        return cls(**d)


class ConvStage(nn.Module):
    def __init__(self, c_in, c_out, kernel, stride):
        super().__init__()
        self.conv = nn_core.Conv1dSame(c_in, c_out, kernel, stride, bias=False)
        self.bn = nn_core.batch_norm(c_out)

    def forward(self, h, cond=None):
        return F.mish(self.bn(self.conv(h)))


class EfficientNet1D(nn.Module):
    """Stage plan -> global max pool -> 2-layer MLP head.

    The wide pathway (FC stack with BN and Mish) embeds the wide features once;
    the embedding conditions every Fused-MBConv block.
    """

    def __init__(self, config: ModelConfig, n_channels: int):
        super().__init__()
        if n_channels < 1:
            raise ConfigError("need at least one input channel")
        self.config = config
        self.n_channels = n_channels
        sizes = [config.wide_in] + [config.wide_dim] * config.wide_layers
        self.wide = nn_core.fc_stack(sizes)
        blocks = []
        self.stage_index = []
        c = n_channels
        for si, st in enumerate(config.stages):
            c_out = config.channels(st)
            for li in range(st.num_layers):
                stride = st.stride if li == 0 else 1
                if st.op == "conv":
                    blocks.append(ConvStage(c, c_out, st.kernel, stride))
                else:
                    blocks.append(nn_core.FusedMBConv(c, c_out, st.kernel, stride,
                                                      expand=st.expand, cond_dim=config.wide_dim))
                self.stage_index.append(si)
                c = c_out
        self.blocks = nn.ModuleList(blocks)
        if config.zero_init_wide:
            with torch.no_grad():
                for b in blocks:
                    if isinstance(b, nn_core.FusedMBConv):
                        b.project.weight[:, b.hidden:].zero_()
        self.head = nn.Sequential(
            nn.Linear(c, config.mlp_hidden), nn.Mish(), nn.Linear(config.mlp_hidden, config.n_labels))

    def _check(self, x, wide):
        if x.dim() != 3 or x.shape[1] != self.n_channels:
            raise ShapeError(f"expected input (B, {self.n_channels}, W), got {tuple(x.shape)}")
        if wide.shape != (x.shape[0], self.config.wide_in):
            raise ShapeError(f"expected wide features ({x.shape[0]}, {self.config.wide_in}), "
                             f"got {tuple(wide.shape)}")

    def sequence(self, x, wide, return_stages: bool = False):
        """Hidden representation sequence before pooling."""
        self._check(x, wide)
        cond = self.wide(wide)
        h = x
        stage_out = []
        for si, block in zip(self.stage_index, self.blocks):
            h = block(h, cond)
            if return_stages:
                if len(stage_out) == si:
                    stage_out.append(h)
                else:
                    stage_out[si] = h
        return (h, stage_out) if return_stages else h

    def features(self, x, wide):
        """Pooled fixed-length hidden vector (the mixup space)."""
        return nn_core.global_max_pool(self.sequence(x, wide))

    def forward(self, x, wide):
        return self.head(self.features(x, wide))

    def stage_shapes(self, x, wide) -> list:
        was_training = self.training
        self.eval()
        with torch.no_grad():
            _, stages = self.sequence(x, wide, return_stages=True)
        self.train(was_training)
        return [tuple(s.shape) for s in stages]


def build(config: Optional[ModelConfig] = None, n_channels: int = 12,
          seed: Optional[int] = None) -> EfficientNet1D:
    config = config or ModelConfig()
    if seed is not None:
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            return EfficientNet1D(config, n_channels)
    return EfficientNet1D(config, n_channels)


@dataclass
class Prediction:
    probabilities: np.ndarray
    decisions: np.ndarray = field(default=None)
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities)
        if self.decisions is None:
            self.decisions = self.probabilities >= self.threshold


def as_tensor(a, dtype=torch.float32) -> torch.Tensor:
    if isinstance(a, torch.Tensor):
        return a.to(dtype)
    return torch.as_tensor(np.asarray(a), dtype=dtype)


@torch.no_grad()
def predict_proba(network: nn.Module, x, wide, batch_size: int = 256) -> np.ndarray:
    was_training = network.training
    network.eval()
    dtype = next(network.parameters()).dtype
    x, wide = as_tensor(x, dtype), as_tensor(wide, dtype)
    out = [torch.sigmoid(network(x[i:i + batch_size], wide[i:i + batch_size]))
           for i in range(0, x.shape[0], batch_size)]
    network.train(was_training)
    return torch.cat(out).numpy().astype(np.float64)


def predict(network: nn.Module, x, wide, threshold: float = DEFAULT_THRESHOLD) -> Prediction:
    return Prediction(predict_proba(network, x, wide), threshold=threshold)
