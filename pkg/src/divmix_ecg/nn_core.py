"""Network building blocks: same-padded 1D convolution, squeeze-and-excitation,
Fused-MBConv, global max pooling, FC stacks, plus a parameter store with a
binary checkpoint format.

Everything is a thin layer over torch; gradients come from autograd.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError, StateError

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def mish(x):
    """x * tanh(softplus(x)); accepts floats or tensors."""
    if isinstance(x, torch.Tensor):
        return F.mish(x)
    return x * math.tanh(math.log1p(math.exp(-abs(x))) + max(x, 0.0))


def same_width(width: int, stride: int) -> int:
    return -(-width // stride)


def conv1d_forward(x: torch.Tensor, weight: torch.Tensor,
                   bias: Optional[torch.Tensor] = None, stride: int = 1) -> torch.Tensor:
    """Zero-padded convolution whose output width is ceil(W / stride)."""
    if x.dim() != 3:
        raise ShapeError(f"expected (batch, channels, frames), got {tuple(x.shape)}")
    if weight.dim() != 3 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"weight {tuple(weight.shape)} does not match input "
                         f"channels {x.shape[1]}")
    k = weight.shape[-1]
    if k % 2 == 0:
        raise ConfigError("kernel size must be odd")
    if stride not in (1, 2):
        raise ConfigError("stride must be 1 or 2")
    return F.conv1d(x, weight, bias, stride=stride, padding=k // 2)


def init_conv_(weight: torch.Tensor, bias: Optional[torch.Tensor] = None):
    fan_in = weight.shape[1] * weight.shape[2] if weight.dim() == 3 else weight.shape[1]
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        weight.uniform_(-math.sqrt(3.0) * bound, math.sqrt(3.0) * bound)
        if bias is not None:
            bias.uniform_(-bound, bound)


class Conv1dSame(nn.Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1, bias: bool = True):
        super().__init__()
        if kernel % 2 == 0:
            raise ConfigError("kernel size must be odd")
        if stride not in (1, 2):
            raise ConfigError("stride must be 1 or 2")
        self.stride = stride
        self.weight = nn.Parameter(torch.empty(c_out, c_in, kernel))
        self.bias = nn.Parameter(torch.empty(c_out)) if bias else None
        init_conv_(self.weight, self.bias)

    def forward(self, x):
        return conv1d_forward(x, self.weight, self.bias, self.stride)


def batch_norm(channels: int) -> nn.BatchNorm1d:
    return nn.BatchNorm1d(channels, eps=BN_EPS, momentum=BN_MOMENTUM)


class SqueezeExcite(nn.Module):
    """Channel gate: mean over frames -> FC(C, C/4) -> Mish -> FC(C/4, C) -> sigmoid."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        if channels % reduction:
            raise ConfigError(f"channels {channels} not divisible by {reduction}")
        self.reduce = nn.Linear(channels, channels // reduction)
        self.expand = nn.Linear(channels // reduction, channels)

    def gate(self, h):
        s = h.mean(dim=-1)
        return torch.sigmoid(self.expand(F.mish(self.reduce(s))))

    def forward(self, h):
        return h * self.gate(h).unsqueeze(-1)


def squeeze_excite(h: torch.Tensor, w1, b1, w2, b2) -> torch.Tensor:
    """Functional squeeze-and-excitation with explicit weights."""
    c = h.shape[1]
    if c % 4:
        raise ConfigError(f"channels {c} not divisible by 4")
    s = h.mean(dim=-1)
    g = torch.sigmoid(F.linear(F.mish(F.linear(s, w1, b1)), w2, b2))
    return h * g.unsqueeze(-1)


class FusedMBConv(nn.Module):
    """conv(k, stride) -> BN -> Mish -> SE -> [concat wide] -> pointwise conv -> BN.

    ``expand`` multiplies the channel count at the first convolution (1 or 2).
    ``cond_dim`` extra channels, broadcast over frames from a conditioning
    vector, are concatenated right before the pointwise convolution.
    """

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int,
                 expand: int = 1, cond_dim: int = 0):
        super().__init__()
        if expand not in (1, 2):
            raise ConfigError("expand must be 1 or 2")
        hidden = c_in * expand
        self.hidden = hidden
        self.cond_dim = cond_dim
        self.conv = Conv1dSame(c_in, hidden, kernel, stride, bias=False)
        self.bn1 = batch_norm(hidden)
        self.se = SqueezeExcite(hidden)
        self.project = Conv1dSame(hidden + cond_dim, c_out, 1, 1, bias=False)
        self.bn2 = batch_norm(c_out)

    def expand_features(self, h):
        return self.se(F.mish(self.bn1(self.conv(h))))

    def forward(self, h, cond: Optional[torch.Tensor] = None):
        z = self.expand_features(h)
        if self.cond_dim:
            if cond is None or cond.shape != (h.shape[0], self.cond_dim):
                raise ShapeError(f"block expects a ({h.shape[0]}, {self.cond_dim}) "
                                 "conditioning vector")
            z = torch.cat([z, cond.unsqueeze(-1).expand(-1, -1, z.shape[-1])], dim=1)
        return self.bn2(self.project(z))


def global_max_pool(h: torch.Tensor) -> torch.Tensor:
    if h.dim() != 3 or h.shape[-1] < 1:
        raise ShapeError(f"expected (batch, channels, frames>=1), got {tuple(h.shape)}")
    return h.amax(dim=-1)


def fc_stack(sizes, norm: bool = True, final_activation: bool = True) -> nn.Sequential:
    """Linear layers between consecutive ``sizes``, each followed by BN and Mish.

    Layers feeding a BN carry no bias (BN's shift replaces it).
    """
    layers = []
    n = len(sizes) - 1
    for i in range(n):
        activated = i < n - 1 or final_activation
        layers.append(nn.Linear(sizes[i], sizes[i + 1], bias=not (activated and norm)))
        if activated:
            if norm:
                layers.append(batch_norm(sizes[i + 1]))
            layers.append(nn.Mish())
    return nn.Sequential(*layers)


# ---------------------------------------------------------------------------
# parameter store


class ParameterStore:
    """Named view over a module's trainable parameters and BN running stats."""

    def __init__(self, module: nn.Module):
        self.module = module

    @property
    def params(self) -> dict:
        return dict(self.module.named_parameters())

    @property
    def buffers(self) -> dict:
        return dict(self.module.named_buffers())

    def names(self) -> list:
        return list(self.params)

    def zero_grad(self):
        for p in self.module.parameters():
            p.grad = torch.zeros_like(p)

    def backward(self, loss: torch.Tensor) -> dict:
        """Fill every parameter's gradient slot with d(loss)/d(param)."""
        if not isinstance(loss, torch.Tensor) or loss.grad_fn is None:
            raise StateError("loss was not produced by a recorded forward pass")
        if loss.numel() != 1:
            raise ShapeError("backward needs a scalar loss")
        self.zero_grad()
        loss.backward()
        return self.gradients()

    def gradients(self) -> dict:
        out = {}
        for name, p in self.module.named_parameters():
            out[name] = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
        return out

    def state(self) -> dict:
        return {k: v.detach().clone() for k, v in self.module.state_dict().items()}


CKPT_MAGIC = b"DMXCKPT\0"
CKPT_VERSION = 1


def save_checkpoint(path, module: nn.Module, meta: Optional[dict] = None) -> Path:
    """Write a versioned flat checkpoint.

    Layout: magic (8 bytes), version (u32 LE), header length (u32 LE), UTF-8
    JSON header, then the float32 LE payload of every entry in header order.
    The header lists ``{"name", "shape", "kind"}`` with kind ``param`` or
    ``buffer`` (BN running statistics) and carries free-form ``meta``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    param_names = {n for n, _ in module.named_parameters()}
    entries, blobs = [], []
    for name, t in module.state_dict().items():
        entries.append({"name": name, "shape": list(t.shape),
                        "kind": "param" if name in param_names else "buffer"})
        blobs.append(t.detach().cpu().to(torch.float32).contiguous().numpy().astype("<f4").tobytes())
    header = json.dumps({"entries": entries, "meta": meta or {}}).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)
    return path


def read_checkpoint(path):
    """Return ``(tensors, meta)`` from a checkpoint written by ``save_checkpoint``."""
    import numpy as np

    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CKPT_MAGIC:
        raise StateError(f"{path} is not a checkpoint")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != CKPT_VERSION:
        raise StateError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + hlen])
    offset = 16 + hlen
    tensors = {}
    for e in header["entries"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        tensors[e["name"]] = torch.from_numpy(arr.copy()).reshape(e["shape"])
    return tensors, header["meta"]


def load_into(module: nn.Module, tensors: dict):
    current = module.state_dict()
    if set(current) != set(tensors):
        raise ShapeError("checkpoint entries do not match the network")
    for name, t in current.items():
        if tuple(t.shape) != tuple(tensors[name].shape):
            raise ShapeError(f"{name}: checkpoint shape {tuple(tensors[name].shape)} "
                             f"!= network shape {tuple(t.shape)}")
    module.load_state_dict({k: v.to(current[k].dtype) for k, v in tensors.items()})
    return module
