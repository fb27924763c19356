"""Stochastic weight averaging and the four-model posterior-mean ensemble."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
import torch
import torch.nn as nn

from . import nn_core
from .errors import ShapeError, StateError
from .model import DEFAULT_THRESHOLD, ModelConfig, Prediction, build, predict_proba

MEMBER_FILES = ("net1.ckpt", "net2.ckpt", "swa1.ckpt", "swa2.ckpt")


class SwaAccumulator:
    """Running mean of trainable parameters over absorbed checkpoints."""

    def __init__(self, window: Optional[tuple] = None):
        self.mean: Optional[dict] = None
        self.count = 0
        self.window = window

    @staticmethod
    def _params(source) -> dict:
        if isinstance(source, nn.Module):
            return {k: v.detach() for k, v in source.named_parameters()}
        return dict(source)

    def absorb(self, checkpoint) -> "SwaAccumulator":
        params = self._params(checkpoint)
        if self.mean is None:
            self.mean = {k: v.to(torch.float64).clone() for k, v in params.items()}
            self.count = 1
            return self
        if set(params) != set(self.mean):
            raise ShapeError("checkpoint parameters differ from the accumulated ones")
        for k, v in params.items():
            if v.shape != self.mean[k].shape:
                raise ShapeError(f"{k}: shape {tuple(v.shape)} != {tuple(self.mean[k].shape)}")
        self.count += 1
        for k, v in params.items():
            self.mean[k] += (v.to(torch.float64) - self.mean[k]) / self.count
        return self


def swa_absorb(acc: SwaAccumulator, checkpoint) -> SwaAccumulator:
    return acc.absorb(checkpoint)


def _bn_layers(net):
    return [m for m in net.modules() if isinstance(m, nn.modules.batchnorm._BatchNorm)]


@torch.no_grad()
def refresh_bn(net: nn.Module, batches: Iterable, forward: Optional[Callable] = None):
    """Recompute BN running statistics as a cumulative average over ``batches``."""
    layers = _bn_layers(net)
    if not layers:
        return net
    forward = forward or (lambda n, b: n(*b))
    momenta = [m.momentum for m in layers]
    for m in layers:
        m.reset_running_stats()
        m.momentum = None
    was_training = net.training
    net.train()
    for b in batches:
        forward(net, b)
    for m, mom in zip(layers, momenta):
        m.momentum = mom
    net.train(was_training)
    return net


def finalize_swa(acc: SwaAccumulator, template: nn.Module, batches: Iterable = (),
                 forward: Optional[Callable] = None) -> nn.Module:
    """Network with the averaged weights and BN statistics refreshed on ``batches``."""
    if acc.count == 0:
        raise StateError("no checkpoint has been absorbed")
    net = copy.deepcopy(template)
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name not in acc.mean or p.shape != acc.mean[name].shape:
                raise ShapeError(f"template does not match accumulated parameter {name}")
            p.copy_(acc.mean[name].to(p.dtype))
    refresh_bn(net, batches, forward)
    net.eval()
    return net


def refresh_batches(bank, n_samples: int = 2048, batch_size: int = 256, dtype=torch.float32):
    """Deterministic evaluation crops of the first ``n_samples`` records."""
    n = min(len(bank), n_samples)
    for i in range(0, n, batch_size):
        idx = np.arange(i, min(i + batch_size, n))
        if len(idx) < 2:
            continue
        x, wide, _ = bank.eval_batch(idx)
        yield torch.as_tensor(x, dtype=dtype), torch.as_tensor(wide, dtype=dtype)


@dataclass
class EnsembleSet:
    members: tuple

    def __post_init__(self):
        self.members = tuple(self.members)
        if len(self.members) != 4:
            raise ShapeError(f"an ensemble has exactly 4 members, got {len(self.members)}")
        ref = {k: tuple(v.shape) for k, v in self.members[0].state_dict().items()}
        for m in self.members[1:]:
            if {k: tuple(v.shape) for k, v in m.state_dict().items()} != ref:
                raise ShapeError("ensemble members differ in architecture")


def ensemble_proba(members, x, wide, batch_size: int = 256) -> np.ndarray:
    """Mean sigmoid probability over an EnsembleSet or a sequence of networks.

    Member outputs are summed in sorted order so the result does not depend
    on the order of the members.
    """
    if isinstance(members, EnsembleSet):
        members = members.members
    probs = np.stack([predict_proba(m, x, wide, batch_size) for m in members])
    return np.sort(probs, axis=0).sum(axis=0) / len(probs)


def ensemble_predict(ensemble: EnsembleSet, x, wide,
                     threshold: float = DEFAULT_THRESHOLD) -> Prediction:
    """Mean of the members' sigmoid probabilities, thresholded."""
    return Prediction(ensemble_proba(ensemble.members, x, wide), threshold=threshold)


def load_network(path):
    tensors, meta = nn_core.read_checkpoint(path)
    net = build(ModelConfig.from_dict(meta["model_config"]), meta["n_channels"])
    nn_core.load_into(net, tensors)
    net.eval()
    return net, meta


def load_ensemble(run_dir) -> tuple:
    run_dir = Path(run_dir)
    nets, metas = [], []
    for name in MEMBER_FILES:
        path = run_dir / name
        if not path.exists():
            raise StateError(f"{path} missing; is the run complete?")
        net, meta = load_network(path)
        nets.append(net)
        metas.append(meta)
    return EnsembleSet(tuple(nets)), metas[0]
