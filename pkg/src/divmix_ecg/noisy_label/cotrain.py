"""Warmup / baseline training and the twin-network co-training loop."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from .. import nn_core
from ..config import TrainConfig
from ..errors import ConfigError, DegenerateLosses
from ..model import ModelConfig, build
from ..swa_ensemble import EnsembleSet, SwaAccumulator, finalize_swa, refresh_batches
from .gmm import SamplePartition, fit_gmm2
from .refine import (bce_per_sample, coguess_noisy, manifold_mixup, objective,
                     refine_clean, sample_mix_lambda)

log = logging.getLogger(__name__)


def _tensor(a):
    return torch.as_tensor(a, dtype=torch.float32)


def network_seed(seed: int, m: int) -> int:
    return (int(seed) * 7919 + m) % (2 ** 31)


def make_network(model_config: ModelConfig, n_channels: int, seed: int, m: int):
    return build(model_config, n_channels, seed=network_seed(seed, m))


def make_optimizer(net, cfg: TrainConfig):
    return torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=cfg.betas,
                            weight_decay=cfg.weight_decay)


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches; a trailing batch of one sample is dropped (BN)."""
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        idx = order[i:i + batch_size]
        if len(idx) >= 2:
            yield np.sort(idx)


@torch.no_grad()
def per_sample_loss(net, bank, batch_size: int = 256) -> np.ndarray:
    """Label-averaged BCE of every sample, network in inference mode."""
    was_training = net.training
    net.eval()
    out = []
    for i in range(0, len(bank), batch_size):
        idx = np.arange(i, min(i + batch_size, len(bank)))
        x, wide, y = bank.eval_batch(idx)
        prob = torch.sigmoid(net(_tensor(x), _tensor(wide))).double().numpy()
        out.append(bce_per_sample(prob, y))
    net.train(was_training)
    return np.concatenate(out)


def supervised_epoch(net, opt, bank, batch_size: int, rng: np.random.Generator) -> float:
    """One epoch of plain label-averaged BCE (warmup and baseline)."""
    net.train()
    total, count = 0.0, 0
    for idx in batches(len(bank), batch_size, rng):
        x, wide, y = bank.batch(idx, rng)
        loss = F.binary_cross_entropy_with_logits(net(_tensor(x), _tensor(wide)), _tensor(y))
        opt.zero_grad()
        loss.backward()
        opt.step()
        total += loss.item() * len(idx)
        count += len(idx)
    return total / max(count, 1)


@torch.no_grad()
def _eval_prob(net, x, wide):
    was_training = net.training
    net.eval()
    p = torch.sigmoid(net(x, wide))
    net.train(was_training)
    return p


def dividemix_epoch(net, opt, partner, bank, partition: SamplePartition,
                    cfg: TrainConfig, rng: np.random.Generator) -> dict:
    """Train ``net`` for one epoch on the split produced by ``partner``.

    Clean samples get refined labels from ``net`` alone; noisy samples get
    co-guessed labels from ``net`` and ``partner`` (both in inference mode).
    Every sample's pooled hidden vector is mixed with a random partner from
    the same batch; the pair is routed to L_x or L_u by the sample's own side.
    """
    net.train()
    lam_all = _tensor(partition.lambda_gmm)
    clean_all = torch.as_tensor(partition.is_clean)
    stats = {"loss": 0.0, "l_x": 0.0, "l_u": 0.0, "n": 0}
    for idx in batches(len(bank), cfg.batch_size, rng):
        x, wide, y = bank.batch(idx, rng)
        x, wide, y = _tensor(x), _tensor(wide), _tensor(y)
        is_clean = clean_all[idx]
        noisy = ~is_clean
        with torch.no_grad():
            pred = _eval_prob(net, x, wide)
            target = torch.empty_like(y)
            target[is_clean] = refine_clean(y[is_clean], pred[is_clean], lam_all[idx][is_clean])
            if noisy.any():
                pred_partner = _eval_prob(partner, x[noisy], wide[noisy])
                target[noisy] = coguess_noisy(pred[noisy], pred_partner, y[noisy], cfg.lambda_n)
        lam = sample_mix_lambda(rng, cfg.mixup_alpha)
        perm = torch.as_tensor(rng.permutation(len(idx)))
        h = net.features(x, wide)
        h_mix, u_mix = manifold_mixup(h, h[perm], target, target[perm], lam)
        logits = net.head(h_mix)
        loss, l_x, l_u = objective(logits[is_clean], u_mix[is_clean],
                                   logits[noisy], u_mix[noisy])
        opt.zero_grad()
        loss.backward()
        opt.step()
        stats["loss"] += loss.item() * len(idx)
        stats["l_x"] += l_x.item() * len(idx)
        stats["l_u"] += l_u.item() * len(idx)
        stats["n"] += len(idx)
    n = max(stats.pop("n"), 1)
    return {k: v / n for k, v in stats.items()}


def divide(net, bank, cfg: TrainConfig) -> SamplePartition:
    losses = per_sample_loss(net, bank, cfg.eval_batch_size)
    try:
        return fit_gmm2(losses, cfg.em_iters, cfg.p_clean)
    except DegenerateLosses:
        return SamplePartition.all_clean(len(bank))


@dataclass
class CoTrainState:
    nets: list
    optimizers: list
    epoch: int = 0
    warmup_epochs: int = 2
    # partitions[e] = (split from net 1, split from net 2) computed at the start of epoch e
    partitions: dict = field(default_factory=dict)
    swa: list = field(default_factory=lambda: [SwaAccumulator(), SwaAccumulator()])
    swa_nets: Optional[list] = None
    metrics: list = field(default_factory=list)

    def ensemble(self) -> EnsembleSet:
        if self.swa_nets is None:
            raise ConfigError("no SWA models; the run averaged zero epochs")
        return EnsembleSet((self.nets[0], self.nets[1], self.swa_nets[0], self.swa_nets[1]))

    @property
    def last_partitions(self):
        return self.partitions[max(self.partitions)] if self.partitions else None


def _rngs(seed: int):
    return [np.random.default_rng([int(seed), m]) for m in (1, 2)]


def _checkpoint_meta(model_config, n_channels, extra=None):
    meta = {"model_config": model_config.to_dict(), "n_channels": n_channels}
    meta.update(extra or {})
    return meta


def train_baseline(cfg: TrainConfig, bank, model_config: ModelConfig,
                   batch_size: Optional[int] = None):
    """Single network, plain BCE for ``cfg.epochs`` epochs."""
    batch_size = batch_size or cfg.baseline_batch_size
    if len(bank) < batch_size:
        raise ConfigError(f"dataset of {len(bank)} samples is smaller than one batch")
    net = make_network(model_config, bank.n_channels, cfg.seed, 1)
    opt = make_optimizer(net, cfg)
    rng = _rngs(cfg.seed)[0]
    for epoch in range(1, cfg.epochs + 1):
        loss = supervised_epoch(net, opt, bank, batch_size, rng)
        log.info("baseline epoch %d loss %.4f", epoch, loss)
    net.eval()
    return net


def train(cfg: TrainConfig, bank, model_config: ModelConfig, out_dir=None,
          leads=None, save_epochs: bool = True) -> CoTrainState:
    """Co-train two networks: warmup, then DivideMix epochs; SWA over the tail.

    If ``out_dir`` is given it receives per-epoch checkpoints (when
    ``save_epochs``), per-epoch partition dumps, ``metrics.jsonl`` and the
    four ensemble member checkpoints.
    """
    if len(bank) < cfg.batch_size:
        raise ConfigError(f"dataset of {len(bank)} samples is smaller than one batch")
    nets, opts = [], []
    for m in (1, 2):
        net = make_network(model_config, bank.n_channels, cfg.seed, m)
        nets.append(net)
        opts.append(make_optimizer(net, cfg))
    rngs = _rngs(cfg.seed)
    state = CoTrainState(nets, opts, warmup_epochs=cfg.warmup_epochs)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.jsonl").write_text("")
    meta = _checkpoint_meta(model_config, bank.n_channels, {
        "leads": None if leads is None else leads.name,
        "rate": cfg.target_rate, "window_s": cfg.window_s,
        "min_duration_s": cfg.min_duration_s, "threshold": cfg.threshold,
    })

    for epoch in range(1, cfg.epochs + 1):
        row = {"epoch": epoch}
        if epoch <= cfg.warmup_epochs:
            row["phase"] = "warmup"
            for m in range(2):
                row[f"loss{m + 1}"] = supervised_epoch(nets[m], opts[m], bank,
                                                       cfg.batch_size, rngs[m])
        else:
            row["phase"] = "dividemix"
            parts = (divide(nets[0], bank, cfg), divide(nets[1], bank, cfg))
            state.partitions[epoch] = parts
            snapshots = [copy.deepcopy(n).eval() for n in nets]
            for m in range(2):
                stats = dividemix_epoch(nets[m], opts[m], snapshots[1 - m], bank,
                                        parts[1 - m], cfg, rngs[m])
                row.update({f"{k}{m + 1}": v for k, v in stats.items()})
                row[f"clean_frac{m + 1}"] = parts[m].clean_fraction
            if out is not None:
                dump = {bank.ids[i]: [float(parts[0].lambda_gmm[i]), float(parts[1].lambda_gmm[i])]
                        for i in range(len(bank))}
                (out / f"partition_epoch{epoch:03d}.json").write_text(json.dumps(dump))
        if epoch >= cfg.swa_start:
            for m in range(2):
                state.swa[m].absorb(nets[m])
        state.epoch = epoch
        state.metrics.append(row)
        log.info("epoch %s", row)
        if out is not None:
            with open(out / "metrics.jsonl", "a") as fh:
                fh.write(json.dumps(row) + "\n")
            if save_epochs:
                for m in range(2):
                    nn_core.save_checkpoint(out / f"epoch{epoch:03d}_net{m + 1}.ckpt",
                                            nets[m], meta)

    for net in nets:
        net.eval()
    if state.swa[0].count:
        state.swa_nets = [
            finalize_swa(state.swa[m], nets[m],
                         refresh_batches(bank, cfg.bn_refresh_samples, cfg.eval_batch_size))
            for m in range(2)
        ]
    if out is not None:
        for m in range(2):
            nn_core.save_checkpoint(out / f"net{m + 1}.ckpt", nets[m], meta)
            if state.swa_nets is not None:
                nn_core.save_checkpoint(out / f"swa{m + 1}.ckpt", state.swa_nets[m], meta)
    return state


def final_partitions(state: CoTrainState, bank, cfg: TrainConfig):
    """Splits the two final networks would hand each other for another epoch."""
    return divide(state.nets[0], bank, cfg), divide(state.nets[1], bank, cfg)
