import numpy as np

from divmix_ecg.config import TrainConfig
from divmix_ecg.harness.synthetic import SyntheticConfig, generate_synthetic
from divmix_ecg.model import ModelConfig
from divmix_ecg.signal_prep import LEAD_COMBOS, SignalBank, prepare_dataset

RATE = 50.0


def tiny_bank(n=24, n_labels=3, noise=0.0, seed=0):
    syn = SyntheticConfig(n_samples=n, n_labels=n_labels, n_leads=2, sample_rate=RATE,
                          min_duration_s=4, max_duration_s=8, freq_range=(1.0, 20.0),
                          noise_rate=noise, seed=seed)
    recs = prepare_dataset(generate_synthetic(syn), LEAD_COMBOS[2], RATE)
    return SignalBank(recs, rate=RATE, window_s=6, min_duration_s=5)


def tiny_model(n_labels=3):
    return ModelConfig(n_labels=n_labels, width_mult=0.125, wide_dim=8, mlp_hidden=16)


def tiny_train(**kw):
    base = dict(epochs=4, batch_size=8, baseline_batch_size=8, warmup_epochs=2, swa_epochs=2,
                target_rate=RATE, window_s=6, min_duration_s=5, bn_refresh_samples=16, seed=3)
    base.update(kw)
    return TrainConfig(**base)
