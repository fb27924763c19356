"""Synthetic multichannel recordings with controllable label noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import GENDERS, Record
from ..errors import ConfigError
from ..signal_prep import STANDARD_LEADS

WAVEFORMS = ("sinusoid", "beat_template")
TEMPLATE_DELAY_S = 0.05  # template onset after each beat


@dataclass
class SyntheticConfig:
    """Generator settings.

    ``waveform`` picks how a positive label shows up in the signal:
    ``"sinusoid"`` adds a sinusoid at the label's frequency (frequencies are
    spread evenly over ``freq_range``), ``"beat_template"`` adds the label's
    own short waveform after every beat, like a morphology change.
    """

    n_samples: int = 1000
    n_labels: int = 24
    n_leads: int = 12
    sample_rate: float = 500.0
    min_duration_s: float = 6.0
    max_duration_s: float = 20.0
    prevalence: float = 0.25
    waveform: str = "sinusoid"
    amplitude: tuple = (0.5, 1.0)  # label component amplitude range
    freq_range: tuple = (1.0, 40.0)  # Hz, sinusoid waveform
    template_s: float = 0.4  # seconds, beat_template waveform
    heart_rate: tuple = (50.0, 110.0)  # bpm
    noise_std: float = 0.1
    noise_rate: float = 0.0  # per-bit flip probability
    missing_age: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.amplitude = tuple(self.amplitude)
        self.freq_range = tuple(self.freq_range)
        self.heart_rate = tuple(self.heart_rate)
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError("noise_rate must lie in [0, 1)")
        if self.n_labels < 2:
            raise ConfigError("n_labels must be >= 2")
        if not 1 <= self.n_leads <= len(STANDARD_LEADS):
            raise ConfigError(f"n_leads must lie in [1, {len(STANDARD_LEADS)}]")
        if self.n_samples < 1 or self.sample_rate <= 0:
            raise ConfigError("n_samples >= 1 and sample_rate > 0 required")
        if not 0 < self.min_duration_s <= self.max_duration_s:
            raise ConfigError("invalid duration range")
        if self.waveform not in WAVEFORMS:
            raise ConfigError(f"waveform must be one of {WAVEFORMS}")
        if self.waveform == "sinusoid" and self.freq_range[1] >= self.sample_rate / 2:
            raise ConfigError("label frequencies must stay below Nyquist")
        if self.waveform == "beat_template" and self.template_s * self.sample_rate < 4:
            raise ConfigError("template_s too short for sample_rate")

    def label_frequencies(self) -> np.ndarray:
        return np.linspace(self.freq_range[0], self.freq_range[1], self.n_labels)

    def templates(self) -> np.ndarray:
        """One smooth unit-peak waveform per label, fixed by ``seed``.

        Waveforms are orthogonalized when the template has at least as many
        samples as there are labels, so that labels stay distinguishable.
        """
        rng = np.random.default_rng([self.seed, 7])
        n = int(round(self.template_s * self.sample_rate))
        t = np.linspace(0.0, 1.0, n)
        window = np.sin(np.pi * t) ** 2
        n_harm = self.n_labels + 4
        basis = np.stack([window * np.sin(np.pi * (j + 1) * t) for j in range(n_harm)], axis=1)
        waves = basis @ rng.standard_normal((n_harm, self.n_labels))
        if n >= self.n_labels:
            waves, _ = np.linalg.qr(waves)
        waves = waves.T
        return waves / np.abs(waves).max(axis=1, keepdims=True)


def _beat_times(duration: float, rate_hz: float, rng) -> np.ndarray:
    """Beat onsets at 1/rate_hz spacing with 5% RR jitter and a random phase."""
    rr = 1.0 / rate_hz
    n_beats = int(duration / rr) + 2
    return np.cumsum(rr * (1 + 0.05 * rng.standard_normal(n_beats))) - rr * rng.uniform()


def _pulse_train(t, beats, width=0.02):
    """Narrow unit Gaussian pulses centred on ``beats``."""
    out = np.zeros_like(t)
    for b in beats:
        lo, hi = np.searchsorted(t, [b - 5 * width, b + 5 * width])
        out[lo:hi] += np.exp(-0.5 * ((t[lo:hi] - b) / width) ** 2)
    return out


def _beat_locked(n: int, template: np.ndarray, starts) -> np.ndarray:
    """Copies of ``template`` starting at each sample index in ``starts``, clipped to n."""
    out = np.zeros(n)
    for start in starts:
        lo, hi = max(start, 0), min(start + len(template), n)
        if lo < hi:
            out[lo:hi] += template[lo - start:hi - start]
    return out


def flip_labels(labels: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    if rate == 0:
        return labels.copy()
    flips = rng.random(labels.shape) < rate
    return np.where(flips, 1 - labels, labels)


def generate_synthetic(cfg: SyntheticConfig) -> list:
    """Records whose labels switch on label-specific periodic components.

    Each record is a beat train plus, for every true positive label, that
    label's component (see ``SyntheticConfig.waveform``) with random
    amplitude and per-lead gain, plus white noise. ``labels`` holds the
    noisy copy (independent bit flips at ``noise_rate``), ``true_labels``
    the clean one.
    """
    rng = np.random.default_rng(cfg.seed)
    freqs = cfg.label_frequencies()
    templates = cfg.templates() if cfg.waveform == "beat_template" else None
    leads = list(STANDARD_LEADS[:cfg.n_leads])
    width = len(str(cfg.n_samples - 1))
    records = []
    for i in range(cfg.n_samples):
        dur = rng.uniform(cfg.min_duration_s, cfg.max_duration_s)
        n = int(round(dur * cfg.sample_rate))
        t = np.arange(n) / cfg.sample_rate
        true = (rng.random(cfg.n_labels) < cfg.prevalence).astype(np.int64)
        hr = rng.uniform(*cfg.heart_rate) / 60.0
        onsets = _beat_times(dur, hr, rng)
        starts = np.round((onsets + TEMPLATE_DELAY_S) * cfg.sample_rate).astype(int)
        gains = rng.uniform(0.5, 1.0, size=cfg.n_leads)
        gains[min(1, cfg.n_leads - 1)] = 1.0
        sig = gains[:, None] * _pulse_train(t, onsets)[None, :]
        for label in np.flatnonzero(true):
            amp = rng.uniform(*cfg.amplitude)
            lead_gain = rng.uniform(0.5, 1.0, size=cfg.n_leads)
            if templates is None:
                wave = np.sin(2 * np.pi * freqs[label] * t + rng.uniform(0, 2 * np.pi))
            else:
                wave = _beat_locked(n, templates[label], starts)
            sig = sig + (amp * lead_gain)[:, None] * wave[None, :]
        sig = sig + cfg.noise_std * rng.standard_normal(sig.shape)
        age = None if rng.random() < cfg.missing_age else float(rng.uniform(20, 90))
        gender = GENDERS[int(rng.integers(0, 2))]
        noisy = flip_labels(true, cfg.noise_rate, rng)
        records.append(Record(
            id=f"syn{i:0{width}d}", signal=sig, sample_rate=cfg.sample_rate,
            lead_names=leads, labels=noisy, true_labels=true, age=age, gender=gender,
        ))
    return records
