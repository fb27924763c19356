"""Turn raw multichannel recordings into fixed-shape network inputs.

Pipeline per record: lead selection -> resampling -> per-lead min-max
normalization -> (at batch time) random crop / zero-pad to a fixed window.
Wide features (age, gender, RR statistics from lead II) are computed from
the raw-amplitude lead II before normalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import find_peaks

from .dataset import GENDERS, Record
from .errors import InvalidInput, MissingLead

TARGET_RATE = 500.0
WINDOW_S = 15.0
MIN_DURATION_S = 10.0

STANDARD_LEADS = ("I", "II", "III", "aVR", "aVL", "aVF",
                  "V1", "V2", "V3", "V4", "V5", "V6")


@dataclass(frozen=True)
class LeadCombo:
    name: int
    leads: tuple

    @property
    def n_channels(self) -> int:
        return len(self.leads)


LEAD_COMBOS = {
    2: LeadCombo(2, ("I", "II")),
    3: LeadCombo(3, ("I", "II", "V2")),
    4: LeadCombo(4, ("I", "II", "III", "V2")),
    6: LeadCombo(6, ("I", "II", "III", "aVR", "aVL", "aVF")),
    12: LeadCombo(12, STANDARD_LEADS),
}


def lead_combo(name) -> LeadCombo:
    try:
        return LEAD_COMBOS[int(name)]
    except (KeyError, ValueError):
        raise InvalidInput(f"unknown lead combination {name!r}; "
                           f"choose from {sorted(LEAD_COMBOS)}") from None


def resample(signal, src_rate: float, dst_rate: float = TARGET_RATE) -> np.ndarray:
    """Linearly interpolate every lead onto a ``dst_rate`` grid.

    Output length is ``round(n * dst_rate / src_rate)``. Output sample ``j``
    sits at time ``j / dst_rate``; times past the last input sample hold the
    last value.
    """
    sig = np.asarray(signal, dtype=np.float64)
    if sig.ndim == 1:
        sig = sig[None, :]
    if src_rate <= 0 or dst_rate <= 0:
        raise InvalidInput("sample rates must be positive")
    if sig.shape[0] == 0 or sig.shape[1] == 0:
        raise InvalidInput("cannot resample an empty signal")
    if src_rate == dst_rate:
        return sig.copy()
    n_in = sig.shape[1]
    n_out = int(round(n_in * dst_rate / src_rate))
    if n_out == 0:
        raise InvalidInput("signal too short for the requested rate")
    t_in = np.arange(n_in) / src_rate
    t_out = np.arange(n_out) / dst_rate
    return np.stack([np.interp(t_out, t_in, lead) for lead in sig])


def minmax_normalize(lead) -> np.ndarray:
    """Affinely map a lead so its minimum is -1 and its maximum +1.

    A constant lead maps to all zeros.
    """
    x = np.asarray(lead, dtype=np.float64)
    if x.size == 0:
        raise InvalidInput("cannot normalize an empty lead")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return 2.0 * (x - lo) / (hi - lo) - 1.0


def normalize_leads(signal) -> np.ndarray:
    sig = np.asarray(signal, dtype=np.float64)
    return np.stack([minmax_normalize(lead) for lead in sig])


def crop_pad(signal, rng: Optional[np.random.Generator] = None,
             rate: float = TARGET_RATE, window_s: float = WINDOW_S,
             min_duration_s: float = MIN_DURATION_S) -> np.ndarray:
    """Cut a contiguous segment and zero-pad it to ``window_s`` seconds.

    With an ``rng`` (training), a record longer than ``min_duration_s`` is
    shortened to a duration drawn from U(min_duration_s, min(tau, window_s))
    at a random start. Without one (evaluation) the leading window is kept
    as-is.
    """
    sig = np.asarray(signal)
    if sig.ndim == 1:
        sig = sig[None, :]
    win = int(round(window_s * rate))
    n = sig.shape[1]
    tau = n / rate
    if rng is not None and tau > min_duration_s:
        d = rng.uniform(min_duration_s, min(tau, window_s))
        length = min(int(round(d * rate)), n, win)
        start = int(rng.integers(0, n - length + 1))
    else:
        length = min(n, win)
        start = 0
    out = np.zeros((sig.shape[0], win), dtype=sig.dtype)
    out[:, :length] = sig[:, start:start + length]
    return out


def select_leads(record: Record, combo: LeadCombo) -> np.ndarray:
    rows = []
    for name in combo.leads:
        try:
            rows.append(record.lead_names.index(name))
        except ValueError:
            raise MissingLead(name) from None
    return record.signal[rows]


# ---------------------------------------------------------------------------
# wide features

N_RR_STATS = 5
WIDE_DIM = 1 + len(GENDERS) + N_RR_STATS


@dataclass
class WideFeatures:
    age_norm: float
    gender_onehot: np.ndarray
    rr_stats: np.ndarray  # mean RR, std RR, min RR, max RR (s), heart rate (bpm)

    def to_array(self) -> np.ndarray:
        return np.concatenate([[self.age_norm], self.gender_onehot, self.rr_stats])


def detect_peaks(lead, rate: float, rel_height: float = 0.6,
                 refractory_s: float = 0.3) -> np.ndarray:
    """Indices of local maxima above ``rel_height * max(lead)``.

    Peaks closer than the refractory period are thinned, keeping the taller.
    """
    x = np.asarray(lead, dtype=np.float64)
    peak = x.max() if x.size else 0.0
    if not np.isfinite(peak) or peak <= 0:
        return np.zeros(0, dtype=np.int64)
    distance = max(1, int(round(refractory_s * rate)))
    idx, _ = find_peaks(x, height=rel_height * peak, distance=distance)
    return idx


def rr_statistics(peaks, rate: float) -> np.ndarray:
    if len(peaks) < 2:
        return np.zeros(N_RR_STATS)
    rr = np.diff(np.asarray(peaks)) / rate
    mean = rr.mean()
    return np.array([mean, rr.std(), rr.min(), rr.max(), 60.0 / mean])


def extract_wide_features(record: Record, lead: str = "II") -> WideFeatures:
    if record.age is None or not np.isfinite(record.age):
        age_norm = 0.5
    else:
        age_norm = float(np.clip(record.age / 100.0, 0.0, 1.0))
    gender = np.zeros(len(GENDERS))
    gender[GENDERS.index(record.gender)] = 1.0
    if lead in record.lead_names:
        x = record.signal[record.lead_names.index(lead)]
        rr = rr_statistics(detect_peaks(x, record.sample_rate), record.sample_rate)
    else:
        rr = np.zeros(N_RR_STATS)
    return WideFeatures(age_norm, gender, rr)


def prepare_record(record: Record, combo: LeadCombo,
                   rate: float = TARGET_RATE) -> Record:
    """Select leads, resample and normalize; attach wide features."""
    wide = record.wide
    if wide is None:
        wide = extract_wide_features(record).to_array()
    x = select_leads(record, combo)
    x = normalize_leads(resample(x, record.sample_rate, rate))
    return Record(
        id=record.id, signal=x, sample_rate=rate, lead_names=list(combo.leads),
        labels=record.labels, age=record.age, gender=record.gender,
        true_labels=record.true_labels, wide=np.asarray(wide, dtype=np.float64),
        meta=dict(record.meta),
    )


def prepare_dataset(records, combo: LeadCombo, rate: float = TARGET_RATE) -> list:
    return [prepare_record(r, combo, rate) for r in records]


class SignalBank:
    """Prepared records held in memory; cuts fixed-window batches on demand.

    ``batch`` applies the random training crop, ``eval_batch`` the
    deterministic one.
    """

    def __init__(self, records, rate: float = TARGET_RATE, window_s: float = WINDOW_S,
                 min_duration_s: float = MIN_DURATION_S):
        if not records:
            raise InvalidInput("empty dataset")
        self.records = list(records)
        self.rate = rate
        self.window_s = window_s
        self.min_duration_s = min_duration_s
        self.ids = [r.id for r in self.records]
        self.signals = [np.asarray(r.signal, dtype=np.float32) for r in self.records]
        self.wide = np.stack([np.asarray(r.wide, dtype=np.float32) for r in self.records])
        self.labels = np.stack([r.labels for r in self.records]).astype(np.float32)
        if all(r.true_labels is not None for r in self.records):
            self.true_labels = np.stack([r.true_labels for r in self.records]).astype(np.float32)
        else:
            self.true_labels = None
        channels = {s.shape[0] for s in self.signals}
        if len(channels) != 1:
            raise InvalidInput("records have differing channel counts")
        self.n_channels = channels.pop()

    def __len__(self):
        return len(self.records)

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    @property
    def window(self) -> int:
        return int(round(self.window_s * self.rate))

    def subset(self, indices) -> "SignalBank":
        return SignalBank([self.records[i] for i in indices], self.rate, self.window_s,
                          self.min_duration_s)

    def _crop(self, i, rng):
        return crop_pad(self.signals[i], rng, self.rate, self.window_s, self.min_duration_s)

    def batch(self, indices, rng: Optional[np.random.Generator] = None):
        x = np.stack([self._crop(i, rng) for i in indices])
        return x, self.wide[indices], self.labels[indices]

    def eval_batch(self, indices):
        return self.batch(indices, None)
