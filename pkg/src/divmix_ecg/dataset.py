"""Record type and the on-disk dataset format.

A dataset is a directory holding ``records.jsonl`` (one JSON object per
record) and one ``<id>.bin`` file per record with the signal stored as
little-endian float32, lead-major (all samples of the first lead, then the
second, ...). Per-record metadata keys:

    id, sample_rate, lead_names, n_samples, age, gender, labels

and optionally ``true_labels`` (clean labels kept for evaluation) and
``wide`` (precomputed wide features written by ``prep``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import InvalidInput

GENDERS = ("male", "female", "unknown")
RECORDS_FILE = "records.jsonl"


@dataclass
class Record:
    id: str
    signal: np.ndarray  # (n_leads, n_samples)
    sample_rate: float
    lead_names: list
    labels: np.ndarray
    age: Optional[float] = None
    gender: str = "unknown"
    true_labels: Optional[np.ndarray] = None
    wide: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.signal = np.asarray(self.signal)
        if self.signal.ndim == 1:
            self.signal = self.signal[None, :]
        if self.signal.ndim != 2:
            raise InvalidInput(f"signal must be (leads, samples), got {self.signal.shape}")
        if self.sample_rate <= 0:
            raise InvalidInput(f"sample_rate must be positive, got {self.sample_rate}")
        if len(self.lead_names) != self.signal.shape[0]:
            raise InvalidInput("lead_names does not match the number of signal rows")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or not np.isin(self.labels, (0, 1)).all():
            raise InvalidInput("labels must be a multi-hot 0/1 vector")
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
            if self.true_labels.shape != self.labels.shape:
                raise InvalidInput("true_labels and labels differ in length")
        if self.gender not in GENDERS:
            raise InvalidInput(f"gender must be one of {GENDERS}, got {self.gender!r}")

    @property
    def n_labels(self) -> int:
        return self.labels.shape[0]

    @property
    def duration(self) -> float:
        return self.signal.shape[1] / self.sample_rate


def write_dataset(path, records: Iterable[Record]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / RECORDS_FILE, "w") as fh:
        for rec in records:
            sig = np.ascontiguousarray(rec.signal, dtype="<f4")
            sig.tofile(path / f"{rec.id}.bin")
            row = {
                "id": rec.id,
                "sample_rate": float(rec.sample_rate),
                "lead_names": list(rec.lead_names),
                "n_samples": int(sig.shape[1]),
                "age": None if rec.age is None else float(rec.age),
                "gender": rec.gender,
                "labels": [int(v) for v in rec.labels],
            }
            if rec.true_labels is not None:
                row["true_labels"] = [int(v) for v in rec.true_labels]
            if rec.wide is not None:
                row["wide"] = [float(v) for v in rec.wide]
            row.update(rec.meta)
            fh.write(json.dumps(row) + "\n")
    return path


def read_dataset(path) -> list:
    path = Path(path)
    index = path / RECORDS_FILE
    if not index.exists():
        raise InvalidInput(f"{index} not found")
    records = []
    known = {"id", "sample_rate", "lead_names", "n_samples", "age", "gender",
             "labels", "true_labels", "wide"}
    with open(index) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            n_leads = len(row["lead_names"])
            data = np.fromfile(path / f"{row['id']}.bin", dtype="<f4")
            if data.size != n_leads * row["n_samples"]:
                raise InvalidInput(f"{row['id']}.bin has {data.size} values, "
                                   f"expected {n_leads} x {row['n_samples']}")
            records.append(Record(
                id=row["id"],
                signal=data.reshape(n_leads, row["n_samples"]).astype(np.float64),
                sample_rate=row["sample_rate"],
                lead_names=row["lead_names"],
                labels=row["labels"],
                age=row.get("age"),
                gender=row.get("gender", "unknown"),
                true_labels=row.get("true_labels"),
                wide=None if row.get("wide") is None else np.asarray(row["wide"]),
                meta={k: v for k, v in row.items() if k not in known},
            ))
    return records
