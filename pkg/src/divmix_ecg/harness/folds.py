"""Iterative stratification for multi-label k-fold splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass
class FoldPlan:
    k: int
    folds: list  # list of sorted index arrays

    def train_test(self, j: int):
        test = self.folds[j]
        train = np.sort(np.concatenate([f for i, f in enumerate(self.folds) if i != j]))
        return train, test


def stratified_kfold(labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Greedy iterative stratification with exact fold sizes.

    Samples carrying the label with the fewest unassigned positives are placed
    first, each into the fold that still most needs that label (ties: most
    remaining capacity, then random). Fold sizes are fixed to n // k or
    n // k + 1 up front.
    """
    y = np.asarray(labels).astype(bool)
    if y.ndim == 1:
        y = y[:, None]
    n, n_labels = y.shape
    if k < 2 or k > n:
        raise ConfigError(f"need 2 <= k <= n_samples, got k={k}, n={n}")
    rng = np.random.default_rng(seed)

    capacity = np.full(k, n // k, dtype=np.int64)
    capacity[: n % k] += 1
    need = np.outer(capacity / n, y.sum(axis=0)).astype(np.float64)  # (k, labels)
    assigned = np.full(n, -1, dtype=np.int64)
    remaining = y.copy()

    def place(i, label=None):
        open_folds = np.flatnonzero(capacity > 0)
        keys = [rng.random(len(open_folds)), capacity[open_folds]]
        if label is not None:
            keys.append(need[open_folds, label])
        j = open_folds[np.lexsort(keys)[-1]]
        assigned[i] = j
        capacity[j] -= 1
        need[j] -= y[i]
        remaining[i] = False

    while remaining.any():
        counts = remaining.sum(axis=0)
        counts = np.where(counts == 0, np.iinfo(np.int64).max, counts)
        label = int(np.argmin(counts))
        for i in rng.permutation(np.flatnonzero(remaining[:, label])):
            place(i, label)
    for i in rng.permutation(np.flatnonzero(assigned < 0)):
        place(i)
    return FoldPlan(k, [np.flatnonzero(assigned == j) for j in range(k)])
