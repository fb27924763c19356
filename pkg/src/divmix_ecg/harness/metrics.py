"""Thresholded multi-label metrics and Welch's t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..errors import AlignmentError, DegenerateVariance, InvalidInput


@dataclass
class EvalReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    auc: np.ndarray
    macro_f1: float
    macro_auc: float
    threshold: float
    no_positive: list = field(default_factory=list)  # labels with zero true positives in the set
    single_class: list = field(default_factory=list)  # labels whose AUC is undefined (reported 0.5)

    def to_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "macro_auc": self.macro_auc,
            "f1": [float(v) for v in self.f1],
            "precision": [float(v) for v in self.precision],
            "recall": [float(v) for v in self.recall],
            "auc": [float(v) for v in self.auc],
            "threshold": self.threshold,
            "no_positive": list(self.no_positive),
        }


def _ratio(num, den):
    return np.where(den > 0, num / np.where(den > 0, den, 1), 0.0)


def roc_auc(scores, truth) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties averaged)."""
    truth = np.asarray(truth).astype(bool)
    n_pos, n_neg = truth.sum(), (~truth).sum()
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = stats.rankdata(scores)
    return float((ranks[truth].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _align(probs, truth, pred_ids, true_ids):
    if pred_ids is None and true_ids is None:
        if probs.shape != truth.shape:
            raise AlignmentError(f"prediction shape {probs.shape} != label shape {truth.shape}")
        return probs, truth
    if pred_ids is None or true_ids is None:
        raise AlignmentError("ids must be given for both predictions and labels")
    pred_ids, true_ids = list(pred_ids), list(true_ids)
    if len(set(pred_ids)) != len(pred_ids) or sorted(pred_ids) != sorted(true_ids):
        raise AlignmentError("prediction ids and label ids differ")
    pos = {sid: i for i, sid in enumerate(true_ids)}
    order = [pos[sid] for sid in pred_ids]
    return probs, truth[order]


def evaluate(probs, truth, threshold: float = 0.3, pred_ids=None, true_ids=None) -> EvalReport:
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if probs.ndim == 1:
        probs = probs[:, None]
    if truth.ndim == 1:
        truth = truth[:, None]
    probs, truth = _align(probs, truth, pred_ids, true_ids)
    if probs.shape != truth.shape:
        raise AlignmentError(f"prediction shape {probs.shape} != label shape {truth.shape}")
    if probs.shape[0] == 0:
        raise InvalidInput("nothing to evaluate")
    decided = probs >= threshold
    tp = (decided & truth).sum(axis=0)
    fp = (decided & ~truth).sum(axis=0)
    fn = (~decided & truth).sum(axis=0)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    no_positive = [int(j) for j in np.flatnonzero(truth.sum(axis=0) == 0)]
    f1[no_positive] = 0.0
    auc = np.array([roc_auc(probs[:, j], truth[:, j]) for j in range(probs.shape[1])])
    single = [int(j) for j in np.flatnonzero(np.isnan(auc))]
    auc[single] = 0.5
    return EvalReport(precision, recall, f1, auc, float(f1.mean()), float(auc.mean()),
                      threshold, no_positive, single)


def welch_t(a, b):
    """Welch's unequal-variance t-test: ``(t, dof, two-sided p)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InvalidInput("each sample needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0:
        raise DegenerateVariance("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    dof = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), dof)))
    return float(t), float(dof), p
