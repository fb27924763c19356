"""Two-component 1D Gaussian mixture fitted by EM on per-sample losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..errors import DegenerateLosses, InvalidInput

VAR_FLOOR = 1e-6


@dataclass
class SamplePartition:
    lambda_gmm: np.ndarray  # clean-component posterior per sample
    is_clean: np.ndarray
    means: np.ndarray  # ascending; index 0 is the clean component
    variances: np.ndarray
    weights: np.ndarray
    log_likelihood: np.ndarray  # after init and after every EM iteration

    @property
    def clean_fraction(self) -> float:
        return float(self.is_clean.mean())

    @classmethod
    def all_clean(cls, n: int) -> "SamplePartition":
        nan2 = np.full(2, np.nan)
        return cls(np.ones(n), np.ones(n, dtype=bool), nan2, nan2, np.array([1.0, 0.0]),
                   np.zeros(0))


def _log_joint(x, means, variances, weights):
    x = x[:, None]
    return (np.log(weights) - 0.5 * np.log(2 * np.pi * variances)
            - 0.5 * (x - means) ** 2 / variances)


def normalize_losses(losses) -> np.ndarray:
    x = np.asarray(losses, dtype=np.float64).ravel()
    if x.size < 2:
        raise InvalidInput("need at least two losses to fit a mixture")
    if not np.isfinite(x).all():
        raise InvalidInput("losses must be finite")
    lo, hi = x.min(), x.max()
    if hi == lo:
        raise DegenerateLosses("all per-sample losses are identical")
    return (x - lo) / (hi - lo)


def fit_gmm2(losses, em_iters: int = 10, p_clean: float = 0.5,
             var_floor: float = VAR_FLOOR) -> SamplePartition:
    """Split samples into clean / noisy by a 2-component mixture on their losses.

    Losses are min-max scaled to [0, 1], then exactly ``em_iters`` EM steps
    run from means at the 10th/90th percentiles, shared sample variance and
    equal weights. The clean probability of a sample is the posterior of the
    lower-mean component, evaluated with the loss clipped to the span between
    the two means; inside that span the posterior is non-increasing in the
    loss, so clipping makes it monotone everywhere.
    """
    x = normalize_losses(losses)
    means = np.percentile(x, [10, 90])
    if means[1] - means[0] < 1e-6:
        means = np.array([x.min(), x.max()])
    variances = np.full(2, max(x.var(), var_floor))
    weights = np.full(2, 0.5)

    def loglik(m, v, w):
        return float(logsumexp(_log_joint(x, m, v, w), axis=1).sum())

    history = [loglik(means, variances, weights)]
    for _ in range(em_iters):
        lj = _log_joint(x, means, variances, weights)
        resp = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
        nk = resp.sum(axis=0) + 1e-12
        means = (resp * x[:, None]).sum(axis=0) / nk
        variances = np.maximum((resp * (x[:, None] - means) ** 2).sum(axis=0) / nk, var_floor)
        weights = nk / nk.sum()
        history.append(loglik(means, variances, weights))

    order = np.argsort(means, kind="stable")
    means, variances, weights = means[order], variances[order], weights[order]
    xc = np.clip(x, means[0], means[1])
    lj = _log_joint(xc, means, variances, weights)
    lam = np.exp(lj[:, 0] - logsumexp(lj, axis=1))
    lam = np.clip(lam, 0.0, 1.0)
    return SamplePartition(lam, lam >= p_clean, means, variances, weights, np.asarray(history))
