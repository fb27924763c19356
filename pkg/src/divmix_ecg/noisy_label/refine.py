"""Label refinement, manifold mixup and the combined clean/noisy objective."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

PROB_CLAMP = 1e-7


def bce_per_sample(prob, target) -> np.ndarray:
    """Binary cross-entropy averaged over labels, one value per sample."""
    p = np.clip(np.asarray(prob, dtype=np.float64), PROB_CLAMP, 1 - PROB_CLAMP)
    y = np.asarray(target, dtype=np.float64)
    if p.ndim == 1:
        p, y = p[None], y[None]
    return -(y * np.log(p) + (1 - y) * np.log(1 - p)).mean(axis=1)


def _column(lam, like):
    if isinstance(like, torch.Tensor):
        lam = torch.as_tensor(lam, dtype=like.dtype)
    else:
        lam = np.asarray(lam, dtype=np.float64)
    return lam.reshape(-1, 1) if lam.ndim == 1 else lam


def refine_clean(labels, pred, lambda_gmm):
    """Clean-sample target: lambda_gmm * labels + (1 - lambda_gmm) * pred.

    ``pred`` comes from the network being trained.
    """
    lam = _column(lambda_gmm, pred)
    return lam * labels + (1 - lam) * pred


def coguess_noisy(pred_1, pred_2, labels, lambda_n: float = 0.5):
    """Noisy-sample target: both networks' mean prediction blended with the label."""
    return lambda_n * (pred_1 + pred_2) / 2.0 + (1 - lambda_n) * labels


def sample_mix_lambda(rng: np.random.Generator, alpha: float = 4.0) -> float:
    lam = float(rng.beta(alpha, alpha))
    return max(lam, 1.0 - lam)


def manifold_mixup(h_cl, h_nl, u_cl, u_nl, lambda_mix: float):
    """Interpolate pooled hidden vectors and their targets with one coefficient."""
    if lambda_mix == 1.0:
        return h_cl, u_cl
    if lambda_mix == 0.0:
        return h_nl, u_nl
    return (lambda_mix * h_cl + (1 - lambda_mix) * h_nl,
            lambda_mix * u_cl + (1 - lambda_mix) * u_nl)


def objective(logits_clean, target_clean, logits_noisy, target_noisy):
    """L_x + L_u.

    L_x: BCE between sigmoid(logits) and soft targets for clean-routed pairs.
    L_u: mean squared error between sigmoid(logits) and targets for
    noisy-routed pairs. Returns ``(total, l_x, l_u)``; an empty side adds 0.
    """
    ref = logits_clean if logits_clean.numel() else logits_noisy
    zero = ref.new_zeros(())
    l_x = (F.binary_cross_entropy_with_logits(logits_clean, target_clean)
           if logits_clean.numel() else zero)
    l_u = (((torch.sigmoid(logits_noisy) - target_noisy) ** 2).mean()
           if logits_noisy.numel() else zero)
    return l_x + l_u, l_x, l_u
