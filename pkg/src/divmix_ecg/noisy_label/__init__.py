"""Multi-label DivideMix: loss-based division, label refinement, mixup, co-training."""

from .cotrain import (CoTrainState, dividemix_epoch, final_partitions, per_sample_loss,
                      supervised_epoch, train, train_baseline)
from .gmm import SamplePartition, fit_gmm2
from .refine import (bce_per_sample, coguess_noisy, manifold_mixup, objective,
                     refine_clean, sample_mix_lambda)

__all__ = [
    "CoTrainState", "SamplePartition", "bce_per_sample", "coguess_noisy",
    "dividemix_epoch", "final_partitions", "fit_gmm2", "manifold_mixup", "objective",
    "per_sample_loss", "refine_clean", "sample_mix_lambda", "supervised_epoch", "train",
    "train_baseline",
]
