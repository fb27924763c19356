from .experiment import ExperimentConfig, run_experiment
from .folds import FoldPlan, stratified_kfold
from .metrics import EvalReport, evaluate, roc_auc, welch_t
from .synthetic import SyntheticConfig, generate_synthetic

__all__ = ["EvalReport", "ExperimentConfig", "FoldPlan", "SyntheticConfig", "evaluate",
           "generate_synthetic", "roc_auc", "run_experiment", "stratified_kfold", "welch_t"]
