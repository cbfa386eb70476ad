"""Augmentation, downstream predictors, metrics and the evaluation harness."""

from .augment import AugmentedDataset, build_augmented
from .experiment import EvalReport, ExperimentSpec, benchmark_spec, run_experiment
from .metrics import apr, auc
from .predictors import Predictor, PredictorConfig, fit_predictor
from .toy import reproduce_toy

__all__ = [
    "AugmentedDataset",
    "EvalReport",
    "ExperimentSpec",
    "Predictor",
    "PredictorConfig",
    "apr",
    "auc",
    "benchmark_spec",
    "build_augmented",
    "fit_predictor",
    "reproduce_toy",
    "run_experiment",
]
