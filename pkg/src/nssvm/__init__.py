"""Sparse-support linear SVM trained by a Newton method with hard-thresholded active sets."""

from .adaptive import AdaptiveConfig, PROFILES, default_s0, profile_config, solve_adaptive
from .dataset import (
    Dataset,
    FeatureScaler,
    SplitDataset,
    binarize_labels,
    gen_gaussian_2d,
    load_libsvm,
    parse_libsvm,
    scale_features,
    split_train_test,
)
from .estimator import NSSVMClassifier
from .linear import DualIterate, Penalties, dual_objective, grad_g, recover_primal
from .metrics import BenchReport, BenchSpec, evaluate, run_trials
from .newton import FitResult, SolverConfig, check_eta_stationarity, solve_fixed_s

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "BenchReport",
    "BenchSpec",
    "Dataset",
    "DualIterate",
    "FeatureScaler",
    "FitResult",
    "NSSVMClassifier",
    "PROFILES",
    "Penalties",
    "SolverConfig",
    "SplitDataset",
    "binarize_labels",
    "check_eta_stationarity",
    "default_s0",
    "dual_objective",
    "evaluate",
    "gen_gaussian_2d",
    "grad_g",
    "load_libsvm",
    "parse_libsvm",
    "profile_config",
    "recover_primal",
    "run_trials",
    "scale_features",
    "solve_adaptive",
    "solve_fixed_s",
    "split_train_test",
]
