"""Data valuation with Beta(alpha, beta) semivalues.

Weight schemes, exact and Monte-Carlo engines, and downstream evaluation
tasks.
"""

__version__ = "0.1.0"

from .data import Dataset, NoiseRecord, flip_labels, generate, generate_splits, load_csv, save_csv
from .exact import ValueVector, marginal_exact, marginal_profiles, semivalue_exact, shapley_efficiency_check
from .game import TableGame, TrainingConfig, UtilityCache, UtilityGame, UtilitySpec, evaluate_utility, train_logistic
from .mc import McConfig, ValueReport, gelman_rubin, mc_estimate, mc_estimate_many
from .tasks import detect_noisy, point_curve, snr_scan, subsample_train_eval
from .weights import BetaParams, WeightScheme, argmax_cardinality, beta_weight, make_scheme

__all__ = [
    "BetaParams",
    "Dataset",
    "McConfig",
    "NoiseRecord",
    "TableGame",
    "TrainingConfig",
    "UtilityCache",
    "UtilityGame",
    "UtilitySpec",
    "ValueReport",
    "ValueVector",
    "WeightScheme",
    "argmax_cardinality",
    "beta_weight",
    "detect_noisy",
    "evaluate_utility",
    "flip_labels",
    "gelman_rubin",
    "generate",
    "generate_splits",
    "load_csv",
    "make_scheme",
    "marginal_exact",
    "marginal_profiles",
    "mc_estimate",
    "mc_estimate_many",
    "point_curve",
    "save_csv",
    "semivalue_exact",
    "shapley_efficiency_check",
    "snr_scan",
    "subsample_train_eval",
    "train_logistic",
]
