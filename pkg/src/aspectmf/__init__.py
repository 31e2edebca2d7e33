"""Explainable collaborative filtering via aspect-space feature mapping.

A biased matrix-factorization recommender whose item embeddings are
simultaneously re-expressed in a basis of interpretable aspect
directions by an attention head, trained jointly on rating accuracy and
reconstruction quality with the interpretation gradients shielded away
from the base model.
"""

__version__ = "0.1.0"

from .baseline import LrBaseline, fit_lr_baseline
from .data import (
    AspectCatalog,
    DatasetSplit,
    FormatError,
    Interaction,
    UnknownGenre,
    dataset_stats,
    parse_ml100k,
    parse_ml1m,
    split,
)
from .evaluate import (
    EvalReport,
    InvalidArgs,
    SurrogateTruth,
    average_recall,
    evaluate_model,
    random_recall,
    random_report,
    rmse,
    simulate_random_recall,
    specific_score,
    surrogate_truth,
    top_bottom_recall,
)
from .linalg import (
    Basis,
    DegenerateBasis,
    SingularSystem,
    cosine,
    gram_schmidt,
    least_squares,
    project_onto_span,
)
from .model import AspectMF, AttentionResult, PreferenceVector
from .training import (
    EpochStats,
    LossBreakdown,
    NonFiniteGradient,
    TrainConfig,
    compute_loss,
    history_to_csv,
    sgd_step,
    train,
)

__all__ = [
    "__version__",
    "AspectCatalog",
    "AspectMF",
    "AttentionResult",
    "Basis",
    "DatasetSplit",
    "DegenerateBasis",
    "EpochStats",
    "EvalReport",
    "FormatError",
    "Interaction",
    "InvalidArgs",
    "LossBreakdown",
    "LrBaseline",
    "NonFiniteGradient",
    "PreferenceVector",
    "SingularSystem",
    "SurrogateTruth",
    "TrainConfig",
    "UnknownGenre",
    "average_recall",
    "compute_loss",
    "cosine",
    "dataset_stats",
    "evaluate_model",
    "fit_lr_baseline",
    "gram_schmidt",
    "history_to_csv",
    "least_squares",
    "parse_ml100k",
    "parse_ml1m",
    "project_onto_span",
    "random_recall",
    "random_report",
    "rmse",
    "sgd_step",
    "simulate_random_recall",
    "specific_score",
    "split",
    "surrogate_truth",
    "top_bottom_recall",
    "train",
]
