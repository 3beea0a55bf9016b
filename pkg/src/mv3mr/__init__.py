"""Multi-view vector-valued manifold regularization for semi-supervised multi-label learning."""

from .metrics import auc, average_precision_11pt, evaluate, ranking_loss
from .synth import SyntheticSpec, generate_synthetic
from .trainer import (
    Dataset,
    ModelState,
    TrainConfig,
    View,
    decision_function,
    fit,
    fit_uniform_baseline,
    predict,
    predict_dataset,
    transductive_scores,
)

__all__ = [
    "Dataset",
    "ModelState",
    "SyntheticSpec",
    "TrainConfig",
    "View",
    "auc",
    "average_precision_11pt",
    "decision_function",
    "evaluate",
    "fit",
    "fit_uniform_baseline",
    "generate_synthetic",
    "predict",
    "predict_dataset",
    "ranking_loss",
    "transductive_scores",
]
