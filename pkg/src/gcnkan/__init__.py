"""Graph classification of region-level cohort data with spectral graph
convolutions and learned grid activations, plus the supporting training,
evaluation, and interpretation pipeline."""

from .cohort import (Cohort, CohortTable, default_roi_names, load_cohort,
                     save_cohort, select_task)
from .errors import (CohortParseError, CompatibilityError, ConfigError,
                     DegenerateDegreeError, DegenerateFeatureError,
                     EvaluationError, GcnKanError, NonFiniteGradientError,
                     ShapeError, TapeUsageError, UndefinedMetricError)
from .graph import RoiGraph, build_adjacency, normalize_propagator
from .interpret import importance_report, roi_saliency, unit_importance
from .kernels import available_backends, use_backend
from .metrics import (auc_roc, auc_trapezoid, confusion, evaluate_scores,
                      f1_score, roc_points)
from .model import ModelParams, init_params, model_forward, predict_scores
from .synth import SynthSpec, generate_cohort, generate_group_cohort
from .training import (Adam, EarlyStopper, PlateauScheduler, TrainConfig,
                       adam_step, cross_entropy, run_cross_validation,
                       train_one_fold)
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "Adam", "Cohort", "CohortParseError", "CohortTable",
    "CompatibilityError", "ConfigError", "DegenerateDegreeError",
    "DegenerateFeatureError", "EarlyStopper", "EvaluationError",
    "GcnKanError", "ModelParams", "NonFiniteGradientError",
    "PlateauScheduler", "RoiGraph", "ShapeError", "SynthSpec",
    "TapeUsageError", "TrainConfig", "UndefinedMetricError", "adam_step",
    "auc_roc", "auc_trapezoid", "available_backends", "build_adjacency",
    "confusion", "cross_entropy", "default_roi_names", "evaluate_scores",
    "f1_score", "generate_cohort", "generate_group_cohort",
    "importance_report", "init_params", "load_checkpoint", "load_cohort",
    "model_forward", "normalize_propagator", "predict_scores",
    "roc_points", "roi_saliency", "run_cross_validation", "save_checkpoint",
    "save_cohort", "select_task", "train_one_fold", "unit_importance",
    "use_backend",
]
