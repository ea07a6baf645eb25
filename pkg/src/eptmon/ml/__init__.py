"""Classifiers, metrics and the cross-validation protocol."""
from .base import (
    Dataset,
    ModelConfig,
    ModelKind,
    Scaler,
    Task,
    collapse_to_binary,
    dataset_from_vectors,
    fit_scaler,
    standardize,
)
from .evaluate import (
    ClassMetrics,
    EvalReport,
    assign_folds,
    confusion_to_csv,
    cross_validate,
    fit_model,
    predict_model,
    report_to_csv,
    report_to_text,
    sweep_to_csv,
    window_sweep,
)
from .forest import ForestModel, predict_rf, train_rf
from .knn import KnnModel, predict_knn, train_knn
from .metrics import confusion_matrix, f1_from_pr, macro_f1, per_class_f1, precision_recall
from .persist import FittedPipeline, load_model, save_model
from .svm import SmoNonConvergence, SvmOvrModel, predict_svm, rbf_kernel, resolve_gamma, train_svm_ovr

__all__ = [
    "ClassMetrics",
    "Dataset",
    "EvalReport",
    "FittedPipeline",
    "ForestModel",
    "KnnModel",
    "ModelConfig",
    "ModelKind",
    "Scaler",
    "SmoNonConvergence",
    "SvmOvrModel",
    "Task",
    "assign_folds",
    "collapse_to_binary",
    "confusion_matrix",
    "confusion_to_csv",
    "cross_validate",
    "dataset_from_vectors",
    "f1_from_pr",
    "fit_model",
    "fit_scaler",
    "load_model",
    "macro_f1",
    "per_class_f1",
    "precision_recall",
    "predict_knn",
    "predict_model",
    "predict_rf",
    "predict_svm",
    "rbf_kernel",
    "report_to_csv",
    "report_to_text",
    "resolve_gamma",
    "save_model",
    "standardize",
    "sweep_to_csv",
    "train_knn",
    "train_rf",
    "train_svm_ovr",
    "window_sweep",
]
