"""Confusion-matrix metrics: per-class precision/recall/F1 and macro-F1.

Zero denominators (a class never predicted, never present, or with zero
precision+recall) resolve to 0 throughout.
"""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int) -> np.ndarray:
    """Counts matrix with true classes as rows and predicted as columns."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[t, p] += 1
    return cm


def precision_recall(cm: np.ndarray, class_index: int) -> Tuple[float, float]:
    tp = float(cm[class_index, class_index])
    fp = float(cm[:, class_index].sum()) - tp
    fn = float(cm[class_index, :].sum()) - tp
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall


def f1_from_pr(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def per_class_f1(cm: np.ndarray) -> list[float]:
    return [f1_from_pr(*precision_recall(cm, i)) for i in range(cm.shape[0])]


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean of the per-class F1 scores."""
    if cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    if (cm < 0).any():
        raise ValueError("confusion matrix must be non-negative")
    return float(np.mean(per_class_f1(cm)))
