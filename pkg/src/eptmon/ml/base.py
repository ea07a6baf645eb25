"""Shared model-side types: configs, datasets, standardization."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from ..features import FeatureVector
from ..trace import ClassLabel


class ModelKind(Enum):
    RANDOM_FOREST = "rf"
    SVM_OVR = "svm"
    KNN = "knn"


class Task(Enum):
    EIGHT_CLASS = "8class"
    TWO_CLASS = "2class"


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind
    rf_trees: int = 10
    rf_max_depth: int = 10
    knn_k: int = 5
    svm_c: float = 1.0
    svm_gamma: Optional[float] = None  # None: 1 / (n_features * mean feature variance)
    seed: int = 42

    def __post_init__(self):
        if self.rf_trees < 1:
            raise ValueError("rf_trees must be >= 1")
        if self.rf_max_depth < 1:
            raise ValueError("rf_max_depth must be >= 1")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.svm_c <= 0:
            raise ValueError("svm_c must be positive")
        if self.svm_gamma is not None and self.svm_gamma <= 0:
            raise ValueError("svm_gamma must be positive when given")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer labels and per-trial grouping."""
    X: np.ndarray                 # (n, d) float64
    y: np.ndarray                 # (n,) int64 indices into class_names
    groups: np.ndarray            # (n,) int64, one id per source trial
    class_names: Tuple[str, ...]
    task: Task = Task.EIGHT_CLASS

    def __post_init__(self):
        if len(self.X) != len(self.y) or len(self.X) != len(self.groups):
            raise ValueError("X, y and groups must have matching lengths")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def dataset_from_vectors(vectors: Sequence[FeatureVector], task: Task = Task.EIGHT_CLASS) -> Dataset:
    """Build a dataset from extracted feature vectors.

    Class indices follow ClassLabel order, restricted to the labels that
    actually appear. Group ids are unique per (label, trial) pair.
    """
    if not vectors:
        raise ValueError("no feature vectors given")
    present = sorted({vec.label for vec in vectors})
    index = {label: i for i, label in enumerate(present)}
    X = np.array([vec.values for vec in vectors], dtype=np.float64)
    y = np.array([index[vec.label] for vec in vectors], dtype=np.int64)
    groups = np.array([int(vec.label) * 10_000 + vec.trial_id for vec in vectors], dtype=np.int64)
    ds = Dataset(X, y, groups, tuple(label.name for label in present), Task.EIGHT_CLASS)
    if task == Task.TWO_CLASS:
        return collapse_to_binary(ds)
    return ds


def collapse_to_binary(dataset: Dataset) -> Dataset:
    """Map the eight-class labels to benign (0) / malicious (1).

    Features, row order and grouping are untouched.
    """
    if dataset.task == Task.TWO_CLASS:
        raise ValueError("dataset is already two-class")
    malicious = np.array(
        [ClassLabel.from_name(name).is_malicious for name in dataset.class_names], dtype=bool
    )
    y = malicious[dataset.y].astype(np.int64)
    return Dataset(dataset.X, y, dataset.groups, ("benign", "malicious"), Task.TWO_CLASS)


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray  # population stddev; zeros mark train-constant features

    def transform(self, X: np.ndarray) -> np.ndarray:
        safe = np.where(self.std == 0.0, 1.0, self.std)
        out = (X - self.mean) / safe
        out[:, self.std == 0.0] = 0.0
        return out


def fit_scaler(X: np.ndarray) -> Scaler:
    if len(X) == 0:
        raise ValueError("cannot fit a scaler on an empty split")
    return Scaler(X.mean(axis=0), X.std(axis=0))


def standardize(train_X: np.ndarray, apply_X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Scaler]:
    """Per-feature z-score fit on the training split only.

    Features that are constant in training map to exactly 0 in both splits.
    """
    scaler = fit_scaler(train_X)
    return scaler.transform(train_X), scaler.transform(apply_X), scaler
