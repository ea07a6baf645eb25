"""k-nearest-neighbors classifier (brute-force Euclidean)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import ModelConfig


@dataclass(frozen=True)
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int
    n_classes: int


def train_knn(config: ModelConfig, X: np.ndarray, y: np.ndarray, n_classes: int | None = None) -> KnnModel:
    if len(X) == 0:
        raise ValueError("cannot train kNN on empty data")
    if len(X) < config.knn_k:
        raise ValueError(f"need at least k={config.knn_k} training rows, got {len(X)}")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    return KnnModel(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64),
                    config.knn_k, n_classes)


def predict_knn(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    """Majority label among the k nearest training rows per query.

    Vote ties break to the tied class with the smaller mean neighbor
    distance, then to the smaller class index. Prediction does not depend on
    the order of the training rows (assuming distance ties at the k-th
    neighbor boundary do not occur, which holds for continuous features).
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    # Squared distances via the expansion trick; clip the tiny negatives it produces.
    d2 = np.maximum(
        (queries**2).sum(axis=1)[:, None]
        + (model.X**2).sum(axis=1)[None, :]
        - 2.0 * queries @ model.X.T,
        0.0,
    )
    out = np.empty(len(queries), dtype=np.int64)
    for qi in range(len(queries)):
        row = d2[qi]
        nearest = np.argsort(row, kind="stable")[: model.k]
        votes = np.bincount(model.y[nearest], minlength=model.n_classes)
        top = votes.max()
        tied = np.flatnonzero(votes == top)
        if len(tied) == 1:
            out[qi] = tied[0]
            continue
        means = [row[nearest[model.y[nearest] == c]].mean() for c in tied]
        out[qi] = tied[int(np.argmin(means))]
    return out
