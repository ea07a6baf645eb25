"""Random forest of CART trees: Gini splits, bootstrap bags, sqrt(d)
feature sampling, depth cap, majority vote. Deterministic given the seed."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .base import ModelConfig


@dataclass
class _Node:
    prediction: int = -1           # leaf payload; -1 while internal
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _majority(y: np.ndarray, n_classes: int) -> int:
    # np.argmax returns the first maximum: ties go to the smaller class index.
    return int(np.argmax(np.bincount(y, minlength=n_classes)))


def _best_split(
    X: np.ndarray, y: np.ndarray, candidates: np.ndarray, n_classes: int
) -> Optional[Tuple[int, float, float]]:
    """Minimal weighted-Gini split over the candidate features.

    Returns (feature, threshold, cost) or None when no candidate feature has
    two distinct values. Equal costs resolve to the earlier candidate, so the
    search is deterministic given the candidate order.
    """
    m = len(y)
    onehot = np.zeros((m, n_classes))
    onehot[np.arange(m), y] = 1.0
    best: Optional[Tuple[int, float, float]] = None
    for f in candidates:
        xs_order = np.argsort(X[:, f], kind="stable")
        xs = X[xs_order, f]
        boundaries = np.flatnonzero(xs[:-1] < xs[1:])
        if len(boundaries) == 0:
            continue
        left_counts = np.cumsum(onehot[xs_order], axis=0)[boundaries]
        n_left = boundaries + 1.0
        n_right = m - n_left
        gini_left = 1.0 - ((left_counts / n_left[:, None]) ** 2).sum(axis=1)
        right_counts = onehot.sum(axis=0) - left_counts
        gini_right = 1.0 - ((right_counts / n_right[:, None]) ** 2).sum(axis=1)
        cost = (n_left * gini_left + n_right * gini_right) / m
        at = int(np.argmin(cost))
        if best is None or cost[at] < best[2]:
            b = boundaries[at]
            best = (int(f), float((xs[b] + xs[b + 1]) / 2.0), float(cost[at]))
    return best


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    depth: int,
    max_depth: int,
    n_candidates: int,
    n_classes: int,
    rng: np.random.Generator,
) -> _Node:
    node = _Node(prediction=_majority(y, n_classes))
    if depth >= max_depth or len(y) < 2 or (y == y[0]).all():
        return node
    candidates = rng.choice(X.shape[1], size=min(n_candidates, X.shape[1]), replace=False)
    split = _best_split(X, y, candidates, n_classes)
    if split is None:
        return node
    feature, threshold, _cost = split
    mask = X[:, feature] <= threshold
    node.feature = feature
    node.threshold = threshold
    node.left = _grow(X[mask], y[mask], depth + 1, max_depth, n_candidates, n_classes, rng)
    node.right = _grow(X[~mask], y[~mask], depth + 1, max_depth, n_candidates, n_classes, rng)
    return node


def _predict_tree(root: _Node, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X), dtype=np.int64)
    for i, row in enumerate(X):
        node = root
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        out[i] = node.prediction
    return out


@dataclass
class ForestModel:
    trees: List[_Node]
    n_classes: int


def train_rf(config: ModelConfig, X: np.ndarray, y: np.ndarray, n_classes: int | None = None) -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot train a forest on empty data")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    n_candidates = max(1, int(np.floor(np.sqrt(X.shape[1]))))
    trees = []
    for child in np.random.SeedSequence(config.seed).spawn(config.rf_trees):
        rng = np.random.default_rng(child)
        bag = rng.integers(0, len(X), size=len(X))
        trees.append(
            _grow(X[bag], y[bag], 0, config.rf_max_depth, n_candidates, n_classes, rng)
        )
    return ForestModel(trees, n_classes)


def predict_rf(model: ForestModel, queries: np.ndarray) -> np.ndarray:
    """Majority vote across trees; ties go to the smaller class index."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    votes = np.zeros((len(queries), model.n_classes), dtype=np.int64)
    for tree in model.trees:
        pred = _predict_tree(tree, queries)
        votes[np.arange(len(queries)), pred] += 1
    return votes.argmax(axis=1)
