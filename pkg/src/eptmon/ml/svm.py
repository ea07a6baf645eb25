"""One-vs-rest soft-margin SVM with an RBF kernel, trained by SMO.

The binary solver updates the maximal-violating pair each iteration and
stops when the KKT gap falls below the tolerance, so the offset never
enters the optimization (it is recovered from the non-bound multipliers at
the end). Pair selection is argmax/argmin over numpy arrays: training is
fully deterministic.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .base import ModelConfig

KKT_TOL = 1e-3


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    d2 = np.maximum(
        (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * A @ B.T, 0.0
    )
    return np.exp(-gamma * d2)


def resolve_gamma(config: ModelConfig, X: np.ndarray) -> float:
    """Explicit gamma, or 1 / (n_features * mean per-feature variance)."""
    if config.svm_gamma is not None:
        return config.svm_gamma
    spread = float(X.var(axis=0).mean())
    if spread <= 0.0:
        return 1.0
    return 1.0 / (X.shape[1] * spread)


class SmoNonConvergence(UserWarning):
    pass


def _smo(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    tol: float = KKT_TOL,
    max_iter: Optional[int] = None,
) -> Tuple[np.ndarray, float]:
    """Solve the binary dual for labels y in {-1, +1}. Returns (alpha, b).

    Maintains u_i = sum_j alpha_j y_j K_ij; at the optimum every non-bound
    point satisfies u_i + b = y_i, which is where b comes from.
    """
    n = len(y)
    if max_iter is None:
        max_iter = max(20_000, 100 * n)
    alpha = np.zeros(n)
    u = np.zeros(n)
    converged = False

    def snap(a: float) -> float:
        # Keep multipliers exactly on their bounds; roundoff that leaks a
        # multiplier outside [0, C] corrupts the I_up / I_low sets.
        if a < 1e-12:
            return 0.0
        if a > C - 1e-12:
            return C
        return a

    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        val = y - u
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        up_vals = np.where(up, val, -np.inf)
        low_vals = np.where(low, val, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        if up_vals[i] - low_vals[j] < tol:
            converged = True
            break
        ai, aj = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        if yi != yj:
            box_lo, box_hi = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            box_lo, box_hi = max(0.0, ai + aj - C), min(C, ai + aj)
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta > -1e-12:
            eta = -1e-12  # duplicate rows: fall back to a maximal clipped step
        dE = (u[i] - yi) - (u[j] - yj)
        aj_new = snap(float(np.clip(aj - yj * dE / eta, box_lo, box_hi)))
        ai_new = snap(ai + yi * yj * (aj - aj_new))
        if abs(aj_new - aj) < 1e-14 and abs(ai_new - ai) < 1e-14:
            break  # maximal violating pair cannot move: numerically stuck
        u += yi * (ai_new - ai) * K[:, i] + yj * (aj_new - aj) * K[:, j]
        alpha[i] = ai_new
        alpha[j] = aj_new
    if not converged:
        warnings.warn(
            f"SMO stopped with a KKT gap above {tol} after {iterations} iterations",
            SmoNonConvergence,
        )
    val = y - u
    non_bound = (alpha > 0.0) & (alpha < C)
    if non_bound.any():
        b = float(val[non_bound].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = float(np.where(up, val, -np.inf).max()) if up.any() else 0.0
        lo = float(np.where(low, val, np.inf).min()) if low.any() else 0.0
        b = (hi + lo) / 2.0
    return alpha, b


@dataclass
class SvmOvrModel:
    X: np.ndarray                       # training rows (standardized upstream)
    coef: np.ndarray                    # (n_classes, n) alpha_i * y_i per class
    intercept: np.ndarray               # (n_classes,)
    gamma: float
    n_classes: int

    def decision_values(self, queries: np.ndarray) -> np.ndarray:
        Kq = rbf_kernel(np.atleast_2d(queries), self.X, self.gamma)
        return Kq @ self.coef.T + self.intercept


def train_svm_ovr(
    config: ModelConfig, X: np.ndarray, y: np.ndarray, n_classes: int | None = None
) -> SvmOvrModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    counts = np.bincount(y, minlength=n_classes)
    if (counts < 2).any():
        lacking = [int(c) for c in np.flatnonzero(counts < 2)]
        raise ValueError(f"every class needs >= 2 rows; classes {lacking} are short")
    gamma = resolve_gamma(config, X)
    K = rbf_kernel(X, X, gamma)
    coef = np.zeros((n_classes, len(X)))
    intercept = np.zeros(n_classes)
    for c in range(n_classes):
        y_bin = np.where(y == c, 1.0, -1.0)
        alpha, b = _smo(K, y_bin, config.svm_c)
        coef[c] = alpha * y_bin
        intercept[c] = b
    return SvmOvrModel(X, coef, intercept, gamma, n_classes)


def predict_svm(model: SvmOvrModel, queries: np.ndarray) -> np.ndarray:
    """Argmax of the per-class decision values; ties go to the smaller index."""
    return model.decision_values(queries).argmax(axis=1)
