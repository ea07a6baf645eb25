"""Stratified k-fold cross-validation, evaluation reports, window sweep."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..features import WindowConfig, extract_windows
from ..trace import Trace
from .base import Dataset, ModelConfig, ModelKind, Task, dataset_from_vectors, standardize
from .forest import ForestModel, train_rf, predict_rf
from .knn import KnnModel, train_knn, predict_knn
from .metrics import confusion_matrix, macro_f1, per_class_f1, precision_recall
from .svm import SvmOvrModel, train_svm_ovr, predict_svm


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    model: ModelKind
    task: Task
    folds: int
    seed: int
    grouped: bool
    class_names: Tuple[str, ...]
    confusion: np.ndarray
    per_class: Tuple[ClassMetrics, ...]
    macro_f1: float
    fold_macro_f1: Tuple[float, ...]


def fit_model(config: ModelConfig, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int):
    cfg = replace(config, seed=seed)
    if config.kind == ModelKind.RANDOM_FOREST:
        return train_rf(cfg, X, y, n_classes)
    if config.kind == ModelKind.SVM_OVR:
        return train_svm_ovr(cfg, X, y, n_classes)
    return train_knn(cfg, X, y, n_classes)


def predict_model(model, queries: np.ndarray) -> np.ndarray:
    if isinstance(model, ForestModel):
        return predict_rf(model, queries)
    if isinstance(model, SvmOvrModel):
        return predict_svm(model, queries)
    if isinstance(model, KnnModel):
        return predict_knn(model, queries)
    raise TypeError(f"not a trained model: {type(model).__name__}")


def assign_folds(
    dataset: Dataset, folds: int, seed: int, group_by_trial: bool = False
) -> np.ndarray:
    """Stratified fold index per row.

    Vector-level stratification shuffles each class's rows and deals them
    round-robin. Trial-grouped assignment deals whole trials instead, so no
    trial straddles the train/test boundary; with fewer trials than folds a
    class is simply absent from some test folds.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed & 0xFFFF_FFFF_FFFF_FFFF, folds)))
    fold_of = np.full(len(dataset.y), -1, dtype=np.int64)
    for c in range(dataset.n_classes):
        rows = np.flatnonzero(dataset.y == c)
        if len(rows) == 0:
            continue
        if group_by_trial:
            trials = np.unique(dataset.groups[rows])
            rng.shuffle(trials)
            for i, trial in enumerate(trials):
                fold_of[rows[dataset.groups[rows] == trial]] = i % folds
        else:
            if len(rows) < folds:
                raise ValueError(
                    f"class {dataset.class_names[c]} has {len(rows)} rows, "
                    f"fewer than {folds} folds"
                )
            rng.shuffle(rows)
            for i, row in enumerate(rows):
                fold_of[row] = i % folds
    return fold_of


def cross_validate(
    config: ModelConfig,
    dataset: Dataset,
    folds: int = 10,
    seed: Optional[int] = None,
    group_by_trial: bool = False,
) -> EvalReport:
    """Seeded stratified k-fold evaluation.

    Per fold: standardize on the training split, fit, predict the held-out
    split. The confusion matrix accumulates over folds; fold-level macro-F1
    values are kept for the report. Deterministic given (dataset, config,
    seed), bit-for-bit.
    """
    if seed is None:
        seed = config.seed
    fold_of = assign_folds(dataset, folds, seed, group_by_trial)
    n_classes = dataset.n_classes
    total_cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    fold_scores: List[float] = []
    for k in range(folds):
        test_mask = fold_of == k
        if not test_mask.any():
            continue
        train_X, test_X, _ = standardize(dataset.X[~test_mask], dataset.X[test_mask])
        model = fit_model(config, train_X, dataset.y[~test_mask], n_classes, seed=seed + k)
        pred = predict_model(model, test_X)
        cm = confusion_matrix(dataset.y[test_mask], pred, n_classes)
        total_cm += cm
        fold_scores.append(macro_f1(cm))
    per_class = []
    f1s = per_class_f1(total_cm)
    for i, name in enumerate(dataset.class_names):
        precision, recall = precision_recall(total_cm, i)
        per_class.append(
            ClassMetrics(name, precision, recall, f1s[i], int(total_cm[i, :].sum()))
        )
    return EvalReport(
        model=config.kind,
        task=dataset.task,
        folds=folds,
        seed=seed,
        grouped=group_by_trial,
        class_names=dataset.class_names,
        confusion=total_cm,
        per_class=tuple(per_class),
        macro_f1=macro_f1(total_cm),
        fold_macro_f1=tuple(fold_scores),
    )


def window_sweep(
    traces: Sequence[Trace],
    config: ModelConfig,
    t_windows: Sequence[float],
    t_d: float,
    folds: int = 10,
    seed: Optional[int] = None,
    task: Task = Task.EIGHT_CLASS,
    stride: float = 1.0,
    group_by_trial: bool = False,
) -> List[Tuple[float, float]]:
    """Macro-F1 as a function of the window length.

    Re-extracts features for every window size and cross-validates each
    resulting dataset. Returns (t_window, macro_f1) rows in input order.
    """
    rows = []
    for t_window in t_windows:
        wc = WindowConfig(t_window=t_window, t_d=t_d, stride=stride)
        vectors = []
        for trace in traces:
            vectors.extend(extract_windows(trace, wc))
        dataset = dataset_from_vectors(vectors, task=task)
        report = cross_validate(config, dataset, folds=folds, seed=seed, group_by_trial=group_by_trial)
        rows.append((float(t_window), report.macro_f1))
    return rows


# ---------------------------------------------------------------------------
# Report serialization

def _fmt(x: float) -> str:
    return repr(float(x))


def report_to_text(report: EvalReport) -> str:
    lines = [
        f"model={report.model.value} task={report.task.value} folds={report.folds} "
        f"seed={report.seed} grouped={report.grouped}",
        "",
        f"{'class':<12} {'precision':>10} {'recall':>10} {'f1':>10} {'support':>8}",
    ]
    for m in report.per_class:
        lines.append(
            f"{m.name:<12} {m.precision:>10.4f} {m.recall:>10.4f} {m.f1:>10.4f} {m.support:>8d}"
        )
    lines.append("")
    lines.append(f"macro-F1: {report.macro_f1:.4f}")
    folds = " ".join(f"{s:.4f}" for s in report.fold_macro_f1)
    lines.append(f"per-fold macro-F1: {folds}")
    lines.append("")
    lines.append("confusion matrix (rows: true, cols: predicted)")
    width = max(8, max(len(n) for n in report.class_names) + 1)
    header = " " * width + "".join(f"{n:>{width}}" for n in report.class_names)
    lines.append(header)
    for i, name in enumerate(report.class_names):
        row = "".join(f"{int(v):>{width}d}" for v in report.confusion[i])
        lines.append(f"{name:<{width}}" + row)
    lines.append("")
    return "\n".join(lines)


def report_to_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class", "precision", "recall", "f1", "support"])
    for m in report.per_class:
        writer.writerow([m.name, _fmt(m.precision), _fmt(m.recall), _fmt(m.f1), m.support])
    writer.writerow(["macro_f1", "", "", _fmt(report.macro_f1), ""])
    return buf.getvalue()


def confusion_to_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["true\\pred"] + list(report.class_names))
    for i, name in enumerate(report.class_names):
        writer.writerow([name] + [int(v) for v in report.confusion[i]])
    return buf.getvalue()


def sweep_to_csv(rows: Sequence[Tuple[float, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t_window", "macro_f1"])
    for t_window, score in rows:
        writer.writerow([_fmt(t_window), _fmt(score)])
    return buf.getvalue()
