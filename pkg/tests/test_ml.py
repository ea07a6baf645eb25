import numpy as np
import pytest

from helpers import make_blobs

from eptmon.ml import (
    Dataset,
    ModelConfig,
    ModelKind,
    SmoNonConvergence,
    Task,
    assign_folds,
    collapse_to_binary,
    confusion_matrix,
    confusion_to_csv,
    cross_validate,
    dataset_from_vectors,
    FittedPipeline,
    fit_scaler,
    load_model,
    macro_f1,
    per_class_f1,
    precision_recall,
    predict_knn,
    predict_rf,
    predict_svm,
    report_to_csv,
    report_to_text,
    save_model,
    standardize,
    train_knn,
    train_rf,
    train_svm_ovr,
    window_sweep,
)
from eptmon.ml.svm import _smo, rbf_kernel, resolve_gamma
from eptmon.features import FeatureVector
from eptmon.trace import ClassLabel

KNN = ModelConfig(kind=ModelKind.KNN, seed=9)
RF = ModelConfig(kind=ModelKind.RANDOM_FOREST, seed=9)
SVM = ModelConfig(kind=ModelKind.SVM_OVR, seed=9)


# --- standardization --------------------------------------------------------

def test_standardize_single_row_all_zeros():
    X = np.array([[3.0, -1.0, 7.0]])
    train, apply_, _ = standardize(X, X)
    assert (train == 0.0).all() and (apply_ == 0.0).all()


def test_standardize_two_point_column():
    X = np.array([[0.0], [2.0]])
    train, _, scaler = standardize(X, X)
    assert train[:, 0].tolist() == [-1.0, 1.0]  # population stddev = 1
    assert scaler.std[0] == 1.0


def test_standardize_self_application_centers():
    rng = np.random.default_rng(2)
    X = rng.normal(3.0, 5.0, size=(200, 6))
    train, _, _ = standardize(X, X)
    assert np.abs(train.mean(axis=0)).max() < 1e-9
    assert np.abs(train.std(axis=0) - 1.0).max() < 1e-9


def test_standardize_train_constant_feature_maps_apply_to_zero():
    train_X = np.array([[1.0, 5.0], [1.0, 7.0]])
    apply_X = np.array([[4.0, 6.0]])
    _, scaled, _ = standardize(train_X, apply_X)
    assert scaled[0, 0] == 0.0


# --- metrics ----------------------------------------------------------------

def test_precision_recall_perfect_class():
    cm = np.array([[10, 0], [0, 3]])
    assert precision_recall(cm, 0) == (1.0, 1.0)


def test_precision_recall_hand_case():
    # TP=8, FP=2, FN=2 for class 0
    cm = np.array([[8, 2], [2, 8]])
    assert precision_recall(cm, 0) == (0.8, 0.8)


def test_precision_recall_zero_denominator():
    cm = np.array([[0, 5], [0, 10]])  # class 0: TP=0, FP=0, FN=5
    assert precision_recall(cm, 0) == (0.0, 0.0)


def test_macro_f1_diagonal_is_one():
    assert macro_f1(np.diag([7, 1, 19, 3])) == 1.0


def test_macro_f1_balanced_two_class():
    assert macro_f1(np.array([[8, 2], [2, 8]])) == pytest.approx(0.8)


def test_macro_f1_degenerate_single_prediction():
    # everything predicted as class 0 on a balanced 10+10 set
    cm = np.array([[10, 0], [10, 0]])
    assert macro_f1(cm) == pytest.approx(1.0 / 3.0)


def test_macro_f1_all_off_diagonal_is_zero():
    assert macro_f1(np.array([[0, 4], [6, 0]])) == 0.0


def test_macro_f1_three_class_hand_computed():
    cm = np.array([[5, 1, 0], [0, 6, 2], [1, 0, 9]])
    # class 0: P=5/6, R=5/6 -> F1=5/6; class 1: P=6/7, R=6/8; class 2: P=9/11, R=9/10
    f0 = 5.0 / 6.0
    f1 = 2 * (6 / 7) * (6 / 8) / (6 / 7 + 6 / 8)
    f2 = 2 * (9 / 11) * (9 / 10) / (9 / 11 + 9 / 10)
    assert per_class_f1(cm) == pytest.approx([f0, f1, f2])
    assert macro_f1(cm) == pytest.approx((f0 + f1 + f2) / 3)


def test_confusion_matrix_layout():
    cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 0], 3)
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 0]]


def test_macro_f1_input_validation():
    with pytest.raises(ValueError):
        macro_f1(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        macro_f1(np.array([[1, -1], [0, 1]]))


# --- kNN --------------------------------------------------------------------

def test_knn_single_class_neighborhood():
    X = np.vstack([np.zeros((5, 2)), np.full((5, 2), 10.0)])
    y = np.array([0] * 5 + [1] * 5)
    model = train_knn(KNN, X, y, 2)
    assert predict_knn(model, np.array([[0.2, -0.1]]))[0] == 0


def test_knn_blobs_perfect_holdout_and_oracle():
    X, y = make_blobs(40, n_classes=4, d=6, seed=12)
    rng = np.random.default_rng(1)
    perm = rng.permutation(len(y))
    X, y = X[perm], y[perm]
    train_X, test_X = X[:120], X[120:]
    train_y, test_y = y[:120], y[120:]
    model = train_knn(KNN, train_X, train_y, 4)
    pred = predict_knn(model, test_X)
    assert (pred == test_y).all()
    # exhaustive-distance oracle for a few queries
    for qi in range(10):
        d = np.sqrt(((train_X - test_X[qi]) ** 2).sum(axis=1))
        nearest = np.argsort(d)[:5]
        votes = np.bincount(train_y[nearest], minlength=4)
        assert pred[qi] == votes.argmax()


def test_knn_k1_returns_training_label():
    X, y = make_blobs(10, n_classes=3, d=4, seed=13)
    model = train_knn(ModelConfig(kind=ModelKind.KNN, knn_k=1, seed=0), X, y, 3)
    assert (predict_knn(model, X) == y).all()


def test_knn_invariant_under_training_row_permutation():
    X, y = make_blobs(30, n_classes=4, d=5, seed=14)
    rng = np.random.default_rng(3)
    queries = rng.normal(0, 8, size=(40, 5))
    model_a = train_knn(KNN, X, y, 4)
    perm = rng.permutation(len(y))
    model_b = train_knn(KNN, X[perm], y[perm], 4)
    assert (predict_knn(model_a, queries) == predict_knn(model_b, queries)).all()


def test_knn_rejects_underpopulated_training():
    with pytest.raises(ValueError):
        train_knn(KNN, np.zeros((3, 2)), np.array([0, 1, 0]), 2)


# --- random forest ----------------------------------------------------------

def test_rf_single_class_training_data():
    X = np.random.default_rng(0).normal(size=(30, 4))
    y = np.full(30, 2)
    model = train_rf(RF, X, y, 3)
    assert (predict_rf(model, X) == 2).all()


def test_rf_solves_xor_clusters():
    rng = np.random.default_rng(6)
    centers = [(0, 0, 0), (1, 1, 0), (0, 1, 1), (1, 0, 1)]  # (x, y, label)
    X, y = [], []
    for cx, cy, label in centers:
        X.append(np.column_stack([
            rng.normal(cx, 0.08, 60), rng.normal(cy, 0.08, 60)
        ]))
        y.append(np.full(60, label))
    X, y = np.vstack(X), np.concatenate(y)
    perm = rng.permutation(len(y))
    X, y = X[perm], y[perm]
    model = train_rf(RF, X[:180], y[:180], 2)
    assert (predict_rf(model, X[180:]) == y[180:]).all()


def test_rf_deterministic_given_seed():
    X, y = make_blobs(30, n_classes=4, d=6, seed=21)
    grid = np.random.default_rng(0).normal(0, 8, size=(50, 6))
    a = predict_rf(train_rf(RF, X, y, 4), grid)
    b = predict_rf(train_rf(RF, X, y, 4), grid)
    assert (a == b).all()


def test_all_trainers_deterministic():
    X, y = make_blobs(30, n_classes=4, d=6, seed=35)
    Xs = standardize(X, X)[0]
    grid = np.random.default_rng(1).normal(0, 1, size=(60, 6))
    for config, train, predict in (
        (KNN, train_knn, predict_knn),
        (RF, train_rf, predict_rf),
        (SVM, train_svm_ovr, predict_svm),
    ):
        a = predict(train(config, Xs, y, 4), grid)
        b = predict(train(config, Xs, y, 4), grid)
        assert (a == b).all()


def test_rf_respects_max_depth():
    X, y = make_blobs(40, n_classes=2, d=3, seed=22)
    model = train_rf(ModelConfig(kind=ModelKind.RANDOM_FOREST, rf_max_depth=1, seed=5), X, y, 2)

    def depth(node):
        if node.is_leaf:
            return 0
        return 1 + max(depth(node.left), depth(node.right))

    assert all(depth(t) <= 1 for t in model.trees)
    assert len(model.trees) == 10


# --- SVM --------------------------------------------------------------------

def test_svm_blobs_perfect_holdout():
    X, y = make_blobs(30, n_classes=3, d=6, seed=23)
    rng = np.random.default_rng(2)
    perm = rng.permutation(len(y))
    X, y = X[perm], y[perm]
    train_X, test_X, _ = standardize(X[:60], X[60:])
    model = train_svm_ovr(SVM, train_X, y[:60], 3)
    assert (predict_svm(model, test_X) == y[60:]).all()


def test_svm_training_point_inside_own_region():
    X, y = make_blobs(25, n_classes=2, d=4, seed=24)
    Xs = standardize(X, X)[0]
    model = train_svm_ovr(SVM, Xs, y, 2)
    # points nearest their class center sit deep inside the margin
    for c in (0, 1):
        rows = Xs[y == c]
        center = rows.mean(axis=0)
        inner = rows[np.argmin(((rows - center) ** 2).sum(axis=1))]
        assert predict_svm(model, inner[None, :])[0] == c


def test_svm_decision_flips_with_labels():
    X, y = make_blobs(20, n_classes=2, d=5, seed=25)
    Xs = standardize(X, X)[0]
    y_bin = np.where(y == 0, 1.0, -1.0)
    gamma = resolve_gamma(SVM, Xs)
    K = rbf_kernel(Xs, Xs, gamma)
    a1, b1 = _smo(K, y_bin, 1.0)
    a2, b2 = _smo(K, -y_bin, 1.0)
    d1 = K @ (a1 * y_bin) + b1
    d2 = K @ (a2 * -y_bin) + b2
    # mirrored problems stop within the KKT tolerance of each other
    assert np.abs(d1 + d2).max() < 1e-2
    assert ((d1 > 0) == (d2 < 0)).all()


def test_svm_kkt_gap_below_tolerance_on_blobs():
    X, y = make_blobs(40, n_classes=4, d=8, seed=26)
    Xs = standardize(X, X)[0]
    K = rbf_kernel(Xs, Xs, resolve_gamma(SVM, Xs))
    for c in range(4):
        y_bin = np.where(y == c, 1.0, -1.0)
        alpha, _b = _smo(K, y_bin, 1.0)
        u = K @ (alpha * y_bin)
        val = y_bin - u
        up = ((y_bin > 0) & (alpha < 1.0)) | ((y_bin < 0) & (alpha > 0))
        low = ((y_bin > 0) & (alpha > 0)) | ((y_bin < 0) & (alpha < 1.0))
        gap = np.where(up, val, -np.inf).max() - np.where(low, val, np.inf).min()
        assert gap < 1e-3


def test_svm_nonconvergence_is_reported():
    rng = np.random.default_rng(27)
    X = rng.normal(size=(40, 3))
    y_bin = np.where(rng.random(40) < 0.5, 1.0, -1.0)
    K = rbf_kernel(X, X, 0.5)
    with pytest.warns(SmoNonConvergence):
        _smo(K, y_bin, 1.0, max_iter=3)


def test_svm_requires_two_rows_per_class():
    X = np.zeros((3, 2))
    y = np.array([0, 0, 1])
    with pytest.raises(ValueError, match="2 rows"):
        train_svm_ovr(SVM, X, y, 2)


def test_resolve_gamma_default_rule():
    rng = np.random.default_rng(28)
    X = rng.normal(0, 3.0, size=(100, 18))
    gamma = resolve_gamma(ModelConfig(kind=ModelKind.SVM_OVR), X)
    assert gamma == pytest.approx(1.0 / (18 * X.var(axis=0).mean()))
    assert resolve_gamma(ModelConfig(kind=ModelKind.SVM_OVR, svm_gamma=0.25), X) == 0.25


# --- cross-validation -------------------------------------------------------

def _blob_dataset(n_per=30, n_classes=8, seed=31, task=Task.EIGHT_CLASS):
    X, y = make_blobs(n_per, n_classes=n_classes, d=18, seed=seed)
    groups = np.arange(len(y)) // 10
    names = tuple(f"c{i}" for i in range(n_classes))
    return Dataset(X, y, groups, names, task)


def test_cross_validate_separable_blobs_perfect():
    report = cross_validate(RF, _blob_dataset(), folds=10, seed=77)
    assert report.macro_f1 == 1.0
    assert all(m.f1 == 1.0 for m in report.per_class)


def test_fold_partition_covers_every_row_once():
    ds = _blob_dataset()
    folds = assign_folds(ds, 10, seed=5)
    assert (folds >= 0).all() and (folds < 10).all()
    for c in range(8):
        sizes = np.bincount(folds[ds.y == c], minlength=10)
        assert sizes.max() - sizes.min() <= 1  # stratified round-robin


def test_grouped_folds_keep_trials_together():
    ds = _blob_dataset()
    folds = assign_folds(ds, 5, seed=5, group_by_trial=True)
    for g in np.unique(ds.groups):
        assert len(np.unique(folds[ds.groups == g])) == 1


def test_cross_validate_deterministic():
    ds = _blob_dataset()
    a = cross_validate(RF, ds, folds=10, seed=3)
    b = cross_validate(RF, ds, folds=10, seed=3)
    assert report_to_text(a) == report_to_text(b)
    assert report_to_csv(a) == report_to_csv(b)
    assert np.array_equal(a.confusion, b.confusion)
    assert a.fold_macro_f1 == b.fold_macro_f1


def test_cross_validate_rejects_underpopulated_class():
    X, y = make_blobs(5, n_classes=3, d=4, seed=33)
    ds = Dataset(X, y, np.arange(len(y)), ("a", "b", "c"), Task.EIGHT_CLASS)
    with pytest.raises(ValueError, match="fewer than"):
        cross_validate(RF, ds, folds=10, seed=1)


def test_feature_order_permutation_leaves_predictions():
    # Queries drawn from the data distribution: structurally different trees
    # may extrapolate differently in empty space, but on-support predictions
    # must agree under a consistent feature permutation.
    X, y = make_blobs(40, n_classes=4, d=10, seed=34)
    rng = np.random.default_rng(4)
    perm = rng.permutation(10)
    shuffle = rng.permutation(len(y))
    X, y = X[shuffle], y[shuffle]
    Xs, Qs, _ = standardize(X[:120], X[120:])
    for config, train, predict in ((RF, train_rf, predict_rf), (SVM, train_svm_ovr, predict_svm)):
        model_plain = train(config, Xs, y[:120], 4)
        model_perm = train(config, Xs[:, perm], y[:120], 4)
        assert (predict(model_plain, Qs) == predict(model_perm, Qs[:, perm])).all()


# --- dataset plumbing -------------------------------------------------------

def _vectors_for_labels():
    vectors = []
    for label in ClassLabel:
        for trial in range(2):
            for w in range(3):
                values = tuple(float(int(label) * 100 + trial * 10 + w + i) for i in range(18))
                vectors.append(FeatureVector(label, trial, float(w), values))
    return vectors


def test_dataset_from_vectors_and_binary_collapse():
    ds = dataset_from_vectors(_vectors_for_labels())
    assert ds.class_names == tuple(l.name for l in ClassLabel)
    assert len(ds.X) == 8 * 2 * 3
    binary = collapse_to_binary(ds)
    assert binary.class_names == ("benign", "malicious")
    assert len(binary.X) == len(ds.X)
    wannacry_rows = ds.y == list(ds.class_names).index("WANNACRY")
    zip_rows = ds.y == list(ds.class_names).index("ZIP")
    assert (binary.y[wannacry_rows] == 1).all()
    assert (binary.y[zip_rows] == 0).all()
    with pytest.raises(ValueError):
        collapse_to_binary(binary)


def test_window_sweep_single_value_equals_cross_validate(sim_traces):
    traces = [sim_traces[(label, trial)] for label in ClassLabel for trial in range(2)]
    rows = window_sweep(traces, RF, [10.0], t_d=60.0, folds=5, seed=42)
    assert len(rows) == 1
    from eptmon.features import WindowConfig, extract_windows

    vectors = []
    for trace in traces:
        vectors.extend(extract_windows(trace, WindowConfig(10.0, 60.0, 1.0)))
    ds = dataset_from_vectors(vectors)
    direct = cross_validate(RF, ds, folds=5, seed=42)
    assert rows[0] == (10.0, direct.macro_f1)


# --- reports and persistence -------------------------------------------------

def test_report_serializations_contain_everything():
    report = cross_validate(KNN, _blob_dataset(n_per=12, n_classes=3, seed=36), folds=4, seed=2)
    text = report_to_text(report)
    assert "macro-F1" in text and "confusion" in text
    csv_text = report_to_csv(report)
    assert csv_text.splitlines()[0] == "class,precision,recall,f1,support"
    assert "macro_f1" in csv_text.splitlines()[-1]
    conf = confusion_to_csv(report)
    assert len(conf.splitlines()) == 1 + report.confusion.shape[0]


def test_model_persistence_round_trip(tmp_path):
    X, y = make_blobs(20, n_classes=3, d=6, seed=37)
    scaler = fit_scaler(X)
    model = train_rf(RF, scaler.transform(X), y, 3)
    pipeline = FittedPipeline(scaler, model, ("a", "b", "c"))
    path = tmp_path / "model.bin"
    save_model(path, pipeline)
    loaded = load_model(path)
    queries = np.random.default_rng(1).normal(0, 8, size=(30, 6))
    assert (pipeline.predict(queries) == loaded.predict(queries)).all()
    assert loaded.class_names == ("a", "b", "c")


def test_model_persistence_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTMODEL" + b"\x01" + b"rest")
    with pytest.raises(ValueError, match="magic"):
        load_model(path)


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(kind=ModelKind.KNN, knn_k=0)
    with pytest.raises(ValueError):
        ModelConfig(kind=ModelKind.RANDOM_FOREST, rf_trees=0)
    with pytest.raises(ValueError):
        ModelConfig(kind=ModelKind.SVM_OVR, svm_c=0.0)
    with pytest.raises(ValueError):
        ModelConfig(kind=ModelKind.SVM_OVR, svm_gamma=-1.0)
