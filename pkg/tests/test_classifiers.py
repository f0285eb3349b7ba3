import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asotrace.classifiers import evaluation
from asotrace.classifiers.dataset import Dataset, DegenerateDataError, Imputer
from asotrace.classifiers.evaluation import confusion, cross_validate, metrics, rates, roc_auc, stratified_folds
from asotrace.classifiers.forest import RandomForest
from asotrace.classifiers.kernels import available_backends, load_backend
from asotrace.classifiers.knn import KNN
from asotrace.classifiers.logistic import loss_and_grad
from asotrace.classifiers.model import Model, ModelFormatError, make_estimator, train
from asotrace.classifiers.sampling import smote, smote_rows, undersample


def blobs(n=120, p=4, seed=0, shift=3.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, p)) + shift * y[:, None]
    return Dataset(X, y, [f"x{i}" for i in range(p)])


# ---------------------------------------------------------------------------
# estimators


def test_lr_separable_training_accuracy():
    X = np.array([[0, 0], [1, 0], [0, 1], [3, 3], [4, 3], [3, 4]], dtype=float)
    y = np.array([0, 0, 0, 1, 1, 1])
    model = train("logistic_regression", Dataset(X, y, ["a", "b"]))
    assert (model.predict(X) == y).all()
    assert ((model.predict_proba(X) >= 0) & (model.predict_proba(X) <= 1)).all()


def test_knn_vote_share():
    X = np.array([[0.1, 0], [0.2, 0], [0.3, 0], [0.4, 0], [0.5, 0], [5, 5], [6, 6], [7, 7]])
    y = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    knn = KNN(k=5).fit(X, y)
    assert knn.predict_proba(np.array([[0.0, 0.0]]))[0] == pytest.approx(0.8)
    model = Model("knn", ["a", "b"], Imputer.fit(X, ["a", "b"]), knn)
    assert model.predict(np.array([[0.0, 0.0]]))[0] == 1


def test_single_stump_importance():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 4))
    y = (X[:, 3] > 0).astype(int)
    rf = RandomForest(n_estimators=1, max_depth=1, max_features=None, bootstrap=False).fit(X, y)
    assert rf.gini_importance().tolist() == [0.0, 0.0, 0.0, 1.0]


def test_forest_ranks_determining_feature_first():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 6))
    y = (X[:, 2] > 0.3).astype(int)
    model = train("random_forest", Dataset(X, y, [f"x{i}" for i in range(6)]), {"n_estimators": 30}, seed=3)
    ranked = model.feature_importances()
    assert ranked[0][0] == "x2"
    assert sum(v for _, v in ranked) == pytest.approx(1.0)


def test_random_labels_spread_importance():
    p = 5
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(200, p))
        y = rng.integers(0, 2, 200)
        imp = RandomForest(n_estimators=20, seed=seed).fit(X, y).gini_importance()
        assert imp.max() <= 3.0 / p


def test_lr_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n, p = rng.integers(5, 40), rng.integers(1, 6)
        X = rng.normal(size=(n, p))
        y = rng.integers(0, 2, n).astype(float)
        w = rng.normal(size=p + 1)
        C = float(rng.uniform(0.1, 10))
        _, grad = loss_and_grad(w, X, y, C)
        eps = 1e-6
        fd = np.array([(loss_and_grad(w + eps * e, X, y, C)[0] - loss_and_grad(w - eps * e, X, y, C)[0]) / (2 * eps)
                       for e in np.eye(p + 1)])
        assert np.linalg.norm(fd - grad) <= 1e-6 * np.linalg.norm(grad)


# ---------------------------------------------------------------------------
# SMOTE


def test_smote_identical_points():
    syn = smote_rows(np.array([[2.0, 5.0], [2.0, 5.0]]), 10, 5, np.random.default_rng(0))
    assert (syn.rows == [2.0, 5.0]).all()


def test_smote_diagonal_segment():
    syn = smote_rows(np.array([[0.0, 0.0], [1.0, 1.0]]), 50, 1, np.random.default_rng(0))
    assert np.array_equal(syn.rows[:, 0], syn.rows[:, 1])
    assert ((syn.rows >= 0) & (syn.rows <= 1)).all()


def on_some_segment(point, X, tol=1e-9):
    for a, b in itertools.combinations_with_replacement(range(len(X)), 2):
        d = X[b] - X[a]
        dd = float(d @ d)
        t = 0.0 if dd == 0 else min(1.0, max(0.0, float((point - X[a]) @ d) / dd))
        if np.max(np.abs(X[a] + t * d - point)) <= tol * max(1.0, np.max(np.abs(point))):
            return True
    return False


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_smote_rows_are_convex_combinations(m, p, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, p)) * rng.uniform(0.1, 100, p)
    syn = smote_rows(X, 25, k, rng)
    for row, b, nb, g in zip(syn.rows, syn.base, syn.neighbor, syn.gap):
        assert b != nb
        assert np.max(np.abs(X[b] + g * (X[nb] - X[b]) - row)) <= 1e-9 * max(1.0, np.max(np.abs(row)))
        assert on_some_segment(row, X)
    assert ((syn.gap >= 0) & (syn.gap <= 1)).all()


def test_smote_balances_training_data():
    data = Dataset(np.arange(24, dtype=float).reshape(12, 2), [1, 1, 1] + [0] * 9, ["a", "b"])
    out = smote(data, 1.0, 2, seed=4)
    assert out.class_counts() == (9, 9)
    assert out.ids[:12] == data.ids and all(i.startswith("smote:") for i in out.ids[12:])
    with pytest.raises(DegenerateDataError):
        smote(Dataset(np.zeros((4, 2)), [1, 0, 0, 0], ["a", "b"]))
    with pytest.raises(ValueError):
        smote(Dataset(np.array([[np.nan, 1], [1, 1], [2, 2]]), [1, 1, 0], ["a", "b"]))
    assert undersample(data, 1.0, 1).class_counts() == (3, 3)


# ---------------------------------------------------------------------------
# metrics and cross-validation


def test_confusion_rates():
    r = rates({"tp": 2, "fp": 1, "fn": 1, "tn": 0})
    assert r["precision"] == r["recall"] == r["f1"] == pytest.approx(2 / 3)
    assert confusion([1, 0, 1, 0], [1, 1, 0, 0]) == {"tp": 1, "fp": 1, "fn": 1, "tn": 1}
    assert rates({"tp": 0, "fp": 0, "fn": 0, "tn": 0})["f1"] == 0.0


def test_auc_rank_statistic():
    assert roc_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == pytest.approx(0.75)
    assert roc_auc([0, 1], [0.5, 0.5]) == 0.5
    with pytest.raises(DegenerateDataError):
        roc_auc([1, 1], [0.2, 0.3])


def test_perfect_classifier():
    rep = cross_validate("logistic_regression", blobs(shift=20.0), k=5, repeats=2, seed=1)
    assert (rep.precision, rep.recall, rep.f1, rep.auc, rep.fpr) == (1.0, 1.0, 1.0, 1.0, 0.0)


@given(st.lists(st.tuples(st.integers(0, 1), st.floats(0, 1)), min_size=4, max_size=40), st.randoms())
def test_metrics_permutation_invariant(pairs, rnd):
    y = [a for a, _ in pairs]
    if len(set(y)) < 2:
        return
    score = [b for _, b in pairs]
    ref = metrics(y, score)
    order = list(range(len(y)))
    rnd.shuffle(order)
    assert metrics([y[i] for i in order], [score[i] for i in order]) == pytest.approx(ref)


def test_stratified_folds_partition():
    y = np.array([0] * 23 + [1] * 7)
    folds = stratified_folds(y, 5, np.random.default_rng(0))
    assert sorted(np.concatenate(folds).tolist()) == list(range(30))
    assert {int(y[f].sum()) for f in folds} <= {1, 2}


def test_sampling_never_touches_validation_fold(monkeypatch):
    data = blobs(n=90, shift=1.0)
    data = Dataset(data.X, np.r_[np.ones(20, dtype=int), np.zeros(70, dtype=int)], data.feature_names)
    originals = {tuple(r) for r in data.X}
    seen = {"test": 0, "train_extra": 0}
    real = evaluation.make_estimator

    class Spy:
        def __init__(self, inner):
            self.inner = inner

        def fit(self, X, y):
            seen["train_extra"] += sum(tuple(r) not in originals for r in X)
            return self.inner.fit(X, y)

        def predict_proba(self, X):
            assert all(tuple(r) in originals for r in X)
            seen["test"] += len(X)
            return self.inner.predict_proba(X)

    monkeypatch.setattr(evaluation, "make_estimator", lambda *a, **kw: Spy(real(*a, **kw)))
    rep = cross_validate("logistic_regression", data, k=5, repeats=2, sampling="oversample", seed=3)
    assert seen["test"] == 2 * len(data)
    assert seen["train_extra"] > 0
    assert sum(f["n_test"] for f in rep.folds) == 2 * len(data)


def test_randomized_labels_auc_near_half():
    aucs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        data = Dataset(rng.normal(size=(300, 4)), rng.permutation(np.arange(300) % 2), list("abcd"))
        aucs.append(cross_validate("logistic_regression", data, k=5, repeats=1, seed=seed).auc)
    assert 0.45 <= np.mean(aucs) <= 0.55


def test_seeded_determinism():
    data = blobs(shift=1.0)
    a = cross_validate("random_forest", data, 5, 2, "oversample", 9, {"n_estimators": 10})
    b = cross_validate("random_forest", data, 5, 2, "oversample", 9, {"n_estimators": 10})
    assert a.to_obj() == b.to_obj()
    c = cross_validate("random_forest", data, 5, 2, "oversample", 10, {"n_estimators": 10})
    assert c.to_obj() != a.to_obj()


def test_degenerate_inputs():
    one_class = Dataset(np.zeros((5, 2)), [1] * 5, ["a", "b"])
    with pytest.raises(DegenerateDataError):
        train("random_forest", one_class)
    with pytest.raises(DegenerateDataError):
        cross_validate("logistic_regression", Dataset(np.zeros((12, 1)), [1] * 3 + [0] * 9, ["a"]), k=5)
    with pytest.raises(ValueError):
        make_estimator("xgboost")
    with pytest.raises(ValueError):
        cross_validate("knn", blobs(), sampling="both")
    with pytest.raises(TypeError):
        train("logistic_regression", blobs()).feature_importances()
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 2], ["a", "b"])


# ---------------------------------------------------------------------------
# imputation, persistence, kernels


def test_imputer_uses_training_medians_and_indicators():
    X = np.array([[1.0, np.nan], [3.0, 4.0], [np.nan, np.nan], [5.0, 8.0]])
    imp = Imputer.fit(X, ["f2_a", "f2_b"], indicators=True)
    assert imp.medians.tolist() == [3.0, 6.0]
    out = imp.transform(np.array([[np.nan, np.nan]]))
    assert out.tolist() == [[3.0, 6.0, 0.0, 0.0]]
    assert imp.output_names == ["f2_a", "f2_b", "f2_a_present", "f2_b_present"]
    assert Imputer.fit(X, ["a", "b"]).output_names == ["a", "b"]


@pytest.mark.parametrize("algo", ["random_forest", "logistic_regression", "knn"])
def test_save_load_byte_stable(tmp_path, algo):
    data = blobs(shift=1.5)
    model = train(algo, data, {"n_estimators": 7} if algo == "random_forest" else None, seed=5)
    model.save(tmp_path / "a.zip")
    loaded = Model.load(tmp_path / "a.zip")
    loaded.save(tmp_path / "b.zip")
    assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()
    assert np.array_equal(loaded.predict_proba(data.X), model.predict_proba(data.X))
    train(algo, data, {"n_estimators": 7} if algo == "random_forest" else None, seed=5).save(tmp_path / "c.zip")
    assert (tmp_path / "c.zip").read_bytes() == (tmp_path / "a.zip").read_bytes()


def test_load_rejects_foreign_file(tmp_path):
    (tmp_path / "x.zip").write_bytes(b"nope")
    with pytest.raises(ModelFormatError):
        Model.load(tmp_path / "x.zip")


@pytest.mark.skipif("cython" not in available_backends(), reason="extension not built")
def test_cython_and_python_kernels_agree():
    cy, py = load_backend("cython"), load_backend("python")
    rng = np.random.default_rng(11)
    for trial in range(5):
        X = np.round(rng.normal(size=(200, 6)), 1)  # rounding creates ties
        y = (X[:, 0] + rng.normal(size=200) > 0).astype(np.int64)
        samples = rng.integers(0, 200, 200)
        args = (X, y, samples, 2 + trial % 3, -1 if trial % 2 else 4, 1 + trial % 2, 1234 + trial)
        a, b = cy.build_tree(*args), py.build_tree(*args)
        for u, v in zip(a, b):
            assert np.array_equal(u, v)
        roots = np.array([0])
        assert np.array_equal(cy.predict_forest(X, *a[:5], roots), py.predict_forest(X, *b[:5], roots))
