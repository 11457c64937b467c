import numpy as np
import pytest

from smcae.metrics import f1_score
from smcae.svm import (RbfSvm, cross_validate, default_grids, max_kkt_violation,
                       rbf_kernel, svm_predict, svm_train)


def two_clusters(seed=0, n=20, spread=0.02):
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(0.2, spread, (n, 1)),
                        rng.normal(0.8, spread, (n, 1))])
    y = np.array([0] * n + [1] * n)
    return X, y


def test_kernel_values():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    K = rbf_kernel(X, X, gamma=2.0)
    assert K[0, 0] == 1.0
    assert K[0, 1] == pytest.approx(np.exp(-2.0))


def test_separable_clusters_perfect_training_accuracy():
    X, y = two_clusters()
    model = svm_train(X, y, c_box=10.0, g_rbf=1.0)
    assert (svm_predict(model, X) == y).all()


def test_xor_pattern_needs_the_kernel():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([0, 0, 1, 1])
    model = svm_train(X, y, c_box=100.0, g_rbf=1.0)
    assert (svm_predict(model, X) == y).all()


def test_duplicated_training_set_keeps_decision_function():
    X, y = two_clusters(seed=1)
    m1 = svm_train(X, y, c_box=100.0, g_rbf=1.0)
    m2 = svm_train(np.vstack([X, X]), np.concatenate([y, y]), c_box=100.0, g_rbf=1.0)
    probe = np.linspace(-0.2, 1.2, 29)[:, None]
    assert np.abs(m1.decision_values(probe) - m2.decision_values(probe)).max() <= 1e-6


def test_kkt_conditions_hold_after_training():
    rng = np.random.default_rng(2)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0, 1, (40, 3))
        y = (X[:, 0] + 0.3 * rng.normal(size=40) > 0.5).astype(int)
        if len(np.unique(y)) < 2:
            continue
        model = svm_train(X, y, c_box=5.0, g_rbf=2.0)
        assert max_kkt_violation(model, X, y) <= 1e-3 + 1e-9


def test_support_vector_keeps_own_label():
    X, y = two_clusters(seed=3)
    model = svm_train(X, y, c_box=10.0, g_rbf=1.0)
    sv_labels = y[model.sv_indices]
    assert (svm_predict(model, model.support_vectors) == sv_labels).all()


def test_prediction_tie_breaks_to_lowest_class():
    # Hand-built model whose per-class decision values are bitwise equal
    # everywhere: the argmax must resolve to the lowest class id.
    from smcae.svm import SvmModel
    model = SvmModel(support_vectors=np.array([[0.0], [1.0]]),
                     sv_indices=np.array([0, 1]),
                     dual_coef=np.array([[1.0, -1.0], [1.0, -1.0]]),
                     bias=np.zeros(2), gamma=1.0, c_box=1.0,
                     classes=np.array([3, 7]))
    values = model.decision_values(np.array([[0.25]]))
    assert values[0, 0] == values[0, 1]
    assert svm_predict(model, np.array([[0.25]]))[0] == 3


def test_held_out_points_classified_correctly():
    X, y = two_clusters(seed=4)
    model = svm_train(X, y, c_box=10.0, g_rbf=1.0)
    fresh = np.array([[0.15], [0.25], [0.75], [0.85]])
    assert (svm_predict(model, fresh) == [0, 0, 1, 1]).all()


def test_single_class_errors():
    with pytest.raises(ValueError):
        svm_train(np.zeros((4, 2)), np.zeros(4), 1.0, 1.0)


def test_dimension_mismatch_errors():
    X, y = two_clusters(seed=5)
    model = svm_train(X, y, c_box=1.0, g_rbf=1.0)
    with pytest.raises(ValueError):
        svm_predict(model, np.zeros((3, 7)))


def test_multi_class_digits_quality():
    from sklearn.datasets import load_digits
    bundle = load_digits()
    X = bundle.data[:600] / 16.0
    y = bundle.target[:600]
    model = svm_train(X, y, c_box=10.0, g_rbf=0.02)
    pred = svm_predict(model, bundle.data[600:900] / 16.0)
    assert f1_score(pred, bundle.target[600:900], average="macro") > 0.9


# --------------------------------------------------------------------------
# cross-validation


def test_cv_single_grid_point_returned():
    X, y = two_clusters(seed=6, n=15)
    c, g, table = cross_validate(X, y, c_grid=[3.0], g_grid=[0.5], folds=3, seed=0)
    assert (c, g) == (3.0, 0.5)
    assert len(table) == 1


def test_cv_picks_clearly_better_point():
    X, y = two_clusters(seed=7, n=25)
    # an absurd bandwidth memorizes training points and fails on held-out folds
    c, g, table = cross_validate(X, y, c_grid=[10.0], g_grid=[1.0, 1e9],
                                 folds=5, seed=0)
    assert g == 1.0
    scores = {grid_g: f1 for _, grid_g, f1 in table}
    assert scores[1.0] > scores[1e9]


def test_cv_deterministic_under_seed():
    rng = np.random.default_rng(8)
    X = rng.uniform(0, 1, (60, 2))
    y = (X[:, 0] > 0.5).astype(int)
    a = cross_validate(X, y, c_grid=[1.0, 10.0], g_grid=[0.5, 2.0], folds=3, seed=4)
    b = cross_validate(X, y, c_grid=[1.0, 10.0], g_grid=[0.5, 2.0], folds=3, seed=4)
    assert a == b


def test_cv_tie_prefers_smallest_parameters():
    X, y = two_clusters(seed=9, n=20)
    # both points separate the data perfectly: tie -> smallest c then g
    c, g, _ = cross_validate(X, y, c_grid=[10.0, 1.0], g_grid=[2.0, 1.0],
                             folds=4, seed=0)
    assert (c, g) == (1.0, 1.0)


def test_cv_small_class_errors():
    X = np.zeros((6, 2))
    y = np.array([0, 0, 0, 0, 0, 1])
    with pytest.raises(ValueError, match="fold"):
        cross_validate(X, y, c_grid=[1.0], g_grid=[1.0], folds=5, seed=0)


def test_default_grids_scale_with_dimension():
    c_grid, g_grid = default_grids(100)
    assert c_grid == [0.1, 1.0, 10.0, 100.0]
    assert g_grid == [0.0001, 0.001, 0.01, 0.1]


# --------------------------------------------------------------------------
# estimator facade


def test_rbf_svm_estimator_round_trip():
    X, y = two_clusters(seed=10)
    clf = RbfSvm(C=10.0, gamma=1.0).fit(X, y)
    assert (clf.predict(X) == y).all()
    assert clf.decision_function(X).shape == (len(X), 2)
    assert clf.get_params()["C"] == 10.0
