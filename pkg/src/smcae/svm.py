"""RBF-kernel support vector classifier trained by sequential minimal
optimization, one binary machine per class (one-vs-rest), plus stratified
cross-validation for picking the box constraint and kernel bandwidth.

The working set is always the maximal KKT-violating pair under a fixed scan
order, so training is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import StratifiedKFold
from sklearn.utils.validation import check_array, check_is_fitted

from .metrics import f1_score


def rbf_kernel(X, Y, gamma: float) -> np.ndarray:
    """K(u, v) = exp(-gamma * ||u - v||^2)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d2 = (np.sum(X ** 2, axis=1)[:, None] + np.sum(Y ** 2, axis=1)[None, :]
          - 2.0 * (X @ Y.T))
    return np.exp(-gamma * np.maximum(d2, 0.0))


def _smo_binary(K, y, C, tol, max_iter):
    """Solve the binary C-SVC dual on a precomputed kernel.

    Returns (alpha, b, iterations, converged). Stops when the maximal KKT
    violation m - M drops to tol.
    """
    n = len(y)
    alpha = np.zeros(n)
    f = np.zeros(n)  # sum_j alpha_j y_j K_ij, no bias
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        opt = y - f  # y_i - f_i; b must sit between the up max and the low min
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        up_vals = np.where(up, opt, -np.inf)
        low_vals = np.where(low, opt, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        m, M = opt[i], opt[j]
        if m - M <= tol:
            converged = True
            break

        # Two-variable subproblem on (i, j).
        s = y[i] * y[j]
        if s < 0:
            L = max(0.0, alpha[j] - alpha[i])
            H = min(C, C + alpha[j] - alpha[i])
        else:
            L = max(0.0, alpha[i] + alpha[j] - C)
            H = min(C, alpha[i] + alpha[j])
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        eta = max(eta, 1e-12)
        e_i = f[i] - y[i]
        e_j = f[j] - y[j]
        aj_new = np.clip(alpha[j] + y[j] * (e_i - e_j) / eta, L, H)
        step = aj_new - alpha[j]
        if abs(step) < 1e-14:
            break  # numerically blocked pair; report the residual violation
        ai_new = alpha[i] - s * step
        f = f + (ai_new - alpha[i]) * y[i] * K[:, i] + step * y[j] * K[:, j]
        # Snap to the box edges so bound fuzz cannot re-select a blocked pair.
        snap = 1e-10 * (1.0 + C)
        alpha[i] = 0.0 if ai_new < snap else (C if ai_new > C - snap else ai_new)
        alpha[j] = 0.0 if aj_new < snap else (C if aj_new > C - snap else aj_new)

    opt = y - f
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    hi = np.max(np.where(up, opt, -np.inf)) if up.any() else 0.0
    lo = np.min(np.where(low, opt, np.inf)) if low.any() else 0.0
    if not np.isfinite(hi):
        hi = lo
    if not np.isfinite(lo):
        lo = hi
    b = 0.5 * (hi + lo)
    return alpha, float(b), it, converged


@dataclass
class SvmModel:
    """One-vs-rest RBF SVM: support vectors shared across the binary machines,
    per-class dual coefficients (alpha_i * y_i) and biases."""

    support_vectors: np.ndarray      # (n_sv, d)
    sv_indices: np.ndarray           # indices into the training set
    dual_coef: np.ndarray            # (n_classes, n_sv)
    bias: np.ndarray                 # (n_classes,)
    gamma: float
    c_box: float
    classes: np.ndarray
    converged: bool = True

    def decision_values(self, X) -> np.ndarray:
        K = rbf_kernel(np.asarray(X, dtype=float), self.support_vectors, self.gamma)
        return K @ self.dual_coef.T + self.bias


def svm_train(X, y, c_box: float, g_rbf: float, tol: float = 1e-3,
              max_iter: int | None = None) -> SvmModel:
    """Train one-vs-rest binary SVMs by SMO on a shared kernel matrix."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"feature matrix {X.shape} does not match {y.size} labels")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("training data must contain at least two classes")
    n = X.shape[0]
    if max_iter is None:
        max_iter = max(10000, 100 * n)
    K = rbf_kernel(X, X, g_rbf)
    coefs = []
    biases = []
    converged = True
    for c in classes:
        yc = np.where(y == c, 1.0, -1.0)
        alpha, b, _, ok = _smo_binary(K, yc, c_box, tol, max_iter)
        coefs.append(alpha * yc)
        biases.append(b)
        converged = converged and ok
    coef = np.array(coefs)
    sv_mask = np.any(np.abs(coef) > 1e-12, axis=0)
    if not sv_mask.any():
        sv_mask[:1] = True
    return SvmModel(support_vectors=X[sv_mask].copy(),
                    sv_indices=np.flatnonzero(sv_mask),
                    dual_coef=coef[:, sv_mask],
                    bias=np.array(biases),
                    gamma=g_rbf, c_box=c_box, classes=classes,
                    converged=converged)


def svm_predict(model: SvmModel, X) -> np.ndarray:
    """Argmax over one-vs-rest decision values; ties go to the lowest class."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != model.support_vectors.shape[1]:
        raise ValueError(f"features have dimension {X.shape[1]} but the model "
                         f"was trained with {model.support_vectors.shape[1]}")
    values = model.decision_values(X)
    return model.classes[np.argmax(values, axis=1)]


def max_kkt_violation(model: SvmModel, X, y) -> float:
    """Largest m - M gap over the binary machines, recomputed on the training
    set the model was fit on; at most the training tolerance when converged."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).ravel()
    K = rbf_kernel(X, model.support_vectors, model.gamma)
    worst = 0.0
    for row, c in enumerate(model.classes):
        yc = np.where(y == c, 1.0, -1.0)
        alpha = np.zeros(len(y))
        alpha[model.sv_indices] = model.dual_coef[row] * yc[model.sv_indices]
        f = K @ model.dual_coef[row]
        opt = yc - f
        up = ((yc > 0) & (alpha < model.c_box)) | ((yc < 0) & (alpha > 0))
        low = ((yc < 0) & (alpha < model.c_box)) | ((yc > 0) & (alpha > 0))
        if up.any() and low.any():
            worst = max(worst, float(np.max(opt[up]) - np.min(opt[low])))
    return worst


def default_grids(n_features: int):
    """Cross-validation grids: box constraints and bandwidths scaled by the
    feature dimension."""
    c_grid = [0.1, 1.0, 10.0, 100.0]
    g_grid = [v / n_features for v in (0.01, 0.1, 1.0, 10.0)]
    return c_grid, g_grid


def cross_validate(X, y, c_grid=None, g_grid=None, folds: int = 5, seed: int = 0):
    """Stratified k-fold selection of (c_box, g_rbf) by mean validation F1.

    Ties break toward the smallest c_box, then the smallest g_rbf. Returns
    ``(c_box, g_rbf, table)`` with one (c, g, mean_f1) row per grid point.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).ravel()
    if folds < 2:
        raise ValueError("folds must be >= 2")
    _, counts = np.unique(y, return_counts=True)
    if counts.min() < folds:
        raise ValueError(f"every class needs at least {folds} members for "
                         f"{folds}-fold stratification; smallest has {counts.min()}")
    if c_grid is None or g_grid is None:
        dc, dg = default_grids(X.shape[1])
        c_grid = dc if c_grid is None else c_grid
        g_grid = dg if g_grid is None else g_grid
    if not len(c_grid) or not len(g_grid):
        raise ValueError("parameter grids must be nonempty")

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    splits = list(splitter.split(X, y))
    best = None
    table = []
    for c in sorted(c_grid):
        for g in sorted(g_grid):
            scores = []
            for train_idx, val_idx in splits:
                model = svm_train(X[train_idx], y[train_idx], c, g)
                pred = svm_predict(model, X[val_idx])
                scores.append(f1_score(pred, y[val_idx], average="macro"))
            mean = float(np.mean(scores))
            table.append((c, g, mean))
            if best is None or mean > best[2]:
                best = (c, g, mean)
    return best[0], best[1], table


class RbfSvm(BaseEstimator, ClassifierMixin):
    """sklearn-style front end over the SMO trainer."""

    def __init__(self, C=10.0, gamma=0.1, tol=1e-3):
        self.C = C
        self.gamma = gamma
        self.tol = tol

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        self.model_ = svm_train(X, np.asarray(y), self.C, self.gamma, tol=self.tol)
        self.classes_ = self.model_.classes
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_values(check_array(X, dtype=np.float64))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return svm_predict(self.model_, check_array(X, dtype=np.float64))
