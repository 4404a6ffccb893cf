"""Standardization, linear SVM / SVR models, survival cutoff and grid search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from radpath.errors import DataError
from radpath.ml.solver import solve

C_GRID = (2.0 ** -5, 2.0 ** -3, 2.0 ** -1, 2.0, 2.0 ** 3, 2.0 ** 5)
EPS_GRID = (0.01, 0.1, 0.5)
LONG, SHORT = 1, -1


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or len(X) == 0:
            raise DataError("standardizer needs a non-empty 2D training matrix")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # columns that are constant up to rounding carry no information
        std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 0.0)
        return cls(mean, std)

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def survival_cutoff(days, stat: str = "mean") -> float:
    """Mean (or median) survival of the training cohort."""
    days = np.asarray(days, dtype=np.float64)
    if days.size == 0:
        raise DataError("survival cutoff of an empty cohort")
    if stat == "mean":
        return float(days.mean())
    if stat == "median":
        return float(np.median(days))
    raise DataError(f"unknown cutoff statistic {stat!r}")


def survival_labels(days, cutoff) -> np.ndarray:
    """+1 (long) when survival reaches the cutoff, else -1 (short)."""
    return np.where(np.asarray(days, dtype=np.float64) >= cutoff, LONG, SHORT)


@dataclass(frozen=True)
class LinearSvmModel:
    w: np.ndarray
    b: float
    C: float
    info: dict = None

    def decision(self, X):
        return np.asarray(X, dtype=np.float64) @ self.w + self.b

    def predict(self, X):
        return np.where(self.decision(X) >= 0, LONG, SHORT)


@dataclass(frozen=True)
class LinearSvrModel:
    w: np.ndarray
    b: float
    C: float
    epsilon: float
    target_mean: float = 0.0
    target_std: float = 1.0
    info: dict = None

    def predict_z(self, X):
        return np.asarray(X, dtype=np.float64) @ self.w + self.b

    def predict(self, X):
        return self.predict_z(X) * self.target_std + self.target_mean


def _gram(X, K):
    return np.asarray(X, dtype=np.float64) @ np.asarray(X, dtype=np.float64).T if K is None else K


def svm_train(X, labels, C, K=None) -> LinearSvmModel:
    """Soft-margin linear SVM on standardized rows; ``labels`` in {-1, +1}."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise DataError("SVM training needs both classes (labels -1 and +1)")
    coef, b, info = solve(_gram(X, K), y, C)
    return LinearSvmModel(coef @ X, b, float(C), info)


def svr_train(X, targets, C, epsilon, K=None, target_mean=0.0, target_std=1.0) -> LinearSvrModel:
    """Linear epsilon-SVR on standardized rows and (z-scored) targets."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if len(y) == 0:
        raise DataError("SVR training set is empty")
    coef, b, info = solve(_gram(X, K), y, C, epsilon)
    return LinearSvrModel(coef @ X, b, float(C), float(epsilon), float(target_mean), float(target_std), info)


def fold_ids(n, k, seed, labels=None) -> np.ndarray:
    """Seeded k-fold assignment; stratified when ``labels`` is given."""
    if n < k:
        raise DataError(f"{n} rows cannot be split into {k} folds")
    rng = np.random.default_rng(seed)
    out = np.empty(n, dtype=np.int64)
    if labels is None:
        out[rng.permutation(n)] = np.arange(n) % k
        return out
    labels = np.asarray(labels)
    start = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        out[members] = (start + np.arange(len(members))) % k
        start += len(members)
    return out


@dataclass(frozen=True)
class GridResult:
    C: float
    epsilon: float | None
    scores: dict  # (C, eps) -> mean fold accuracy or MAE


def grid_search(X, y, task="classify", C_grid=C_GRID, eps_grid=EPS_GRID, folds=5, seed=0, K=None) -> GridResult:
    """Cross-validated choice of C (and epsilon for regression).

    Classification maximizes mean fold accuracy over stratified folds;
    regression minimizes mean absolute error over plain folds. Ties go to
    the smaller C, then the smaller epsilon. Classifier folds whose training
    part holds one class only are skipped (they would score every grid
    point alike).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not C_grid or (task == "regress" and not eps_grid):
        raise DataError("empty hyperparameter grid")
    classify = task == "classify"
    K = _gram(X, K)
    fid = fold_ids(len(y), folds, seed, y if classify else None)
    points = [(c, None) for c in sorted(C_grid)] if classify else [(c, e) for c in sorted(C_grid) for e in sorted(eps_grid)]
    scores = {}
    for C, eps in points:
        vals = []
        for f in range(folds):
            tr, te = np.flatnonzero(fid != f), np.flatnonzero(fid == f)
            if classify:
                if len(np.unique(y[tr])) < 2:
                    continue
                m = svm_train(X[tr], y[tr], C, K[np.ix_(tr, tr)])
                vals.append(np.mean(m.predict(X[te]) == y[te]))
            else:
                m = svr_train(X[tr], y[tr], C, eps, K[np.ix_(tr, tr)])
                vals.append(np.mean(np.abs(m.predict(X[te]) - y[te])))
        scores[(C, eps)] = float(np.mean(vals)) if vals else (0.0 if classify else np.inf)
    sign = -1.0 if classify else 1.0
    best = min(points, key=lambda p: (round(sign * scores[p], 12),) + p[:1] + ((p[1],) if p[1] is not None else ()))
    return GridResult(best[0], best[1], scores)
