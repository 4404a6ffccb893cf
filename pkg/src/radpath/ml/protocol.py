"""Fold pipeline and the LOOCV / split-train-test protocols.

Every statistic that depends on data (histogram PCA, standardizer, survival
cutoff, target scaling, grid choice, model) is fitted inside
:func:`fit_pipeline` from the training rows it is given, and nothing else.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from radpath.errors import DataError
from radpath.ml.models import (
    C_GRID,
    EPS_GRID,
    LONG,
    SHORT,
    Standardizer,
    grid_search,
    survival_cutoff,
    survival_labels,
    svm_train,
    svr_train,
)
from radpath.radfeatures import HistogramPca

TASKS = ("classify", "regress")
TRAIN_SPLITS = ("train", "training")
TEST_SPLITS = ("validation", "test", "valid")


@dataclass(frozen=True)
class MlConfig:
    task: str = "classify"
    C_grid: tuple = C_GRID
    eps_grid: tuple = EPS_GRID
    folds: int = 5
    seed: int = 0
    cutoff_stat: str = "mean"
    pca_components: int = 3

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"task must be one of {TASKS}, got {self.task!r}")


@dataclass(frozen=True)
class Cohort:
    """Feature matrix and outcome data in a fixed subject order."""

    subject_ids: tuple
    names: tuple
    X: np.ndarray
    survival: np.ndarray
    events: np.ndarray = None
    split: tuple = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        n = len(self.subject_ids)
        if X.shape != (n, len(self.names)):
            raise DataError(f"feature matrix {X.shape} does not match {n} subjects x {len(self.names)} names")
        if len(set(self.subject_ids)) != n:
            raise DataError("duplicate subject ids")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "survival", np.asarray(self.survival, dtype=np.float64))
        ev = np.ones(n, dtype=bool) if self.events is None else np.asarray(self.events, dtype=bool)
        object.__setattr__(self, "events", ev)

    def subset(self, rows):
        rows = np.asarray(rows)
        return Cohort(
            tuple(self.subject_ids[i] for i in rows), self.names, self.X[rows], self.survival[rows],
            self.events[rows], None if self.split is None else tuple(self.split[i] for i in rows),
        )


@dataclass(frozen=True)
class CvPrediction:
    subject_id: str
    fold: int
    score: float  # decision value, or predicted days minus the fold cutoff
    predicted: float  # class (+1 long / -1 short) or predicted days
    truth: float  # class under the fold cutoff, or observed days
    cutoff: float
    survival_days: float
    event: bool

    @property
    def predicted_long(self) -> bool:
        return self.score >= 0

    @property
    def truth_long(self) -> bool:
        return self.survival_days >= self.cutoff


def dictionary_hash(names) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()


@dataclass
class FittedPipeline:
    task: str
    names: tuple
    pca: HistogramPca | None
    standardizer: Standardizer
    cutoff: float
    cutoff_stat: str
    C: float
    epsilon: float | None
    model: object
    grid_scores: dict = field(default_factory=dict)

    def features(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.pca is not None:
            X = self.pca.transform(X)
        return self.standardizer.transform(X)

    def score(self, X):
        """Signed score; positive means predicted long survivor."""
        Z = self.features(X)
        if self.task == "classify":
            return self.model.decision(Z)
        return self.model.predict(Z) - self.cutoff

    def predict(self, X):
        Z = self.features(X)
        if self.task == "classify":
            return self.model.predict(Z).astype(np.float64)
        return self.model.predict(Z)

    def to_dict(self):
        out = {
            "task": self.task,
            "feature_dictionary_sha256": dictionary_hash(self.names),
            "n_features_in": len(self.names),
            "cutoff": self.cutoff,
            "cutoff_stat": self.cutoff_stat,
            "C": self.C,
            "epsilon": self.epsilon,
            "w": self.model.w.tolist(),
            "b": self.model.b,
            "standardizer": self.standardizer.to_dict(),
            "pca": {k: m.to_dict() for k, m in self.pca.models.items()} if self.pca is not None else {},
        }
        if self.task == "regress":
            out["target_mean"] = self.model.target_mean
            out["target_std"] = self.model.target_std
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def fit_pipeline(X, days, names, config: MlConfig = MlConfig()) -> FittedPipeline:
    """Fit every fold-level statistic and the final model on training rows."""
    X = np.asarray(X, dtype=np.float64)
    days = np.asarray(days, dtype=np.float64)
    n = len(days)
    if n < 2:
        raise DataError(f"training fold has {n} subject(s); need at least 2")
    pca = None
    if any("_pcahist_b" in nm for nm in names):
        k = max(1, min(config.pca_components, n - 1))
        pca = HistogramPca(k).fit(X, names)
        X = pca.transform(X)
    std = Standardizer.fit(X)
    Z = std.transform(X)
    K = Z @ Z.T
    cutoff = survival_cutoff(days, config.cutoff_stat)
    folds = min(config.folds, n)
    if config.task == "classify":
        labels = survival_labels(days, cutoff).astype(np.float64)
        if len(np.unique(labels)) < 2:
            raise DataError("training fold holds a single survival class")
        grid = grid_search(Z, labels, "classify", config.C_grid, config.eps_grid, folds, config.seed, K)
        model = svm_train(Z, labels, grid.C, K)
    else:
        mu, sd = days.mean(), days.std()
        sd = sd if sd > 0 else 1.0
        t = (days - mu) / sd
        grid = grid_search(Z, t, "regress", config.C_grid, config.eps_grid, folds, config.seed, K)
        model = svr_train(Z, t, grid.C, grid.epsilon, K, mu, sd)
    return FittedPipeline(config.task, tuple(names), pca, std, cutoff, config.cutoff_stat,
                          grid.C, grid.epsilon, model, grid.scores)


def _predict_rows(pipe: FittedPipeline, cohort: Cohort, rows, fold) -> list:
    X = cohort.X[rows]
    scores = pipe.score(X)
    preds = pipe.predict(X)
    out = []
    for r, s, p in zip(rows, scores, preds):
        days = float(cohort.survival[r])
        truth = float(LONG if days >= pipe.cutoff else SHORT) if pipe.task == "classify" else days
        out.append(CvPrediction(cohort.subject_ids[r], int(fold), float(s), float(p), truth,
                                pipe.cutoff, days, bool(cohort.events[r])))
    return out


def _loocv_fold(args):
    cohort, i, config = args
    train = np.array([j for j in range(len(cohort.subject_ids)) if j != i])
    pipe = fit_pipeline(cohort.X[train], cohort.survival[train], cohort.names, config)
    return _predict_rows(pipe, cohort, [i], i)[0], pipe


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def run_loocv(cohort: Cohort, config: MlConfig = MlConfig(), jobs: int = 1):
    """Leave-one-out predictions in cohort order, plus each fold's fitted pipeline."""
    n = len(cohort.subject_ids)
    if n < 3:
        raise DataError(f"LOOCV needs at least 3 subjects, got {n}")
    results = _map(_loocv_fold, [(cohort, i, config) for i in range(n)], jobs)
    return [r[0] for r in results], [r[1] for r in results]


def split_rows(cohort: Cohort):
    if cohort.split is None:
        raise DataError("split protocol needs a 'split' column in the metadata")
    labels = [str(s).strip().lower() for s in cohort.split]
    bad = sorted({s for s in labels if s not in TRAIN_SPLITS + TEST_SPLITS})
    if bad:
        raise DataError(f"unknown 'split' values {bad}")
    train = np.array([i for i, s in enumerate(labels) if s in TRAIN_SPLITS], dtype=np.int64)
    test = np.array([i for i, s in enumerate(labels) if s in TEST_SPLITS], dtype=np.int64)
    if len(train) == 0 or len(test) == 0:
        raise DataError("'split' column must mark both training and validation subjects")
    return train, test


def run_split(cohort: Cohort, config: MlConfig = MlConfig()):
    """Fit on the training split, predict every validation subject (fold 0)."""
    train, test = split_rows(cohort)
    pipe = fit_pipeline(cohort.X[train], cohort.survival[train], cohort.names, config)
    return _predict_rows(pipe, cohort, test, 0), pipe
