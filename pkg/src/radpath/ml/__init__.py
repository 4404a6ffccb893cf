"""Linear SVM / SVR with grid search and cross-validation protocols."""

from radpath.ml.models import (
    C_GRID,
    EPS_GRID,
    LONG,
    SHORT,
    GridResult,
    LinearSvmModel,
    LinearSvrModel,
    Standardizer,
    fold_ids,
    grid_search,
    survival_cutoff,
    survival_labels,
    svm_train,
    svr_train,
)
from radpath.ml.protocol import (
    Cohort,
    CvPrediction,
    FittedPipeline,
    MlConfig,
    dictionary_hash,
    fit_pipeline,
    run_loocv,
    run_split,
)
from radpath.ml.solver import solve

__all__ = [
    "C_GRID",
    "EPS_GRID",
    "LONG",
    "SHORT",
    "Cohort",
    "CvPrediction",
    "FittedPipeline",
    "GridResult",
    "LinearSvmModel",
    "LinearSvrModel",
    "MlConfig",
    "Standardizer",
    "dictionary_hash",
    "fit_pipeline",
    "fold_ids",
    "grid_search",
    "run_loocv",
    "run_split",
    "solve",
    "survival_cutoff",
    "survival_labels",
    "svm_train",
    "svr_train",
]
