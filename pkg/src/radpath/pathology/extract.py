"""Patch rows and subject-level histology feature vectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from radpath.errors import DataError
from radpath.imaging import Patch
from radpath.pathology.morphology import normalize_background
from radpath.pathology.nuclei import (
    H_MINIMA,
    MIN_NUCLEUS_AREA,
    NUCLEUS_FEATURES,
    nucleus_features,
    segment_nuclei,
)
from radpath.pathology.patches import sample_patches
from radpath.radfeatures import FeatureVector
from radpath.texture import texture_feature_names, texture_features

log = logging.getLogger(__name__)

NUCLEUS_STATS = ("mean", "std", "median")


@dataclass(frozen=True)
class PathFeatureConfig:
    n_patches: int = 100
    patch_size: int = 1024
    background_h: float = 50.0
    min_nucleus_area: int = MIN_NUCLEUS_AREA
    watershed_h: float = H_MINIMA
    levels: int = 16


def patch_feature_names():
    names = ["path_nuclei_count"]
    names += [f"path_nuc_{f}_{s}" for f in NUCLEUS_FEATURES for s in NUCLEUS_STATS]
    names += [f"path_patch_{n}" for n in texture_feature_names()]
    return names


def path_feature_names():
    return patch_feature_names()


@dataclass(frozen=True)
class PatchFeatureRow:
    patch_id: int
    n_nuclei: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise DataError(f"patch {self.patch_id}: non-finite features")
        object.__setattr__(self, "values", values)


def patch_row(patch: Patch, patch_id: int = 0, config: PathFeatureConfig = PathFeatureConfig()) -> PatchFeatureRow:
    """Nuclei aggregates and whole-patch texture for one patch.

    Segmentation and texture use the background-normalized patch; nuclear
    intensity and gradient statistics read the raw pixels.
    """
    norm = normalize_background(patch, config.background_h)
    labels = segment_nuclei(norm, config.min_nucleus_area, config.watershed_h)
    nuclei = nucleus_features(labels, patch, config.levels)
    if nuclei:
        table = np.array([n.feature_values() for n in nuclei], dtype=np.float64)
        stats = np.stack([table.mean(axis=0), table.std(axis=0), np.median(table, axis=0)], axis=1).ravel()
    else:
        stats = np.zeros(len(NUCLEUS_FEATURES) * len(NUCLEUS_STATS))
    tex = texture_features(norm.pixels.astype(np.float64), None, config.levels)
    values = np.concatenate([[len(nuclei)], stats, [tex[k] for k in texture_feature_names()]])
    return PatchFeatureRow(patch_id, len(nuclei), values)


def aggregate_rows(subject_id, rows) -> FeatureVector:
    """Mean over patch rows, reduced in patch-id order."""
    if not rows:
        raise DataError(f"subject {subject_id}: no patches")
    rows = sorted(rows, key=lambda r: r.patch_id)
    if all(r.n_nuclei == 0 for r in rows):
        log.warning("subject %s: no nuclei found in any patch; nuclear features set to 0", subject_id)
    table = np.stack([r.values for r in rows])
    return FeatureVector(subject_id, path_feature_names(), table.mean(axis=0), "Path")


def extract_path(subject_id, source, seed=0, config: PathFeatureConfig = PathFeatureConfig()):
    """Subject-level histology features.

    Parameters
    ----------
    source : Patch or sequence of Patch
        A whole slide (patches are sampled from it with ``seed``) or a
        ready list of patches.

    Returns
    -------
    vector : FeatureVector
    rows : list of PatchFeatureRow
        Per-patch rows for auditing.
    """
    if isinstance(source, Patch):
        patches, _ = sample_patches(source, config.n_patches, config.patch_size, seed)
    else:
        patches = list(source)
    try:
        rows = [patch_row(p, i, config) for i, p in enumerate(patches)]
        return aggregate_rows(subject_id, rows), rows
    except DataError as exc:
        raise DataError(f"subject {subject_id}: {exc}") from exc
