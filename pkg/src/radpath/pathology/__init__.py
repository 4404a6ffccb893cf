"""Histology pipeline: patches, background normalization, nuclei and subject features."""

from radpath.pathology.extract import (
    PathFeatureConfig,
    PatchFeatureRow,
    aggregate_rows,
    extract_path,
    patch_feature_names,
    patch_row,
    path_feature_names,
)
from radpath.pathology.morphology import h_domes, normalize_background, reconstruct
from radpath.pathology.nuclei import (
    NUCLEUS_FEATURES,
    NucleusObject,
    boundary_chain,
    nucleus_features,
    nucleus_perimeter,
    segment_nuclei,
)
from radpath.pathology.patches import sample_patches, tissue_fraction

__all__ = [
    "NUCLEUS_FEATURES",
    "NucleusObject",
    "PathFeatureConfig",
    "PatchFeatureRow",
    "aggregate_rows",
    "boundary_chain",
    "extract_path",
    "h_domes",
    "normalize_background",
    "nucleus_features",
    "nucleus_perimeter",
    "patch_feature_names",
    "patch_row",
    "path_feature_names",
    "reconstruct",
    "sample_patches",
    "segment_nuclei",
    "tissue_fraction",
]
