"""Texture matrices (GLCM, GLRLM, GLSZM, NGTDM, LBP) and their reductions."""

from radpath.errors import DataError
from radpath.imaging import quantize_image
from radpath.texture._neighbors import DIRECTIONS_2D, DIRECTIONS_3D, default_directions
from radpath.texture.glcm import (
    HARALICK_NAMES,
    CooccurrenceMatrix,
    glcm,
    glcm_3d_features,
    glcm_direction_features,
    glcm_features,
    haralick_features,
)
from radpath.texture.lbp import LBP_NAMES, lbp_codes, lbp_features, lbp_histogram, lbp_volume_histogram
from radpath.texture.ngtdm import NGTDM_NAMES, NgtdmTable, ngtdm, ngtdm_features
from radpath.texture.runlength import (
    RUN_NAMES,
    ZONE_NAMES,
    RunLengthMatrix,
    SizeZoneMatrix,
    glrlm,
    glrlm_direction_features,
    glrlm_features,
    glrlm_mean_features,
    glszm,
    glszm_features,
)

FAMILIES = {
    "glcm": HARALICK_NAMES,
    "glrlm": RUN_NAMES,
    "glszm": ZONE_NAMES,
    "ngtdm": NGTDM_NAMES,
    "lbp": LBP_NAMES,
}


def texture_feature_names():
    """``family_stat`` names in canonical order."""
    return [f"{family}_{stat}" for family, stats in FAMILIES.items() for stat in stats]


def texture_features(image, roi=None, levels=16) -> dict:
    """All five families for a 2D or 3D ROI, keyed ``family_stat``.

    Matrix families work on the ``levels``-quantized ROI; LBP compares raw
    intensities (per axial slice for 3D input).
    """
    q = quantize_image(image, roi, levels)
    blocks = {
        "glcm": glcm_features(q),
        "glrlm": glrlm_mean_features(q),
        "glszm": glszm_features(q),
        "ngtdm": ngtdm_features(q),
    }
    if q.ndim == 3:
        hist = lbp_volume_histogram(image, q.roi)
    else:
        hist = lbp_histogram(image, q.roi)
        if hist is None:
            raise DataError("ROI has no interior pixel for LBP")
    blocks["lbp"] = lbp_features(hist)
    out = {}
    for family, stats in FAMILIES.items():
        for stat in stats:
            out[f"{family}_{stat}"] = blocks[family][stat]
    return out


__all__ = [
    "CooccurrenceMatrix", "DIRECTIONS_2D", "DIRECTIONS_3D", "FAMILIES", "HARALICK_NAMES", "LBP_NAMES",
    "NGTDM_NAMES", "NgtdmTable", "RUN_NAMES", "RunLengthMatrix", "SizeZoneMatrix", "ZONE_NAMES",
    "default_directions", "glcm", "glcm_3d_features", "glcm_direction_features", "glcm_features",
    "glrlm", "glrlm_direction_features", "glrlm_features", "glrlm_mean_features", "glszm",
    "glszm_features", "haralick_features", "lbp_codes", "lbp_features", "lbp_histogram",
    "lbp_volume_histogram", "ngtdm", "ngtdm_features", "texture_feature_names", "texture_features",
]
