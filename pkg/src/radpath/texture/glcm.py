"""Gray-level co-occurrence matrices and Haralick reductions."""

from dataclasses import dataclass

import numpy as np

from radpath.errors import DataError
from radpath.imaging import OUTSIDE, QuantizedImage
from radpath.texture._neighbors import array_offset, check_direction, default_directions, mean_features, pair_slices

HARALICK_NAMES = (
    "energy",
    "contrast",
    "correlation",
    "variance",
    "homogeneity",
    "entropy",
    "dissimilarity",
    "autocorrelation",
)

_ZERO_VARIANCE = 1e-12


@dataclass(frozen=True)
class CooccurrenceMatrix:
    matrix: np.ndarray
    direction: tuple
    symmetric: bool = True
    normalized: bool = False

    @property
    def total(self) -> float:
        return float(self.matrix.sum())

    def normalize(self) -> "CooccurrenceMatrix":
        if self.normalized:
            return self
        total = self.total
        if total == 0:
            raise DataError(f"no voxel pairs along direction {self.direction}")
        return CooccurrenceMatrix(self.matrix / total, self.direction, self.symmetric, True)


def _glcm_one(codes, levels, direction, symmetric):
    sl = pair_slices(codes.shape, array_offset(direction))
    counts = np.zeros((levels, levels), dtype=np.float64)
    if sl is not None:
        a, b = codes[sl[0]], codes[sl[1]]
        valid = (a != OUTSIDE) & (b != OUTSIDE)
        idx = a[valid] * levels + b[valid]
        counts = np.bincount(idx, minlength=levels * levels).reshape(levels, levels).astype(np.float64)
    if symmetric:
        counts = counts + counts.T
    return CooccurrenceMatrix(counts, direction, symmetric)


def glcm(q: QuantizedImage, directions=None, symmetric=True):
    """Co-occurrence counts at distance 1, one matrix per direction.

    Only pairs with both voxels inside the ROI are counted; symmetric mode
    also counts each pair in reverse.
    """
    if directions is None:
        directions = default_directions(q.ndim)
    directions = [check_direction(d, q.ndim) for d in directions]
    return [_glcm_one(q.codes, q.levels, d, symmetric) for d in directions]


def haralick_features(m) -> dict:
    """Eight Haralick-style scalars of a normalized co-occurrence matrix.

    Gray levels are indexed from 1. Entropy uses the natural log with
    ``0 log 0 = 0``; correlation of a zero-variance matrix is defined as 1.
    """
    p = m.normalize().matrix if isinstance(m, CooccurrenceMatrix) else np.asarray(m, dtype=np.float64)
    n = p.shape[0]
    i, j = np.indices((n, n), dtype=np.float64) + 1.0
    px, py = p.sum(axis=1), p.sum(axis=0)
    levels = np.arange(1, n + 1, dtype=np.float64)
    mu_x, mu_y = levels @ px, levels @ py
    var_x = ((levels - mu_x) ** 2) @ px
    var_y = ((levels - mu_y) ** 2) @ py
    sd = np.sqrt(var_x * var_y)
    if sd <= _ZERO_VARIANCE:
        correlation = 1.0
    else:
        correlation = float(((i - mu_x) * (j - mu_y) * p).sum() / sd)
    nz = p > 0
    diff = i - j
    return {
        "energy": float((p * p).sum()),
        "contrast": float((diff * diff * p).sum()),
        "correlation": correlation,
        "variance": float(((i - mu_x) ** 2 * p).sum()),
        "homogeneity": float((p / (1.0 + diff * diff)).sum()),
        "entropy": float(-(p[nz] * np.log(p[nz])).sum()),
        "dissimilarity": float((np.abs(diff) * p).sum()),
        "autocorrelation": float((i * j * p).sum()),
    }


def glcm_direction_features(q: QuantizedImage, directions=None):
    """Per-direction Haralick maps; ``None`` where a direction has no pairs."""
    out = []
    for m in glcm(q, directions, symmetric=True):
        out.append(haralick_features(m) if m.total > 0 else None)
    return out


def glcm_features(q: QuantizedImage, directions=None) -> dict:
    """Haralick features averaged over directions (13 in 3D, 4 in 2D).

    A ROI without any in-ROI neighbor pair yields the constant-image values.
    """
    feats = mean_features(glcm_direction_features(q, directions))
    if feats is None:
        # isolated voxels only: no texture, treat as a single-level matrix
        single = np.zeros((q.levels, q.levels))
        single[0, 0] = 1.0
        feats = haralick_features(single)
    return feats


def glcm_3d_features(q: QuantizedImage) -> dict:
    if q.ndim != 3:
        raise DataError(f"expected a 3D quantized image, got ndim={q.ndim}")
    return glcm_features(q)
