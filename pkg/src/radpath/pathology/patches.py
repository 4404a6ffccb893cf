"""Random tissue patch sampling from a grayscale slide."""

import numpy as np

from radpath.errors import DataError
from radpath.imaging import Patch

TISSUE_THRESHOLD = 220
MIN_TISSUE_FRACTION = 0.5


def tissue_fraction(pixels, threshold: int = TISSUE_THRESHOLD) -> float:
    """Share of pixels darker than ``threshold``."""
    return float(np.mean(np.asarray(pixels) < threshold))


def sample_patches(slide: Patch, n: int = 100, size: int = 1024, seed=0,
                   min_fraction: float = MIN_TISSUE_FRACTION, budget_factor: int = 50):
    """Draw ``n`` square patches whose tissue fraction is at least ``min_fraction``.

    Top-left corners are drawn uniformly; candidates failing the tissue rule
    are rejected. At most ``budget_factor * n`` candidates are tried.

    Returns
    -------
    patches : list of Patch
    corners : list of (row, col)
    """
    pix = slide.pixels
    h, w = pix.shape
    if size > h or size > w:
        raise DataError(f"slide {h}x{w} is smaller than patch size {size}")
    if n < 1:
        raise DataError("need at least one patch")
    rng = np.random.default_rng(seed)
    patches, corners = [], []
    for _ in range(budget_factor * n):
        r = int(rng.integers(0, h - size + 1))
        c = int(rng.integers(0, w - size + 1))
        crop = pix[r:r + size, c:c + size]
        if tissue_fraction(crop) >= min_fraction:
            patches.append(Patch(crop.copy()))
            corners.append((r, c))
            if len(patches) == n:
                return patches, corners
    raise DataError(f"only {len(patches)} of {n} patches reached tissue fraction {min_fraction}")
