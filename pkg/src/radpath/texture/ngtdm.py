"""Neighborhood gray-tone difference table and its five reductions."""

from dataclasses import dataclass

import numpy as np

from radpath.errors import DataError
from radpath.imaging import OUTSIDE, QuantizedImage
from radpath.texture._neighbors import neighbor_offsets, pair_slices

NGTDM_NAMES = ("coarseness", "contrast", "busyness", "complexity", "strength")
EPS = 1e-6


@dataclass(frozen=True)
class NgtdmTable:
    counts: np.ndarray      # n_g
    probabilities: np.ndarray  # p_g
    sums: np.ndarray        # s_g

    @property
    def n_valid(self) -> int:
        return int(self.counts.sum())


def ngtdm(q: QuantizedImage) -> NgtdmTable:
    """Per-level counts and summed |level - neighbor mean| over ROI voxels.

    Neighbors are the full 8/26 neighborhood restricted to the ROI; voxels
    with no in-ROI neighbor are skipped.
    """
    codes = q.codes
    inside = codes != OUTSIDE
    values = np.where(inside, codes + 1, 0).astype(np.float64)
    nsum = np.zeros(codes.shape)
    ncount = np.zeros(codes.shape)
    for off in neighbor_offsets(codes.ndim):
        sl = pair_slices(codes.shape, off)
        if sl is None:
            continue
        src, dst = sl
        nsum[src] += values[dst]
        ncount[src] += inside[dst]
    valid = inside & (ncount > 0)
    if not valid.any():
        raise DataError("no ROI voxel has an in-ROI neighbor")
    level = codes[valid]
    diff = np.abs(values[valid] - nsum[valid] / ncount[valid])
    counts = np.bincount(level, minlength=q.levels).astype(np.float64)
    sums = np.bincount(level, weights=diff, minlength=q.levels)
    return NgtdmTable(counts, counts / counts.sum(), sums)


def ngtdm_features(q) -> dict:
    """Coarseness, contrast, busyness, complexity and strength.

    Denominators are floored at ``EPS`` so a constant image gives
    coarseness ``1/EPS`` and zeros elsewhere.
    """
    table = q if isinstance(q, NgtdmTable) else ngtdm(q)
    p, s = table.probabilities, table.sums
    n_valid = table.n_valid
    present = np.flatnonzero(p > 0)
    g = (present + 1).astype(np.float64)
    pp, sp = p[present], s[present]
    n_levels = len(present)

    ps = float(pp @ sp)
    coarseness = 1.0 / max(ps, EPS)

    gi, gj = g[:, None], g[None, :]
    pi, pj = pp[:, None], pp[None, :]
    si, sj = sp[:, None], sp[None, :]
    d2 = (gi - gj) ** 2
    if n_levels > 1:
        contrast = float((pi * pj * d2).sum() / (n_levels * (n_levels - 1)) * sp.sum() / n_valid)
    else:
        contrast = 0.0
    busy_den = float(np.abs(gi * pi - gj * pj).sum())
    busyness = ps / max(busy_den, EPS)
    complexity = float((np.abs(gi - gj) * (pi * si + pj * sj) / (pi + pj)).sum() / n_valid)
    strength = float(((pi + pj) * d2).sum() / max(float(sp.sum()), EPS))
    return {
        "coarseness": coarseness,
        "contrast": contrast,
        "busyness": busyness,
        "complexity": complexity,
        "strength": strength,
    }
