"""Gray-level run-length and size-zone matrices.

Both matrices index gray level along axis 0 and run length / zone size
along axis 1 (column ``k`` holds length ``k + 1``), and share the same
eleven-scalar reduction.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from radpath.errors import DataError
from radpath.imaging import OUTSIDE, QuantizedImage
from radpath.texture._neighbors import array_offset, check_direction, default_directions, mean_features, pair_slices

RUN_NAMES = ("sre", "lre", "gln", "rln", "rp", "lgre", "hgre", "srlge", "srhge", "lrlge", "lrhge")
ZONE_NAMES = ("sze", "lze", "gln", "zsn", "zp", "lgze", "hgze", "szlge", "szhge", "lzlge", "lzhge")


@dataclass(frozen=True)
class RunLengthMatrix:
    matrix: np.ndarray
    direction: tuple
    n_voxels: int


@dataclass(frozen=True)
class SizeZoneMatrix:
    matrix: np.ndarray
    n_voxels: int


def _continues(codes, direction):
    """Boolean map: voxel p and p + direction are both in-ROI with equal codes."""
    out = np.zeros(codes.shape, dtype=bool)
    sl = pair_slices(codes.shape, direction)
    if sl is not None:
        a, b = codes[sl[0]], codes[sl[1]]
        out[sl[0]] = (a != OUTSIDE) & (a == b)
    return out


def glrlm(q: QuantizedImage, direction) -> RunLengthMatrix:
    """Maximal equal-code runs along ``direction``, truncated at the ROI boundary."""
    direction = check_direction(direction, q.ndim)
    offset = array_offset(direction)
    codes = q.codes
    inside = codes != OUTSIDE
    forward = _continues(codes, offset)
    # a run starts where the predecessor does not continue into p
    has_pred = np.zeros(codes.shape, dtype=bool)
    sl = pair_slices(codes.shape, offset)
    if sl is not None:
        has_pred[sl[1]] = forward[sl[0]]
    starts = np.argwhere(inside & ~has_pred)
    step = np.asarray(offset)
    lengths = np.ones(len(starts), dtype=np.int64)
    cur = starts.copy()
    active = forward[tuple(cur.T)]
    while active.any():
        cur[active] += step
        lengths[active] += 1
        idx = np.flatnonzero(active)
        active[idx] = forward[tuple(cur[idx].T)]
    max_len = max(codes.shape)
    levels = codes[tuple(starts.T)]
    flat = np.bincount(levels * max_len + (lengths - 1), minlength=q.levels * max_len)
    return RunLengthMatrix(flat.reshape(q.levels, max_len).astype(np.float64), direction, int(inside.sum()))


def _emphasis_features(matrix, n_voxels, names):
    r = np.asarray(matrix, dtype=np.float64)
    n_units = r.sum()
    if n_units <= 0:
        raise DataError("matrix contains no runs/zones")
    g = np.arange(1, r.shape[0] + 1, dtype=np.float64)[:, None]
    length = np.arange(1, r.shape[1] + 1, dtype=np.float64)[None, :]
    g2, l2 = g * g, length * length
    values = (
        (r / l2).sum() / n_units,
        (r * l2).sum() / n_units,
        (r.sum(axis=1) ** 2).sum() / n_units,
        (r.sum(axis=0) ** 2).sum() / n_units,
        n_units / n_voxels,
        (r / g2).sum() / n_units,
        (r * g2).sum() / n_units,
        (r / (g2 * l2)).sum() / n_units,
        (r * g2 / l2).sum() / n_units,
        (r * l2 / g2).sum() / n_units,
        (r * g2 * l2).sum() / n_units,
    )
    return {name: float(v) for name, v in zip(names, values)}


def glrlm_features(rlm: RunLengthMatrix) -> dict:
    """Eleven run-length emphasis/non-uniformity scalars (gray levels 1-based)."""
    return _emphasis_features(rlm.matrix, rlm.n_voxels, RUN_NAMES)


def glrlm_direction_features(q: QuantizedImage, directions=None):
    if directions is None:
        directions = default_directions(q.ndim)
    return [glrlm_features(glrlm(q, d)) for d in directions]


def glrlm_mean_features(q: QuantizedImage, directions=None) -> dict:
    return mean_features(glrlm_direction_features(q, directions))


def glszm(q: QuantizedImage) -> SizeZoneMatrix:
    """Connected same-code zones (8-connectivity in 2D, 26 in 3D)."""
    codes = q.codes
    structure = np.ones((3,) * codes.ndim, dtype=bool)
    n_voxels = int((codes != OUTSIDE).sum())
    per_level = []
    for level in range(q.levels):
        labeled, n = ndimage.label(codes == level, structure=structure)
        per_level.append(np.bincount(labeled.ravel())[1:] if n else np.zeros(0, dtype=np.int64))
    max_size = max(int(s.max()) for s in per_level if len(s))
    counts = np.zeros((q.levels, max_size), dtype=np.float64)
    for level, sizes in enumerate(per_level):
        counts[level] = np.bincount(sizes - 1, minlength=max_size) if len(sizes) else 0.0
    return SizeZoneMatrix(counts, n_voxels)


def glszm_features(q) -> dict:
    zones = q if isinstance(q, SizeZoneMatrix) else glszm(q)
    return _emphasis_features(zones.matrix, zones.n_voxels, ZONE_NAMES)
