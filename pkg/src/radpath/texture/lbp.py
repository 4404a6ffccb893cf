"""Rotation-invariant uniform local binary patterns, P=8 neighbors at R=1.

Diagonal neighbors are bilinearly interpolated. The comparison is made on
interpolated *differences* to the center, so exactly flat neighborhoods
always compare as equal (s = 1).
"""

import numpy as np

from radpath.errors import DataError

P = 8
R = 1
N_BINS = P + 2
LBP_NAMES = tuple(f"bin{k}" for k in range(N_BINS))

_A = np.sqrt(2.0) / 2.0
_W_EDGE = _A * (1.0 - _A)
_W_DIAG = _A * _A

# neighbor p sits at angle 2*pi*p/P; (drow, dcol) = (-sin, cos)
_AXIS = {0: (0, 1), 2: (-1, 0), 4: (0, -1), 6: (1, 0)}
_DIAG = {1: (-1, 1), 3: (-1, -1), 5: (1, -1), 7: (1, 1)}


def _shift(img, dr, dc):
    h, w = img.shape
    return img[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]


def lbp_codes(img) -> np.ndarray:
    """riu2 code (0..9) for every interior pixel; shape ``(H-2, W-2)``."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise DataError(f"LBP needs a 2D image of at least 3x3, got shape {img.shape}")
    center = _shift(img, 0, 0)
    bits = np.empty((P,) + center.shape, dtype=np.int8)
    for p, (dr, dc) in _AXIS.items():
        bits[p] = _shift(img, dr, dc) - center >= 0
    for p, (dr, dc) in _DIAG.items():
        # bilinear weights over the 2x2 cell {center, row-neighbor, col-neighbor, diagonal}
        edges = (_shift(img, dr, 0) - center) + (_shift(img, 0, dc) - center)
        diff = _W_EDGE * edges + _W_DIAG * (_shift(img, dr, dc) - center)
        bits[p] = diff >= 0
    ones = bits.sum(axis=0)
    transitions = np.abs(bits - np.roll(bits, 1, axis=0)).sum(axis=0)
    return np.where(transitions <= 2, ones, P + 1).astype(np.int64)


def lbp_histogram(img, roi=None) -> np.ndarray:
    """Normalized 10-bin histogram of riu2 codes over interior pixels.

    With ``roi`` given, only interior pixels whose center lies in the ROI
    are counted. Returns ``None`` when no pixel qualifies.
    """
    codes = lbp_codes(img)
    if roi is not None:
        roi = np.asarray(roi, dtype=bool)
        codes = codes[roi[1:-1, 1:-1]]
    codes = codes.ravel()
    if codes.size == 0:
        return None
    hist = np.bincount(codes, minlength=N_BINS).astype(np.float64)
    return hist / hist.sum()


def lbp_volume_histogram(volume, roi) -> np.ndarray:
    """Mean of per-axial-slice histograms over slices intersecting the ROI."""
    volume = np.asarray(volume, dtype=np.float64)
    roi = np.asarray(roi, dtype=bool)
    hists = []
    if volume.shape[0] >= 3 and volume.shape[1] >= 3:
        for z in range(volume.shape[2]):
            if not roi[:, :, z].any():
                continue
            h = lbp_histogram(volume[:, :, z], roi[:, :, z])
            if h is not None:
                hists.append(h)
    if not hists:
        raise DataError("ROI has no interior pixel in any axial slice for LBP")
    return np.mean(hists, axis=0)


def lbp_features(hist) -> dict:
    return {name: float(v) for name, v in zip(LBP_NAMES, hist)}
