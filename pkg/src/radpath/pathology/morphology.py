"""Grayscale morphological reconstruction and background normalization."""

import numba
import numpy as np

from radpath.errors import DataError
from radpath.imaging import Patch


@numba.njit(cache=True)
def _hybrid_reconstruct(J, I):
    """In-place reconstruction by dilation of ``J`` under ``I`` (8-connectivity).

    Raster and anti-raster sweeps followed by FIFO propagation of the pixels
    that can still raise a neighbor.
    """
    h, w = J.shape
    n = h * w
    # raster sweep: causal neighbors are the previous row and the left pixel
    for r in range(h):
        for c in range(w):
            m = J[r, c]
            if c > 0 and J[r, c - 1] > m:
                m = J[r, c - 1]
            if r > 0:
                for dc in range(-1, 2):
                    cc = c + dc
                    if 0 <= cc < w and J[r - 1, cc] > m:
                        m = J[r - 1, cc]
            J[r, c] = m if m < I[r, c] else I[r, c]

    queue = np.empty(n, dtype=np.int64)
    queued = np.zeros(n, dtype=np.bool_)
    head = 0
    size = 0
    # anti-raster sweep
    for r in range(h - 1, -1, -1):
        for c in range(w - 1, -1, -1):
            m = J[r, c]
            if c < w - 1 and J[r, c + 1] > m:
                m = J[r, c + 1]
            if r < h - 1:
                for dc in range(-1, 2):
                    cc = c + dc
                    if 0 <= cc < w and J[r + 1, cc] > m:
                        m = J[r + 1, cc]
            v = m if m < I[r, c] else I[r, c]
            J[r, c] = v
            push = False
            if c < w - 1 and J[r, c + 1] < v and J[r, c + 1] < I[r, c + 1]:
                push = True
            if r < h - 1:
                for dc in range(-1, 2):
                    cc = c + dc
                    if 0 <= cc < w and J[r + 1, cc] < v and J[r + 1, cc] < I[r + 1, cc]:
                        push = True
            if push:
                k = r * w + c
                queue[(head + size) % n] = k
                queued[k] = True
                size += 1

    while size > 0:
        k = queue[head]
        head = (head + 1) % n
        size -= 1
        queued[k] = False
        r = k // w
        c = k - r * w
        v = J[r, c]
        for dr in range(-1, 2):
            rr = r + dr
            if rr < 0 or rr >= h:
                continue
            for dc in range(-1, 2):
                cc = c + dc
                if cc < 0 or cc >= w or (dr == 0 and dc == 0):
                    continue
                if J[rr, cc] < v and J[rr, cc] != I[rr, cc]:
                    J[rr, cc] = v if v < I[rr, cc] else I[rr, cc]
                    kk = rr * w + cc
                    if not queued[kk]:
                        queue[(head + size) % n] = kk
                        queued[kk] = True
                        size += 1
    return J


def reconstruct(marker, mask) -> np.ndarray:
    """Grayscale reconstruction by dilation of ``marker`` under ``mask``.

    Equivalent to iterating ``min(dilate_3x3(J), mask)`` from ``J = marker``
    until stable.
    """
    marker = np.asarray(marker, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if marker.shape != mask.shape or marker.ndim != 2:
        raise DataError(f"marker/mask must be 2D arrays of equal shape, got {marker.shape} and {mask.shape}")
    if np.any(marker > mask):
        raise DataError("marker exceeds mask")
    if marker.size == 0:
        return marker.copy()
    return _hybrid_reconstruct(marker.copy(), np.ascontiguousarray(mask))


def h_domes(image, h) -> np.ndarray:
    """``image - reconstruct(image - h, image)``: bright domes capped at height ``h``."""
    image = np.asarray(image, dtype=np.float64)
    return image - reconstruct(image - h, image)


def normalize_background(patch: Patch, h: float = 50.0) -> Patch:
    """Flatten the background of a dark-nuclei patch.

    Working on the inverted patch, the background is the reconstruction of
    a marker equal to the image on its border and to ``image - h`` inside.
    Everything connected to the border or less than ``h`` high is absorbed
    into the background; the residual (nuclei) is stretched to [0, 255] and
    inverted back so nuclei stay dark on a white background.
    """
    inv = 255.0 - patch.pixels.astype(np.float64)
    marker = np.maximum(inv - h, 0.0)
    marker[0, :], marker[-1, :] = inv[0, :], inv[-1, :]
    marker[:, 0], marker[:, -1] = inv[:, 0], inv[:, -1]
    residual = inv - reconstruct(marker, inv)
    top = residual.max()
    if top <= 0:
        return Patch(np.full(patch.pixels.shape, 255, dtype=np.uint8))
    out = 255.0 - np.rint(residual * (255.0 / top))
    return Patch(np.clip(out, 0, 255).astype(np.uint8))
