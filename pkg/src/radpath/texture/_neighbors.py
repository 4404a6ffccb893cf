"""Offset sets and shifted-view helpers shared by the matrix builders."""

import itertools

import numpy as np

DIRECTIONS_2D = ((1, 0), (1, 1), (0, 1), (-1, 1))


def _unique_modulo_sign(ndim):
    out = []
    for off in itertools.product((-1, 0, 1), repeat=ndim):
        nonzero = [c for c in off if c != 0]
        if nonzero and nonzero[0] > 0:
            out.append(off)
    return tuple(out)


DIRECTIONS_3D = _unique_modulo_sign(3)
assert len(DIRECTIONS_3D) == 13


def default_directions(ndim):
    if ndim == 2:
        return DIRECTIONS_2D
    if ndim == 3:
        return DIRECTIONS_3D
    raise ValueError(f"texture directions defined for 2D/3D only, got ndim={ndim}")


def neighbor_offsets(ndim):
    """Full 8- (2D) or 26- (3D) neighborhood, excluding the origin."""
    return tuple(off for off in itertools.product((-1, 0, 1), repeat=ndim) if any(off))


def pair_slices(shape, offset):
    """Slices ``(a, b)`` such that ``arr[b]`` is ``arr[a]`` displaced by ``offset``."""
    src, dst = [], []
    for n, d in zip(shape, offset):
        if abs(d) >= n:
            return None
        if d >= 0:
            src.append(slice(0, n - d))
            dst.append(slice(d, n))
        else:
            src.append(slice(-d, n))
            dst.append(slice(0, n + d))
    return tuple(src), tuple(dst)


def check_direction(direction, ndim):
    direction = tuple(int(c) for c in direction)
    if len(direction) != ndim:
        raise ValueError(f"direction {direction} does not match image ndim {ndim}")
    if not any(direction):
        raise ValueError("direction must be a nonzero offset")
    return direction


def array_offset(direction):
    """Array-axis displacement of a direction.

    3D directions are ``(dx, dy, dz)`` on ``[x, y, z]`` arrays. 2D directions
    are ``(dx, dy)`` with x along columns of a ``[row, col]`` array.
    """
    return tuple(reversed(direction)) if len(direction) == 2 else tuple(direction)


def mean_features(per_direction):
    """Arithmetic mean of feature maps, skipping directions without data."""
    present = [f for f in per_direction if f is not None]
    if not present:
        return None
    names = list(present[0])
    return {k: float(np.mean([f[k] for f in present])) for k in names}
