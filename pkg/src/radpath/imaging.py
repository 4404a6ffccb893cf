"""Core image types, file IO, gray-level quantization and histogram matching.

Volumes are stored as numpy arrays indexed ``[x, y, z]``; on disk the payload
is written x-fastest (Fortran order), little-endian.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from radpath.errors import DataError

OUTSIDE = -1


class Modality(str, enum.Enum):
    T1 = "T1"
    T1GD = "T1Gd"
    T2 = "T2"
    FLAIR = "FLAIR"

    @property
    def key(self) -> str:
        """Lower-case short name used in file names and feature names."""
        return self.value.lower()


class Label(enum.IntEnum):
    BACKGROUND = 0
    ETUMOR = 1
    NONETUMOR = 2
    EDEMA = 3
    VENT = 4

    @property
    def key(self) -> str:
        return self.name.lower()


TUMOR_LABELS = (Label.ETUMOR, Label.NONETUMOR, Label.EDEMA)


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Volume:
    """A 3D scalar image with voxel spacing in millimeters."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    modality: Modality | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DataError(f"volume must be 3D with non-empty axes, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("volume contains non-finite values")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise DataError(f"spacing must be three positive values, got {self.spacing}")
        modality = Modality(self.modality) if self.modality is not None else None
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "modality", modality)

    @property
    def dims(self):
        return self.data.shape


@dataclass(frozen=True)
class LabelMask:
    """Integer label image over :class:`Label` codes."""

    labels: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise DataError(f"mask must be 3D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > max(Label)):
            raise DataError("mask contains label values outside {0,1,2,3,4}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise DataError(f"spacing must be three positive values, got {self.spacing}")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8)))
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self):
        return self.labels.shape

    def region(self, label) -> np.ndarray:
        return self.labels == int(label)

    def tumor(self) -> np.ndarray:
        return np.isin(self.labels, [int(lab) for lab in TUMOR_LABELS])


@dataclass(frozen=True)
class Patch:
    """8-bit grayscale 2D tile, indexed ``[row, col]``."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise DataError(f"patch must be 2D, got shape {pixels.shape}")
        if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
            raise DataError("patch pixel values must lie in [0, 255]")
        object.__setattr__(self, "pixels", _frozen(pixels.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class QuantizedImage:
    """Gray-level codes in ``[0, levels-1]`` with :data:`OUTSIDE` marking non-ROI voxels."""

    codes: np.ndarray
    levels: int = 16
    lo: float = field(default=0.0, compare=False)
    hi: float = field(default=0.0, compare=False)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        inside = codes != OUTSIDE
        if not inside.any():
            raise DataError("quantized image has no ROI voxels")
        if codes[inside].min() < 0 or codes[inside].max() >= self.levels:
            raise DataError("quantized codes outside [0, levels-1]")
        object.__setattr__(self, "codes", _frozen(codes))

    @property
    def ndim(self) -> int:
        return self.codes.ndim

    @property
    def roi(self) -> np.ndarray:
        return self.codes != OUTSIDE


# --------------------------------------------------------------------------
# Quantization


def quantize(values, levels: int = 16) -> np.ndarray:
    """Equal-width binning of ``values`` over their own ``[min, max]`` range.

    The top edge is inclusive, and a constant input maps to code 0.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise DataError("cannot quantize an empty ROI")
    if levels < 2:
        raise DataError(f"need at least 2 gray levels, got {levels}")
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.int64)
    codes = np.floor((values - lo) / (hi - lo) * levels).astype(np.int64)
    return np.minimum(codes, levels - 1)


def quantize_image(image, roi=None, levels: int = 16) -> QuantizedImage:
    """Quantize the ROI voxels of ``image``; voxels outside get :data:`OUTSIDE`."""
    image = np.asarray(image, dtype=np.float64)
    roi = np.ones(image.shape, dtype=bool) if roi is None else np.asarray(roi, dtype=bool)
    if roi.shape != image.shape:
        raise DataError(f"ROI shape {roi.shape} does not match image shape {image.shape}")
    if not roi.any():
        raise DataError("cannot quantize an empty ROI")
    codes = np.full(image.shape, OUTSIDE, dtype=np.int64)
    vals = image[roi]
    codes[roi] = quantize(vals, levels)
    return QuantizedImage(codes, levels, float(vals.min()), float(vals.max()))


# --------------------------------------------------------------------------
# Histogram matching


def histogram_match(source: Volume, reference: Volume, n_quantiles: int = 256) -> Volume:
    """Map ``source`` intensities so their distribution follows ``reference``.

    Uses piecewise-linear CDF inversion on ``n_quantiles`` evenly spaced
    quantile points of each volume.
    """
    src = source.data.astype(np.float64).ravel()
    ref = reference.data.astype(np.float64).ravel()
    q = np.linspace(0.0, 1.0, n_quantiles)
    # source knots sit on order statistics, so re-matching the output is the identity
    src_q = np.quantile(src, q, method="nearest")
    ref_q = np.quantile(ref, q)
    # np.interp needs strictly increasing knots; collapse tied source quantiles
    knots, first = np.unique(src_q, return_index=True)
    last = np.r_[first[1:] - 1, len(src_q) - 1]
    targets = 0.5 * (ref_q[first] + ref_q[last])
    if len(knots) == 1:
        mapped = np.full_like(src, targets[0])
    else:
        mapped = np.interp(src, knots, targets)
    return Volume(mapped.reshape(source.data.shape), source.spacing, source.modality)


# --------------------------------------------------------------------------
# Volume / mask IO

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


def _parse_header(path: Path) -> dict:
    header = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        header[key.strip()] = value.strip()
    for key in ("dims", "spacing", "dtype", "data"):
        if key not in header:
            raise DataError(f"{path}: header missing required key {key!r}")
    return header


def _read_payload(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such header file: {path}")
    header = _parse_header(path)
    try:
        dims = tuple(int(v) for v in header["dims"].split(","))
        spacing = tuple(float(v) for v in header["spacing"].split(","))
    except ValueError as exc:
        raise DataError(f"{path}: malformed dims/spacing: {exc}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise DataError(f"{path}: dims must be three positive integers")
    dtype = _DTYPES.get(header["dtype"])
    if dtype is None:
        raise DataError(f"{path}: unsupported dtype {header['dtype']!r}")
    raw_path = path.parent / header["data"]
    if not raw_path.is_file():
        raise DataError(f"{path}: missing payload file {raw_path.name}")
    raw = raw_path.read_bytes()
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) != expected:
        raise DataError(
            f"{path}: payload size mismatch: expected {expected} bytes, found {len(raw)}"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape(dims, order="F")
    return data.astype(dtype.newbyteorder("=")), spacing, header


def _write_payload(path, arr, spacing, dtype_key, extra=None):
    path = Path(path)
    raw_name = path.with_suffix(".raw").name
    lines = [
        "dims=" + ",".join(str(d) for d in arr.shape),
        "spacing=" + ",".join(repr(float(s)) for s in spacing),
        f"dtype={dtype_key}",
        f"data={raw_name}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    payload = np.asarray(arr, dtype=_DTYPES[dtype_key]).tobytes(order="F")
    (path.parent / raw_name).write_bytes(payload)


def read_volume(path) -> Volume:
    data, spacing, header = _read_payload(path)
    if data.dtype.kind != "f":
        data = data.astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: volume contains non-finite values")
    modality = header.get("modality")
    return Volume(data, spacing, Modality(modality) if modality else None)


def write_volume(path, volume: Volume) -> None:
    extra = {"modality": volume.modality.value} if volume.modality else None
    _write_payload(path, volume.data, volume.spacing, "f32", extra)


def read_mask(path) -> LabelMask:
    data, spacing, _ = _read_payload(path)
    if data.dtype.kind == "f":
        if not np.all(data == np.round(data)):
            raise DataError(f"{path}: mask payload is not integral")
    return LabelMask(data.astype(np.int64), spacing)


def write_mask(path, mask: LabelMask) -> None:
    _write_payload(path, mask.labels, mask.spacing, "u8")


# --------------------------------------------------------------------------
# PGM (binary P5, maxval 255)


def _pgm_tokens(buf: bytes, count: int):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(buf) and chr(buf[pos]).isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not chr(buf[pos]).isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PGM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path) -> Patch:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such PGM file: {path}")
    buf = path.read_bytes()
    if buf[:2] != b"P5":
        raise DataError(f"{path}: not a binary PGM (P5) file")
    (w, h, maxval), offset = _pgm_tokens(buf, 3)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 is supported, got {maxval}")
    raster = buf[offset:]
    if len(raster) != w * h:
        raise DataError(f"{path}: payload size mismatch: expected {w * h} bytes, found {len(raster)}")
    return Patch(np.frombuffer(raster, dtype=np.uint8).reshape(h, w))


def write_pgm(path, patch: Patch) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"P5\n{patch.width} {patch.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(patch.pixels).tobytes())
