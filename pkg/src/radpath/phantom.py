"""Synthetic cohort with planted, independent radiographic and histologic risk signals.

Each subject gets two independent uniform risks. ``risk_rad`` sets the
period of sinusoidal stripes inside the enhancing tumor of every MR
sequence (shorter period, higher GLCM contrast). ``risk_path`` sets the
density of dark nuclei on the slide. Survival falls linearly with their
mean; ``noise`` is expressed in units of that mean's standard deviation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from radpath.errors import DataError
from radpath.imaging import Label, LabelMask, Modality, Patch, Volume, write_mask, write_pgm, write_volume

RISK_SD = math.sqrt(1.0 / 24.0)  # sd of the mean of two independent U(0, 1)
S0 = 1000.0
MIN_DAYS = 30.0

# sin(pi / period) runs linearly from 0.3 to 0.9 with risk_rad
STRIPE_SIN = (0.3, 0.9)
# slow phase drift (cycles per voxel along y, z) so each ROI samples many stripe phases
STRIPE_TILT = (0.05, 0.03)

# background intensities per sequence: brain, vent, core, etumor, edema
TISSUE = {
    Modality.T1: (100.0, 40.0, 70.0, 90.0, 80.0),
    Modality.T1GD: (100.0, 40.0, 75.0, 160.0, 85.0),
    Modality.T2: (90.0, 180.0, 140.0, 120.0, 150.0),
    Modality.FLAIR: (95.0, 30.0, 120.0, 130.0, 170.0),
}


@dataclass(frozen=True)
class PhantomSpec:
    n_subjects: int = 60
    dims: tuple = (32, 32, 16)
    spacing: tuple = (1.0, 1.0, 2.0)
    slide_size: int = 384
    seed: int = 0
    noise: float = 0.1
    censor_rate: float = 0.1
    image_noise: float = 3.0
    stripe_amplitude: float = 30.0
    nuclei_spacing: tuple = (40.0, 16.0)  # lattice pitch at risk_path 0 and 1
    n_patches: int = 8
    patch_size: int = 96
    train_fraction: float = 0.5

    def __post_init__(self):
        if self.n_subjects < 1:
            raise DataError("phantom needs at least one subject")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise DataError(f"bad dims {self.dims}")
        if self.noise < 0 or not 0 <= self.censor_rate < 1:
            raise DataError("noise must be >= 0 and censor_rate in [0, 1)")


def stripe_period(risk_rad) -> float:
    lo, hi = STRIPE_SIN
    return math.pi / math.asin(lo + (hi - lo) * float(risk_rad))


def subject_id(i) -> str:
    return f"S{i + 1:03d}"


def _rng(seed, *keys):
    return np.random.default_rng([int(seed), *map(int, keys)])


# --------------------------------------------------------------------------
# radiology


@dataclass(frozen=True)
class Geometry:
    center: tuple  # tumor center in mm
    core: float  # radii in mm
    shell: float
    edema: float
    vent_offset: float


def _radii(spacing):
    # the tumor must span at least 3 voxels of ETumor shell along the coarsest axis
    s = max(spacing)
    core = max(3.0, 1.5 * s)
    shell = core + max(3.0, 1.5 * s)
    edema = shell + max(3.0, 1.5 * s)
    return core, shell, edema


def draw_geometry(spec: PhantomSpec, rng) -> Geometry:
    ext = np.array(spec.dims) * np.array(spec.spacing)
    core, shell, edema = _radii(spec.spacing)
    vent_r = 3.0
    # tumor sits in the +x half; ventricles at the center
    need_x = 2 * edema + 2 * vent_r + 2.0
    if ext[0] / 2 < edema + 1.0 or need_x > ext[0] or 2 * edema + 1.0 > min(ext[1], ext[2]) + 2.0:
        raise DataError(f"dims {spec.dims} at spacing {spec.spacing} are too small to place all regions")
    lo_x = ext[0] / 2 + vent_r + 1.0 + core
    hi_x = ext[0] - edema
    cx = rng.uniform(min(lo_x, hi_x), max(lo_x, hi_x))
    cy = rng.uniform(edema, ext[1] - edema) if ext[1] > 2 * edema else ext[1] / 2
    cz = rng.uniform(min(edema, ext[2] / 2), max(ext[2] - edema, ext[2] / 2))
    scale = rng.uniform(0.9, 1.1)
    return Geometry((cx, cy, cz), core * scale, shell * scale, edema * scale, rng.uniform(-1.0, 1.0))


def make_mask(spec: PhantomSpec, geo: Geometry) -> LabelMask:
    sx, sy, sz = spec.spacing
    nx, ny, nz = spec.dims
    x, y, z = np.meshgrid((np.arange(nx) + 0.5) * sx, (np.arange(ny) + 0.5) * sy, (np.arange(nz) + 0.5) * sz,
                          indexing="ij")
    cx, cy, cz = geo.center
    r = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
    labels = np.zeros(spec.dims, dtype=np.uint8)
    labels[r <= geo.edema] = Label.EDEMA
    labels[r <= geo.shell] = Label.ETUMOR
    labels[r <= geo.core] = Label.NONETUMOR
    ext = np.array(spec.dims) * np.array(spec.spacing)
    vx, vy, vz = ext[0] / 2 - 3.0, ext[1] / 2 + geo.vent_offset, ext[2] / 2
    vent = ((x - vx) / 2.5) ** 2 + ((y - vy) / 4.0) ** 2 + ((z - vz) / max(2.5, sz)) ** 2 <= 1.0
    labels[vent & (labels == 0)] = Label.VENT
    for lab in (Label.ETUMOR, Label.NONETUMOR, Label.EDEMA, Label.VENT):
        if not (labels == lab).any():
            raise DataError(f"dims {spec.dims} are too small to place {lab.name}")
    return LabelMask(labels, spec.spacing)


def make_volumes(spec: PhantomSpec, mask: LabelMask, risk_rad, rng) -> dict:
    period = stripe_period(risk_rad)
    phase = rng.uniform(0, 2 * math.pi)
    x, y, z = np.meshgrid(*(np.arange(n) for n in spec.dims), indexing="ij")
    ty, tz = STRIPE_TILT
    stripes = np.sin(2 * math.pi * (x / period + ty * y + tz * z) + phase)
    lab = mask.labels
    out = {}
    for mod, (brain, vent, core, et, edema) in TISSUE.items():
        img = np.full(spec.dims, brain)
        img[lab == Label.VENT] = vent
        img[lab == Label.NONETUMOR] = core
        img[lab == Label.EDEMA] = edema
        et_mask = lab == Label.ETUMOR
        img[et_mask] = et + spec.stripe_amplitude * stripes[et_mask]
        img = img + rng.normal(0, spec.image_noise, spec.dims)
        out[mod] = Volume(img.astype(np.float32), spec.spacing, mod)
    return out


# --------------------------------------------------------------------------
# pathology


def make_slide(spec: PhantomSpec, risk_path, rng) -> Patch:
    n = spec.slide_size
    yy, xx = np.mgrid[:n, :n].astype(np.float64)
    # tissue ellipse on glass, mild illumination ramp
    tissue = ((yy - n / 2) / (0.47 * n)) ** 2 + ((xx - n / 2) / (0.47 * n)) ** 2 <= 1.0
    img = np.where(tissue, 190.0, 240.0) - 15.0 * (xx / n)
    lo, hi = spec.nuclei_spacing
    pitch = 1.0 / math.sqrt(1 / lo ** 2 + (1 / hi ** 2 - 1 / lo ** 2) * float(risk_path))
    r_max = 6.0
    jitter = max(0.0, (pitch - 2 * r_max - 3.0) / 2)
    off = rng.uniform(0, pitch, 2)
    centers = []
    for cy in np.arange(off[0], n, pitch):
        for cx in np.arange(off[1], n, pitch):
            py, px = cy + rng.uniform(-jitter, jitter), cx + rng.uniform(-jitter, jitter)
            if 0 <= py < n and 0 <= px < n and tissue[int(py), int(px)]:
                centers.append((py, px, rng.uniform(4.0, r_max), rng.uniform(55, 80)))
    for py, px, rad, level in centers:
        y0, y1 = int(max(0, py - rad - 1)), int(min(n, py + rad + 2))
        x0, x1 = int(max(0, px - rad - 1)), int(min(n, px + rad + 2))
        sub = (yy[y0:y1, x0:x1] - py) ** 2 + (xx[y0:y1, x0:x1] - px) ** 2 <= rad * rad
        img[y0:y1, x0:x1][sub] = level
    img += rng.normal(0, 4.0, img.shape)
    return Patch(np.clip(np.rint(img), 0, 255).astype(np.uint8))


# --------------------------------------------------------------------------
# outcomes


def survival_days(effective_risk) -> np.ndarray:
    """Integer days strictly decreasing in effective risk (ties nudged by one day)."""
    r = np.asarray(effective_risk, dtype=np.float64)
    raw = np.maximum(1.0, np.rint(MIN_DAYS + S0 * (1.0 - r)))
    order = np.argsort(-r, kind="stable")  # highest risk (shortest survival) first
    out = np.empty_like(raw)
    prev = 0.0
    for k in order:
        prev = max(raw[k], prev + 1.0)
        out[k] = prev
    return out.astype(np.int64)


@dataclass(frozen=True)
class SubjectTruth:
    subject_id: str
    risk_rad: float
    risk_path: float
    survival_days: int
    event: int
    age: float
    gender: str
    split: str


def draw_outcomes(spec: PhantomSpec) -> list:
    n = spec.n_subjects
    risks, eff, demo = [], [], []
    for i in range(n):
        rng = _rng(spec.seed, i, 1)
        r_rad, r_path = rng.uniform(), rng.uniform()
        z = rng.standard_normal()
        risks.append((r_rad, r_path))
        eff.append(0.5 * (r_rad + r_path) - spec.noise * RISK_SD * z)
        demo.append((int(rng.uniform() >= spec.censor_rate), round(float(rng.uniform(30, 80)), 1),
                     "M" if rng.uniform() < 0.5 else "F"))
    days = survival_days(eff)
    perm = _rng(spec.seed, 0xC0, 2).permutation(n)
    n_train = int(round(spec.train_fraction * n))
    split = np.empty(n, dtype=object)
    split[perm[:n_train]] = "train"
    split[perm[n_train:]] = "validation"
    return [SubjectTruth(subject_id(i), float(risks[i][0]), float(risks[i][1]), int(days[i]), *demo[i], split[i])
            for i in range(n)]


# --------------------------------------------------------------------------
# on-disk cohort


def write_subject(spec: PhantomSpec, i: int, truth: SubjectTruth, root) -> None:
    rng = _rng(spec.seed, i, 2)
    d = Path(root) / "subjects" / truth.subject_id
    d.mkdir(parents=True, exist_ok=True)
    geo = draw_geometry(spec, rng)
    mask = make_mask(spec, geo)
    for mod, vol in make_volumes(spec, mask, truth.risk_rad, rng).items():
        write_volume(d / f"{mod.key}.hdr", vol)
    write_mask(d / "mask.hdr", mask)
    write_pgm(d / "slide.pgm", make_slide(spec, truth.risk_path, rng))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def generate(spec: PhantomSpec, out_dir, jobs: int = 1) -> list:
    """Write the cohort under ``out_dir`` and return the per-subject truth."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    truths = draw_outcomes(spec)
    # validate the geometry once before writing anything
    make_mask(spec, draw_geometry(spec, _rng(spec.seed, 0, 2)))
    args = [(spec, i, t, str(root)) for i, t in enumerate(truths)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            list(ex.map(_write_subject_args, args))
    else:
        for a in args:
            _write_subject_args(a)
    _write_rows(root / "metadata.csv", ("subject_id", "survival_days", "event", "age", "gender", "split"),
                [(t.subject_id, t.survival_days, t.event, t.age, t.gender, t.split) for t in truths])
    _write_rows(root / "truth.csv", ("subject_id", "risk_rad", "risk_path"),
                [(t.subject_id, repr(t.risk_rad), repr(t.risk_path)) for t in truths])
    cfg = {"phantom": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()},
           "extract": {"n_patches": spec.n_patches, "patch_size": spec.patch_size}}
    (root / "cohort.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return truths


def _write_subject_args(a):
    spec, i, truth, root = a
    write_subject(spec, i, truth, root)
