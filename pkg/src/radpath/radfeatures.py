"""Subject-level radiographic features.

Extraction produces a *table row* in which each (sequence, region) carries a
32-bin intensity histogram (``..._pcahist_bNN`` columns). The histogram block
is replaced by PCA scores only at model-fitting time, using a PCA fitted on
the training subjects of the current fold (:class:`HistogramPca`).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from radpath.errors import DataError
from radpath.imaging import TUMOR_LABELS, Label, LabelMask, Modality, Volume, histogram_match, quantize
from radpath.texture import texture_feature_names, texture_features

log = logging.getLogger(__name__)

FIRST_ORDER_NAMES = ("mean", "std", "skew", "kurt")
SOURCES = ("Rad", "Path", "RadPath")


@dataclass(frozen=True)
class RadFeatureConfig:
    regions: tuple = (Label.ETUMOR, Label.NONETUMOR, Label.EDEMA)
    sequences: tuple = (Modality.T1, Modality.T1GD, Modality.T2, Modality.FLAIR)
    bins: int = 5
    pca_components: int = 3
    pca_bins: int = 32
    levels: int = 16
    missing_distance: float = -1.0

    def __post_init__(self):
        if not self.regions or not self.sequences:
            raise ValueError("regions and sequences must be non-empty")
        if self.bins < 2 or self.pca_bins < 2:
            raise ValueError("histogram bin counts must be >= 2")
        if self.pca_components < 1:
            raise ValueError("need at least one PCA component")
        object.__setattr__(self, "regions", tuple(Label(r) for r in self.regions))
        object.__setattr__(self, "sequences", tuple(Modality(s) for s in self.sequences))


@dataclass(frozen=True)
class FeatureVector:
    subject_id: str
    names: tuple
    values: np.ndarray
    source: str = "Rad"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        names = tuple(self.names)
        if len(names) != len(values):
            raise DataError(f"{self.subject_id}: {len(names)} names for {len(values)} values")
        if len(set(names)) != len(names):
            raise DataError(f"{self.subject_id}: duplicate feature names")
        if not np.all(np.isfinite(values)):
            bad = [n for n, v in zip(names, values) if not np.isfinite(v)]
            raise DataError(f"{self.subject_id}: non-finite features {bad[:5]}")
        if self.source not in SOURCES:
            raise DataError(f"unknown feature source {self.source!r}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))


# --------------------------------------------------------------------------
# mask-derived features


def _require_tumor(mask):
    tumor = mask.tumor()
    if not tumor.any():
        raise DataError("mask has no tumor voxels")
    return tumor


def volumetrics(mask: LabelMask) -> dict:
    """Absolute volume (mm^3) and fraction of total tumor volume per region."""
    _require_tumor(mask)
    voxel = float(np.prod(mask.spacing))
    counts = {lab: int(mask.region(lab).sum()) for lab in TUMOR_LABELS}
    total = sum(counts.values())
    out = {}
    for lab in TUMOR_LABELS:
        out[f"{lab.key}_vol_mm3"] = counts[lab] * voxel
        out[f"{lab.key}_vol_frac"] = counts[lab] / total
    return out


def tumor_location(mask: LabelMask):
    """Centroid of the union of tumor regions in millimeters."""
    idx = np.argwhere(_require_tumor(mask))
    return tuple(float(c) for c in idx.mean(axis=0) * np.asarray(mask.spacing))


def distance_to_ventricles(mask: LabelMask, region, missing=None) -> float:
    """Minimum center-to-center distance (mm) from ``region`` to any Vent voxel.

    If either label is absent, returns ``missing`` with a warning, or raises
    when ``missing`` is None.
    """
    region = Label(region)
    vent = mask.region(Label.VENT)
    roi = mask.region(region)
    if not vent.any() or not roi.any():
        what = "Vent" if not vent.any() else region.name
        if missing is None:
            raise DataError(f"mask has no {what} voxels")
        log.warning("mask has no %s voxels; distance set to %s", what, missing)
        return float(missing)
    dist = ndimage.distance_transform_edt(~vent, sampling=mask.spacing)
    return float(dist[roi].min())


# --------------------------------------------------------------------------
# intensity features


def first_order(values) -> dict:
    """Population mean, std, skewness and excess kurtosis; constant input gives 0 moments."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DataError("first-order statistics of an empty region")
    mean = v.mean()
    c = v - mean
    m2 = (c * c).mean()
    if m2 <= 0:
        return {"mean": float(mean), "std": 0.0, "skew": 0.0, "kurt": 0.0}
    return {
        "mean": float(mean),
        "std": float(np.sqrt(m2)),
        "skew": float((c ** 3).mean() / m2 ** 1.5),
        "kurt": float((c ** 4).mean() / (m2 * m2) - 3.0),
    }


def histogram_bins(values, bins: int = 5) -> np.ndarray:
    """Fraction of voxels per equal-width bin over the region's own range."""
    codes = quantize(values, bins)
    return np.bincount(codes, minlength=bins) / codes.size


# --------------------------------------------------------------------------
# PCA on intensity histograms


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows = principal axes, descending eigenvalue
    eigenvalues: np.ndarray
    n_components: int

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "components": self.components[: self.n_components].tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "n_components": self.n_components,
        }


def pca_fit(histograms, n_components: int = 3) -> PcaModel:
    X = np.asarray(histograms, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < n_components + 1:
        raise DataError(f"PCA needs at least {n_components + 1} subjects, got {X.shape[0] if X.ndim == 2 else 0}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1]
    evals, comps = np.clip(evals[order], 0.0, None), evecs[:, order].T.copy()
    # sign convention: largest-magnitude loading is positive
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(len(comps)), pivot])
    comps *= np.where(signs == 0, 1.0, signs)[:, None]
    return PcaModel(mean, comps, evals, n_components)


def pca_project(model: PcaModel, histogram) -> np.ndarray:
    h = np.asarray(histogram, dtype=np.float64)
    return (h - model.mean) @ model.components[: model.n_components].T


_PCAHIST = re.compile(r"^(?P<prefix>.+)_pcahist_b\d+$")


@dataclass
class HistogramPca:
    """Replaces every ``<prefix>_pcahist_bNN`` column group by PCA scores."""

    n_components: int = 3
    models: dict = field(default_factory=dict)
    in_names: list = field(default_factory=list)
    out_names: list = field(default_factory=list)
    _plan: list = field(default_factory=list)

    def fit(self, X, names):
        X = np.asarray(X, dtype=np.float64)
        self.in_names = list(names)
        self.models, self._plan, self.out_names = {}, [], []
        groups = {}
        for j, name in enumerate(self.in_names):
            m = _PCAHIST.match(name)
            if m is None:
                self._plan.append(("col", j))
                self.out_names.append(name)
            else:
                prefix = m.group("prefix")
                if prefix not in groups:
                    groups[prefix] = []
                    self._plan.append(("pca", prefix))
                    self.out_names.extend(f"{prefix}_pca_c{k}" for k in range(self.n_components))
                groups[prefix].append(j)
        self._groups = groups
        for prefix, cols in groups.items():
            self.models[prefix] = pca_fit(X[:, cols], self.n_components)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        blocks = []
        for kind, key in self._plan:
            if kind == "col":
                blocks.append(X[:, key:key + 1])
            else:
                blocks.append(pca_project(self.models[key], X[:, self._groups[key]]))
        return np.hstack(blocks) if blocks else np.zeros((len(X), 0))


# --------------------------------------------------------------------------
# assembly

DEMOGRAPHIC_NAMES = ("clin_subject_age_years", "clin_subject_gender_male")


def _mask_names():
    names = []
    for lab in TUMOR_LABELS:
        names += [f"mask_{lab.key}_vol_mm3", f"mask_{lab.key}_vol_frac"]
    names += ["mask_tumor_loc_x", "mask_tumor_loc_y", "mask_tumor_loc_z"]
    names += ["mask_etumor_dist_vent", "mask_edema_dist_vent"]
    return names


def _block_names(config, pca_hist: bool):
    names = []
    tex = texture_feature_names()
    for seq in config.sequences:
        for reg in config.regions:
            p = f"{seq.key}_{reg.key}"
            names += [f"{p}_fo_{s}" for s in FIRST_ORDER_NAMES]
            names += [f"{p}_hist_b{k}" for k in range(config.bins)]
            if pca_hist:
                names += [f"{p}_pcahist_b{k:02d}" for k in range(config.pca_bins)]
            else:
                names += [f"{p}_pca_c{k}" for k in range(config.pca_components)]
            names += [f"{p}_{t}" for t in tex]
    return names


def rad_table_names(config: RadFeatureConfig = RadFeatureConfig()):
    """Column names of the extraction table (histogram blocks not yet reduced)."""
    return _mask_names() + _block_names(config, True) + list(DEMOGRAPHIC_NAMES)


def rad_feature_names(config: RadFeatureConfig = RadFeatureConfig()):
    """Names of the model-ready Rad vector (PCA scores in place of histograms)."""
    return _mask_names() + _block_names(config, False) + list(DEMOGRAPHIC_NAMES)


def encode_gender(gender) -> float:
    g = str(gender).strip().upper()
    if g in ("F", "0"):
        return 0.0
    if g in ("M", "1"):
        return 1.0
    raise DataError(f"gender must be F/M (or 0/1), got {gender!r}")


def extract_rad_table(subject_id, volumes, mask: LabelMask, age, gender,
                      config: RadFeatureConfig = RadFeatureConfig(), references=None) -> dict:
    """Extraction-table row for one subject, keyed by :func:`rad_table_names`.

    ``volumes`` maps :class:`Modality` to :class:`Volume`. ``references``
    optionally maps modality to a template volume for histogram matching.
    """
    try:
        row = {}
        for k, v in volumetrics(mask).items():
            row[f"mask_{k}"] = v
        for axis, c in zip("xyz", tumor_location(mask)):
            row[f"mask_tumor_loc_{axis}"] = c
        for lab in (Label.ETUMOR, Label.EDEMA):
            row[f"mask_{lab.key}_dist_vent"] = distance_to_ventricles(mask, lab, config.missing_distance)
        for seq in config.sequences:
            if seq not in volumes:
                raise DataError(f"missing {seq.value} volume")
            vol = volumes[seq]
            if vol.dims != mask.dims:
                raise DataError(f"{seq.value} dims {vol.dims} differ from mask dims {mask.dims}")
            if references and seq in references:
                vol = histogram_match(vol, references[seq])
            data = vol.data.astype(np.float64)
            for reg in config.regions:
                roi = mask.region(reg)
                if not roi.any():
                    raise DataError(f"mask has no {reg.name} voxels")
                p = f"{seq.key}_{reg.key}"
                vals = data[roi]
                for s, v in first_order(vals).items():
                    row[f"{p}_fo_{s}"] = v
                for k, v in enumerate(histogram_bins(vals, config.bins)):
                    row[f"{p}_hist_b{k}"] = float(v)
                for k, v in enumerate(histogram_bins(vals, config.pca_bins)):
                    row[f"{p}_pcahist_b{k:02d}"] = float(v)
                for name, v in texture_features(data, roi, config.levels).items():
                    row[f"{p}_{name}"] = v
        row["clin_subject_age_years"] = float(age)
        row["clin_subject_gender_male"] = encode_gender(gender)
    except DataError as exc:
        raise DataError(f"subject {subject_id}: {exc}") from None
    return {name: row[name] for name in rad_table_names(config)}


def extract_rad(subject_id, volumes, mask, age, gender, config: RadFeatureConfig = RadFeatureConfig(),
                pca_models=None, references=None) -> FeatureVector:
    """Model-ready Rad vector; ``pca_models`` maps ``<seq>_<region>`` to a :class:`PcaModel`."""
    table = extract_rad_table(subject_id, volumes, mask, age, gender, config, references)
    values = []
    for name in rad_feature_names(config):
        m = re.match(r"^(.+)_pca_c(\d+)$", name)
        if m is None:
            values.append(table[name])
            continue
        prefix, k = m.group(1), int(m.group(2))
        if pca_models is None or prefix not in pca_models:
            raise DataError(f"subject {subject_id}: no PCA model for {prefix}")
        hist = [table[f"{prefix}_pcahist_b{b:02d}"] for b in range(config.pca_bins)]
        values.append(float(pca_project(pca_models[prefix], hist)[k]))
    return FeatureVector(subject_id, rad_feature_names(config), values, "Rad")
