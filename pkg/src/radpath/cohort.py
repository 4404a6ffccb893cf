"""Cohort directory layout, metadata and feature tables.

Layout::

    <root>/metadata.csv        subject_id, survival_days, event, age, gender, split
    <root>/subjects/<id>/      t1, t1gd, t2, flair (.hdr + .raw), mask (.hdr + .raw), slide.pgm
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from radpath.errors import DataError
from radpath.imaging import Modality, read_mask, read_pgm, read_volume
from radpath.ml import Cohort
from radpath.pathology import PathFeatureConfig, extract_path, path_feature_names
from radpath.radfeatures import RadFeatureConfig, extract_rad_table, rad_table_names

log = logging.getLogger(__name__)

METADATA_COLUMNS = ("subject_id", "survival_days", "event", "age", "gender")


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    survival_days: float
    event: bool
    age: float
    gender: str
    split: str | None = None

    def __post_init__(self):
        if not self.subject_id:
            raise DataError("empty subject id")
        if not np.isfinite(self.survival_days) or self.survival_days < 0:
            raise DataError(f"subject {self.subject_id}: survival_days must be a non-negative number")


def read_metadata(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"metadata file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in METADATA_COLUMNS if c not in cols]
        if missing:
            raise DataError(f"{path.name}: missing column(s) {', '.join(missing)}")
        out = []
        for line, row in enumerate(reader, start=2):
            sid = row["subject_id"].strip()
            try:
                days = float(row["survival_days"])
                event = int(float(row["event"]))
                age = float(row["age"])
            except ValueError as exc:
                raise DataError(f"{path.name} line {line} (subject {sid}): {exc}") from None
            if event not in (0, 1):
                raise DataError(f"{path.name} line {line} (subject {sid}): event must be 0 or 1")
            split = row.get("split")
            out.append(SubjectRecord(sid, days, bool(event), age, row["gender"].strip(),
                                     split.strip() if split else None))
    ids = [r.subject_id for r in out]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path.name}: duplicate subject ids")
    if not out:
        raise DataError(f"{path.name}: no subjects")
    return out


def load_subject(root, record: SubjectRecord):
    d = Path(root) / "subjects" / record.subject_id
    if not d.is_dir():
        raise DataError(f"subject {record.subject_id}: directory {d} not found")
    try:
        volumes = {m: read_volume(d / f"{m.key}.hdr") for m in Modality}
        mask = read_mask(d / "mask.hdr")
    except DataError as exc:
        raise DataError(f"subject {record.subject_id}: {exc}") from None
    return volumes, mask


def load_slide(root, record: SubjectRecord):
    try:
        return read_pgm(Path(root) / "subjects" / record.subject_id / "slide.pgm")
    except DataError as exc:
        raise DataError(f"subject {record.subject_id}: {exc}") from None


# --------------------------------------------------------------------------
# extraction


def _rad_one(args):
    root, rec, config, references = args
    volumes, mask = load_subject(root, rec)
    row = extract_rad_table(rec.subject_id, volumes, mask, rec.age, rec.gender, config, references)
    log.info("rad features: %s", rec.subject_id)
    return [row[n] for n in rad_table_names(config)]


def _path_one(args):
    root, rec, config, seed, index = args
    slide = load_slide(root, rec)
    # per-subject patch stream: independent of processing order and job count
    vec, rows = extract_path(rec.subject_id, slide, seed=[int(seed), index], config=config)
    log.info("path features: %s (%d patches)", rec.subject_id, len(rows))
    return vec.values.tolist(), [(rec.subject_id, r.patch_id, r.n_nuclei, *r.values.tolist()) for r in rows]


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def extract_rad_cohort(root, records, config: RadFeatureConfig = RadFeatureConfig(), references=None, jobs=1):
    rows = _map(_rad_one, [(str(root), r, config, references) for r in records], jobs)
    return rad_table_names(config), np.array(rows, dtype=np.float64)


def extract_path_cohort(root, records, config: PathFeatureConfig = PathFeatureConfig(), seed=0, jobs=1):
    out = _map(_path_one, [(str(root), r, config, seed, i) for i, r in enumerate(records)], jobs)
    X = np.array([o[0] for o in out], dtype=np.float64)
    audit = [row for o in out for row in o[1]]
    return path_feature_names(), X, audit


# --------------------------------------------------------------------------
# feature tables


def write_features(path, subject_ids, names, X) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", *names])
        for sid, row in zip(subject_ids, np.asarray(X, dtype=np.float64)):
            w.writerow([sid, *(repr(float(v)) for v in row)])


def read_features(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"feature table not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "subject_id":
            raise DataError(f"{path.name}: first column must be subject_id")
        ids, rows = [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path.name} line {line}: expected {len(header)} fields, got {len(row)}")
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path.name} line {line} (subject {row[0]}): {exc}") from None
    X = np.array(rows, dtype=np.float64).reshape(len(ids), len(header) - 1)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path.name}: non-finite feature values")
    return ids, header[1:], X


def build_cohort(records, ids, names, X) -> Cohort:
    """Align a feature table with metadata records (metadata order)."""
    index = {sid: i for i, sid in enumerate(ids)}
    missing = [r.subject_id for r in records if r.subject_id not in index]
    if missing:
        raise DataError(f"no features for subject(s) {', '.join(missing[:5])}")
    rows = [index[r.subject_id] for r in records]
    split = None
    if all(r.split for r in records):
        split = tuple(r.split for r in records)
    return Cohort(
        tuple(r.subject_id for r in records), tuple(names), X[rows],
        np.array([r.survival_days for r in records]), np.array([r.event for r in records]), split,
    )
