"""Command-line interface: ``radpath synth | extract | run | report``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from radpath.cohort import (
    build_cohort,
    extract_path_cohort,
    extract_rad_cohort,
    read_features,
    read_metadata,
    write_features,
)
from radpath.errors import DataError, NumericError
from radpath.imaging import Modality, read_volume
from radpath.ml import C_GRID, EPS_GRID, CvPrediction, MlConfig, dictionary_hash, run_loocv, run_split
from radpath.pathology import PathFeatureConfig
from radpath.phantom import PhantomSpec, generate
from radpath.survival import report

log = logging.getLogger("radpath")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SOURCES = ("rad", "path", "radpath")
PREDICTION_COLUMNS = ("subject_id", "fold", "score", "predicted", "truth", "cutoff", "survival_days", "event")

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "out": None,
    "quiet": False,
    # synth
    "subjects": 60,
    "dims": "32,32,16",
    "spacing": "1,1,2",
    "slide_size": 384,
    "noise": 0.1,
    "censor_rate": 0.1,
    # extract
    "cohort": None,
    "patches": None,
    "patch_size": None,
    "reference": None,
    # run
    "features": None,
    "source": "radpath",
    "task": "classify",
    "protocol": "loocv",
    "cutoff_stat": "mean",
    "c_grid": None,
    "eps_grid": None,
    "folds": 5,
    # report
    "predictions": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_options(p):
    d = argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    p.add_argument("--jobs", type=int, default=d, help="worker processes (default 1)")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--config", default=d, help="JSON file with option defaults")
    p.add_argument("--quiet", action="store_true", default=d, help="log warnings only")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="radpath", description="Radiopathomics feature extraction and survival modeling.",
                     argument_default=S)
    _global_options(parser)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic cohort", argument_default=S)
    _global_options(p)
    p.add_argument("--subjects", type=int)
    p.add_argument("--dims", help="volume dims X,Y,Z")
    p.add_argument("--spacing", help="voxel spacing X,Y,Z in mm")
    p.add_argument("--slide-size", type=int)
    p.add_argument("--noise", type=float, help="survival noise in latent-risk sd units")
    p.add_argument("--censor-rate", type=float)

    p = sub.add_parser("extract", help="compute Rad, Path and RadPath feature tables", argument_default=S)
    _global_options(p)
    p.add_argument("--cohort", help="cohort directory (default: --out)")
    p.add_argument("--patches", type=int, help="patches per slide")
    p.add_argument("--patch-size", type=int, help="patch edge in pixels")
    p.add_argument("--reference", help="subject id whose volumes serve as histogram-matching template")

    p = sub.add_parser("run", help="train and evaluate a model", argument_default=S)
    _global_options(p)
    p.add_argument("--cohort", help="cohort directory holding metadata.csv")
    p.add_argument("--features", help="directory with features_<source>.csv (default: cohort/features)")
    p.add_argument("--source", choices=SOURCES)
    p.add_argument("--task", choices=("classify", "regress"))
    p.add_argument("--protocol", choices=("loocv", "split"))
    p.add_argument("--cutoff-stat", choices=("mean", "median"))
    p.add_argument("--c-grid", help="comma-separated C values")
    p.add_argument("--eps-grid", help="comma-separated epsilon values")
    p.add_argument("--folds", type=int, help="grid-search folds (default 5)")

    p = sub.add_parser("report", help="recompute statistics from a predictions file", argument_default=S)
    _global_options(p)
    p.add_argument("--predictions", help="predictions.csv written by 'run'")
    p.add_argument("--task", choices=("classify", "regress"))
    return parser


def resolve_options(ns: argparse.Namespace) -> dict:
    """Built-in defaults, overridden by the JSON config, overridden by explicit flags."""
    explicit = vars(ns)
    opts = dict(DEFAULTS)
    if "config" in explicit:
        path = Path(explicit["config"])
        try:
            cfg = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        if not isinstance(cfg, dict):
            raise DataError(f"config {path} must hold a JSON object")
        unknown = sorted(set(k.replace("-", "_") for k in cfg) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        opts.update({k.replace("-", "_"): v for k, v in cfg.items()})
    opts.update({k: v for k, v in explicit.items() if k != "config"})
    if int(opts["jobs"]) < 1:
        raise UsageError("--jobs must be >= 1")
    return opts


def _floats(text, name, n=None):
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not vals or (n is not None and len(vals) != n):
        raise UsageError(f"--{name}: expected {n or 'one or more'} values")
    return vals


def _require(opts, key, flag):
    if not opts.get(key):
        raise UsageError(f"{flag} is required")
    return opts[key]


# --------------------------------------------------------------------------
# commands


def cmd_synth(opts) -> None:
    out = Path(_require(opts, "out", "--out"))
    spec = PhantomSpec(
        n_subjects=int(opts["subjects"]),
        dims=tuple(int(v) for v in _floats(opts["dims"], "dims", 3)),
        spacing=tuple(_floats(opts["spacing"], "spacing", 3)),
        slide_size=int(opts["slide_size"]),
        seed=int(opts["seed"]),
        noise=float(opts["noise"]),
        censor_rate=float(opts["censor_rate"]),
    )
    generate(spec, out, jobs=int(opts["jobs"]))
    log.info("wrote %d subjects to %s", spec.n_subjects, out)


def _cohort_defaults(root) -> dict:
    path = Path(root) / "cohort.json"
    if path.is_file():
        return json.loads(path.read_text()).get("extract", {})
    return {}


def _write_dictionary(path, names):
    Path(path).write_text("\n".join(names) + "\n")


def cmd_extract(opts) -> None:
    # a lone --out names the cohort; features then go to <cohort>/features
    root = Path(opts["cohort"] or _require(opts, "out", "--cohort or --out"))
    out = Path(opts["out"]) if opts["cohort"] and opts["out"] else root / "features"
    out.mkdir(parents=True, exist_ok=True)
    records = read_metadata(root / "metadata.csv")
    hints = _cohort_defaults(root)
    base = PathFeatureConfig()
    path_cfg = PathFeatureConfig(
        n_patches=int(opts["patches"] or hints.get("n_patches", base.n_patches)),
        patch_size=int(opts["patch_size"] or hints.get("patch_size", base.patch_size)),
    )
    references = None
    if opts["reference"]:
        ref_dir = root / "subjects" / str(opts["reference"])
        references = {m: read_volume(ref_dir / f"{m.key}.hdr") for m in Modality}
    jobs = int(opts["jobs"])
    ids = [r.subject_id for r in records]
    rad_names, R = extract_rad_cohort(root, records, references=references, jobs=jobs)
    path_names, P, audit = extract_path_cohort(root, records, path_cfg, seed=int(opts["seed"]), jobs=jobs)
    write_features(out / "features_rad.csv", ids, rad_names, R)
    write_features(out / "features_path.csv", ids, path_names, P)
    write_features(out / "features_radpath.csv", ids, list(rad_names) + list(path_names), np.hstack([R, P]))
    _write_dictionary(out / "dictionary_rad.txt", rad_names)
    _write_dictionary(out / "dictionary_path.txt", path_names)
    _write_dictionary(out / "dictionary_radpath.txt", list(rad_names) + list(path_names))
    with open(out / "patches.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "patch_id", "n_nuclei", *path_names])
        for row in audit:
            w.writerow([row[0], row[1], row[2], *(repr(float(v)) for v in row[3:])])
    log.info("wrote feature tables for %d subjects to %s", len(ids), out)


def write_predictions(path, predictions) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        for p in predictions:
            w.writerow([p.subject_id, p.fold, repr(p.score), repr(p.predicted), repr(p.truth), repr(p.cutoff),
                        repr(p.survival_days), int(p.event)])


def read_predictions(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in PREDICTION_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path.name}: missing column(s) {', '.join(missing)}")
        try:
            return [CvPrediction(r["subject_id"], int(r["fold"]), float(r["score"]), float(r["predicted"]),
                                 float(r["truth"]), float(r["cutoff"]), float(r["survival_days"]),
                                 bool(int(r["event"]))) for r in reader]
        except ValueError as exc:
            raise DataError(f"{path.name}: {exc}") from None


def cmd_run(opts) -> None:
    root = Path(_require(opts, "cohort", "--cohort"))
    feat_dir = Path(opts["features"]) if opts["features"] else root / "features"
    out = Path(opts["out"]) if opts["out"] else root / "results" / f"{opts['source']}_{opts['task']}_{opts['protocol']}"
    records = read_metadata(root / "metadata.csv")
    ids, names, X = read_features(feat_dir / f"features_{opts['source']}.csv")
    cohort = build_cohort(records, ids, names, X)
    config = MlConfig(
        task=opts["task"],
        C_grid=tuple(_floats(opts["c_grid"], "c-grid")) if opts["c_grid"] else C_GRID,
        eps_grid=tuple(_floats(opts["eps_grid"], "eps-grid")) if opts["eps_grid"] else EPS_GRID,
        folds=int(opts["folds"]),
        seed=int(opts["seed"]),
        cutoff_stat=opts["cutoff_stat"],
    )
    out.mkdir(parents=True, exist_ok=True)
    if opts["protocol"] == "loocv":
        preds, _ = run_loocv(cohort, config, jobs=int(opts["jobs"]))
    else:
        preds, pipe = run_split(cohort, config)
        model = pipe.to_dict()
        model["feature_dictionary_sha256"] = dictionary_hash(names)
        (out / "model.json").write_text(json.dumps(model, indent=2, sort_keys=True) + "\n")
    write_predictions(out / "predictions.csv", preds)
    report(preds, opts["task"]).write(out)
    log.info("wrote %d predictions and report to %s", len(preds), out)


def cmd_report(opts) -> None:
    pred_path = Path(_require(opts, "predictions", "--predictions"))
    out = Path(opts["out"]) if opts["out"] else pred_path.parent
    report(read_predictions(pred_path), opts["task"]).write(out)


COMMANDS = {"synth": cmd_synth, "extract": cmd_extract, "run": cmd_run, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not getattr(ns, "command", None):
            raise UsageError("a command is required: synth, extract, run or report")
        opts = resolve_options(ns)
        logging.basicConfig(level=logging.WARNING if opts["quiet"] else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
        COMMANDS[ns.command](opts)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
