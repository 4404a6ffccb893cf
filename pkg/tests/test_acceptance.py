"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` to see the verdict lines.
"""

import filecmp
import math
import time

import numpy as np
import pytest

import oracles
from radpath import cli
from radpath.cohort import build_cohort, extract_path_cohort, extract_rad_cohort, read_metadata
from radpath.errors import DataError, NumericError
from radpath.imaging import OUTSIDE, Patch, QuantizedImage
from radpath.ml import Cohort, MlConfig, fit_pipeline, run_loocv, run_split
from radpath.pathology import PathFeatureConfig, segment_nuclei
from radpath.phantom import PhantomSpec, generate
from radpath.survival import cox_hr, km_estimate, pearson, report, roc_auc
from radpath.texture import (
    DIRECTIONS_2D,
    DIRECTIONS_3D,
    HARALICK_NAMES,
    NGTDM_NAMES,
    RUN_NAMES,
    ZONE_NAMES,
    glcm,
    glcm_3d_features,
    glcm_direction_features,
    glrlm,
    glrlm_features,
    glszm,
    glszm_features,
    haralick_features,
    lbp_codes,
    lbp_histogram,
    ngtdm,
    ngtdm_features,
)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} | {detail}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def close(a, b, tol=1e-10):
    return abs(a - b) <= tol * max(1.0, abs(b))


# ------------------------------------------------------------------ 1. texture oracles


def arr_offset(direction):
    return tuple(reversed(direction)) if len(direction) == 2 else tuple(direction)


def random_image(rng):
    ndim = int(rng.integers(2, 4))
    shape = tuple(int(s) for s in rng.integers(1, 9, size=ndim))
    levels = int(rng.integers(2, 5))
    raw = rng.integers(0, levels, size=shape)
    codes = raw.copy()
    codes[rng.random(shape) > 0.8] = OUTSIDE
    if (codes == OUTSIDE).all():
        codes.flat[0] = raw.flat[0]
    return raw.astype(np.float64), QuantizedImage(codes, levels)


def hist_matrix(units, levels, width):
    m = np.zeros((levels, width), dtype=np.int64)
    for c, length in units:
        m[c, length - 1] += 1
    return m


def check_texture(raw, q):
    """List of mismatch descriptions between the module and brute-force oracles."""
    bad = []
    codes, levels = q.codes, q.levels
    n_vox = int((codes != OUTSIDE).sum())
    dirs = DIRECTIONS_2D if q.ndim == 2 else DIRECTIONS_3D
    for d, m in zip(dirs, glcm(q)):
        want = np.array(oracles.glcm_counts(codes, levels, arr_offset(d)), dtype=np.float64)
        if not np.array_equal(m.matrix, want):
            bad.append(f"glcm counts {d}")
        elif want.sum() > 0:
            got = haralick_features(m.matrix / m.matrix.sum())
            ref = oracles.haralick((want / want.sum()).tolist())
            bad += [f"glcm {k} {d}" for k in HARALICK_NAMES if not close(got[k], ref[k])]
    for d in dirs:
        rlm = glrlm(q, d)
        units = oracles.run_lengths(codes, arr_offset(d))
        if not np.array_equal(rlm.matrix, hist_matrix(units, levels, rlm.matrix.shape[1])):
            bad.append(f"glrlm counts {d}")
            continue
        got = glrlm_features(rlm)
        ref = oracles.emphasis(units, n_vox)
        bad += [f"glrlm {k} {d}" for k, v in zip(RUN_NAMES, ref) if not close(got[k], v)]
    z = glszm(q)
    units = oracles.zones(codes)
    if not np.array_equal(z.matrix, hist_matrix(units, levels, z.matrix.shape[1])):
        bad.append("glszm counts")
    else:
        got = glszm_features(q)
        ref = oracles.emphasis(units, n_vox)
        bad += [f"glszm {k}" for k, v in zip(ZONE_NAMES, ref) if not close(got[k], v)]
    n, s = oracles.ngtdm_table(codes, levels)
    if sum(n) == 0:
        try:
            ngtdm(q)
            bad.append("ngtdm accepted an ROI without neighbors")
        except DataError:
            pass
    else:
        t = ngtdm(q)
        if not np.array_equal(t.counts, np.array(n, dtype=np.float64)):
            bad.append("ngtdm counts")
        if not np.allclose(t.sums, s, rtol=0, atol=1e-10):
            bad.append("ngtdm sums")
        got = ngtdm_features(q)
        ref = oracles.ngtdm_feats(n, s)
        bad += [f"ngtdm {k}" for k, v in zip(NGTDM_NAMES, ref) if not close(got[k], v)]
    img = raw if raw.ndim == 2 else raw[:, :, 0]
    if min(img.shape) >= 3:
        got = lbp_codes(img)
        ref = np.array([[oracles.lbp_code(img, r, c) for c in range(1, img.shape[1] - 1)]
                        for r in range(1, img.shape[0] - 1)])
        if not np.array_equal(got, ref):
            bad.append("lbp codes")
        counts = np.bincount(ref.ravel(), minlength=10)
        if not np.allclose(lbp_histogram(img) * ref.size, counts, rtol=0, atol=1e-9):
            bad.append("lbp histogram")
    return bad


def test_criterion_1_texture_oracles(verdict):
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    failures = []
    for i in range(200):
        raw, q = random_image(rng)
        failures += [f"image {i}: {b}" for b in check_texture(raw, q)]
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    verdict(1, ok, f"200 random images up to 8x8x8, G<=4, {len(failures)} mismatches "
                   f"{failures[:3]}, {elapsed:.1f}s (limit 60s)")


# ------------------------------------------------------------------ 2. 13-direction contract


def test_criterion_2_thirteen_directions(verdict):
    rng = np.random.default_rng(7)
    worst, lengths = 0.0, set()
    for _ in range(20):
        codes = rng.integers(0, 4, size=(6, 6, 6))
        zz, yy, xx = np.mgrid[:6, :6, :6]
        codes[(zz - 2.5) ** 2 + (yy - 2.5) ** 2 + (xx - 2.5) ** 2 > 9] = OUTSIDE
        q = QuantizedImage(codes, 4)
        per = glcm_direction_features(q)
        lengths.add(len(per))
        avg = glcm_3d_features(q)
        for k in HARALICK_NAMES:
            worst = max(worst, abs(avg[k] - math.fsum(p[k] for p in per) / 13))
    ok = lengths == {13} and worst <= 1e-12
    verdict(2, ok, f"per-direction list lengths {sorted(lengths)}, max |avg - mean| = {worst:.2e} (tol 1e-12)")


# ------------------------------------------------------------------ 3. statistics oracles


def test_criterion_3_statistics_oracles(verdict):
    rng = np.random.default_rng(3)
    problems = []
    for _ in range(200):
        n = int(rng.integers(2, 30))
        scores = rng.integers(0, 6, n).tolist()
        pos = (rng.random(n) < 0.5).tolist()
        if all(pos) or not any(pos):
            continue
        if roc_auc(scores, pos).auc != oracles.auc_pairs(scores, pos):
            problems.append("auc")
    cox_cases, worst_beta = 0, 0.0
    while cox_cases < 30:
        t = rng.integers(1, 15, 10).astype(float)
        e = rng.random(10) < 0.8
        e[:2] = True
        g = np.arange(10) % 2
        try:
            res = cox_hr(t, e, g)
        except NumericError:
            continue
        worst_beta = max(worst_beta, abs(res.beta - oracles.cox_grid_beta(t.tolist(), e.tolist(), g.tolist())))
        cox_cases += 1
    if worst_beta > 1e-4:
        problems.append(f"cox beta off by {worst_beta:.2e}")
    km = km_estimate([1, 2], [1, 1])
    if list(km([0.5, 1, 1.5, 2, 3])) != [1, 0.5, 0.5, 0, 0]:
        problems.append("km two events")
    km = km_estimate([1, 2], [1, 0])
    if list(km([0.5, 1, 2, 3])) != [1, 0.5, 0.5, 0.5]:
        problems.append("km event then censor")
    km = km_estimate([1, 2], [0, 1])
    if list(km([0.5, 1, 2, 3])) != [1, 1, 0, 0]:
        problems.append("km censor then event")
    worst_r = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 40))
        x, y = rng.normal(size=n) * 100, rng.normal(size=n) + rng.normal(size=n) * 3
        num = n * (x * y).sum() - x.sum() * y.sum()
        den = math.sqrt(n * (x * x).sum() - x.sum() ** 2) * math.sqrt(n * (y * y).sum() - y.sum() ** 2)
        worst_r = max(worst_r, abs(pearson(x, y) - num / den))
    if worst_r > 1e-10:
        problems.append(f"pearson off by {worst_r:.2e}")
    verdict(3, not problems, f"AUC exact on 200 sets, Cox max |dbeta| {worst_beta:.1e} over 30 ten-subject cases, "
                             f"KM hand tables, Pearson max err {worst_r:.1e}; problems: {problems}")


# ------------------------------------------------------------------ 4. leakage


def leakage_cohort(n, seed, split=None):
    rng = np.random.default_rng(seed)
    days = rng.uniform(100, 1000, n)
    X = np.hstack([rng.normal(size=(n, 6)), rng.dirichlet(np.ones(8), size=n)])
    X[:, 0] += (days - 550) / 150
    names = [f"f{i}" for i in range(6)] + [f"t1_etumor_pcahist_b{k:02d}" for k in range(8)]
    return Cohort(tuple(f"s{i:02d}" for i in range(n)), tuple(names), X, days, rng.random(n) < 0.8, split)


def perturbed(c, rows, seed):
    X = c.X.copy()
    X[rows] = np.random.default_rng(seed).normal(size=(len(rows), X.shape[1])) * 100
    return Cohort(c.subject_ids, c.names, X, c.survival, c.events, c.split)


def test_criterion_4_leakage(verdict):
    problems = []
    c = leakage_cohort(12, seed=2)
    for task in ("classify", "regress"):
        config = MlConfig(task=task)
        _, fits = run_loocv(c, config)
        for i in (0, 4, 11):
            _, pert_fits = run_loocv(perturbed(c, [i], seed=i), config)
            if pert_fits[i].to_json() != fits[i].to_json():
                problems.append(f"loocv {task} fold {i}")
    n, n_train = 20, 12
    c = leakage_cohort(n, seed=3, split=tuple(["train"] * n_train + ["validation"] * (n - n_train)))
    for task in ("classify", "regress"):
        config = MlConfig(task=task)
        _, pipe = run_split(c, config)
        _, pert_pipe = run_split(perturbed(c, list(range(n_train, n)), seed=9), config)
        if pert_pipe.to_json() != pipe.to_json():
            problems.append(f"split {task}")
    # the fitted state must differ when a training row moves, or the check above is vacuous
    train = list(range(1, 12))
    base = fit_pipeline(c.X[train], c.survival[train], c.names, MlConfig(task="regress"))
    moved = fit_pipeline(perturbed(c, [1], seed=1).X[train], c.survival[train], c.names, MlConfig(task="regress"))
    if moved.to_json() == base.to_json():
        problems.append("fold state insensitive to training rows")
    verdict(4, not problems, "held-out perturbation leaves standardizer, cutoff, PCA, grid choice and weights "
                             f"bit-identical in LOOCV and split; problems: {problems}")


# ------------------------------------------------------------------ 5 and 6. end-to-end phantoms

SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def phantom_runs(tmp_path_factory):
    start = time.perf_counter()
    runs = {}
    for seed in SEEDS:
        root = tmp_path_factory.mktemp(f"phantom{seed}")
        spec = PhantomSpec(n_subjects=60, seed=seed, noise=0.1)
        generate(spec, root)
        records = read_metadata(root / "metadata.csv")
        ids = [r.subject_id for r in records]
        rad_names, R = extract_rad_cohort(root, records)
        path_cfg = PathFeatureConfig(n_patches=spec.n_patches, patch_size=spec.patch_size)
        path_names, P, _ = extract_path_cohort(root, records, path_cfg, seed=seed)
        sources = {
            "rad": (rad_names, R),
            "path": (path_names, P),
            "radpath": (list(rad_names) + list(path_names), np.hstack([R, P])),
        }
        for source, (names, X) in sources.items():
            cohort = build_cohort(records, ids, names, X)
            for task in ("regress", "classify"):
                preds, _ = run_loocv(cohort, MlConfig(task=task, seed=seed))
                runs[seed, source, task] = report(preds, task).metrics
    return runs, time.perf_counter() - start


def test_criterion_5_phantom_regression(verdict, phantom_runs):
    runs, elapsed = phantom_runs
    rows, ok = [], elapsed < 600
    for seed in SEEDS:
        rho = {s: runs[seed, s, "regress"]["rho"] for s in ("rad", "path", "radpath")}
        good = rho["radpath"] >= 0.85 and rho["radpath"] >= max(rho["rad"], rho["path"]) - 0.02
        ok &= good
        rows.append(f"seed {seed}: rho rad {rho['rad']:.3f} path {rho['path']:.3f} radpath {rho['radpath']:.3f}")
    verdict(5, ok, "; ".join(rows) + f"; total {elapsed:.0f}s (limit 600s)")


def test_criterion_6_phantom_classification(verdict, phantom_runs):
    runs, _ = phantom_runs
    rows, ok = [], True
    for seed in SEEDS:
        acc = {s: runs[seed, s, "classify"]["accuracy"] for s in ("rad", "path", "radpath")}
        m = runs[seed, "radpath", "classify"]
        hr, p = m["hr"], m["p"]
        good = (acc["radpath"] >= acc["rad"] and acc["radpath"] >= acc["path"]
                and hr is not None and hr > 1 and p is not None and p < 0.01)
        ok &= good
        rows.append(f"seed {seed}: acc rad {acc['rad']:.1f} path {acc['path']:.1f} radpath {acc['radpath']:.1f}, "
                    f"HR {hr:.2f}, log-rank p {p:.1e}")
    verdict(6, ok, "; ".join(rows))


# ------------------------------------------------------------------ 7. CLI determinism


def pipeline(root, jobs):
    common = ["--seed", "11", "--jobs", str(jobs), "--quiet"]
    steps = [
        ["synth", "--subjects", "8", "--slide-size", "192", "--out", str(root)],
        ["extract", "--cohort", str(root)],
        ["run", "--cohort", str(root), "--source", "radpath", "--task", "classify", "--out", str(root / "loocv")],
        ["run", "--cohort", str(root), "--source", "rad", "--task", "regress", "--protocol", "split",
         "--out", str(root / "split")],
    ]
    return [cli.main(step + common) for step in steps]


def tree_diff(a, b):
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if files_a != files_b:
        return ["file lists differ"]
    _, mismatch, errors = filecmp.cmpfiles(a, b, [str(f) for f in files_a], shallow=False)
    return mismatch + errors


def test_criterion_7_cli_determinism(verdict, tmp_path):
    codes = {name: pipeline(tmp_path / name, jobs) for name, jobs in (("a", 1), ("b", 1), ("c", 4))}
    repeat = tree_diff(tmp_path / "a", tmp_path / "b")
    parallel = tree_diff(tmp_path / "a", tmp_path / "c")
    n_files = sum(1 for p in (tmp_path / "a").rglob("*") if p.is_file())
    ok = all(c == [0, 0, 0, 0] for c in codes.values()) and not repeat and not parallel
    verdict(7, ok, f"exit codes {codes}; {n_files} files; differing across reruns {repeat[:3]}, "
                   f"across --jobs 1/4 {parallel[:3]}")


# ------------------------------------------------------------------ 8. segmentation geometry


def disk_scene(shape, centers, r):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    img = np.full(shape, 200, dtype=np.uint8)
    for cy, cx in centers:
        img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = 60
    return img


def test_criterion_8_segmentation_geometry(verdict):
    rng = np.random.default_rng(8)
    wrong, scenes, worst_area = [], 0, 0.0
    for r in (8, 10, 12, 15):
        size = int(6 * r + 2)
        for overlap in np.linspace(0.0, 0.3, 7):
            dist = (2.0 - overlap) * r
            for angle in np.linspace(0, math.pi, 9)[:-1]:
                cy, cx = 3 * r + rng.uniform(0, 1), 3 * r + rng.uniform(0, 1)
                second = (cy + dist * math.sin(angle), cx + dist * math.cos(angle))
                n = segment_nuclei(Patch(disk_scene((size, size), [(cy, cx), second], r))).max()
                scenes += 1
                if n != 2:
                    wrong.append((r, round(float(overlap), 2), round(math.degrees(angle)), int(n)))
            # three in a row
            dist3 = [(3 * r, r + 1 + k * dist) for k in range(3)]
            n = segment_nuclei(Patch(disk_scene((size, int(2 * r + 3 + 2 * dist)), dist3, r))).max()
            scenes += 1
            if n != 3:
                wrong.append((r, round(float(overlap), 2), "row of 3", int(n)))
        for _ in range(10):
            c = (3 * r + rng.uniform(0, 1), 3 * r + rng.uniform(0, 1))
            lab = segment_nuclei(Patch(disk_scene((6 * r, 6 * r), [c], r)))
            worst_area = max(worst_area, abs((lab == 1).sum() - math.pi * r * r) / (math.pi * r * r))
    ok = not wrong and worst_area < 0.05
    verdict(8, ok, f"{scenes} touching-disk scenes (r 8-15 px, overlap 0-30% of r), wrong counts {wrong[:5]}; "
                   f"max isolated disk area error {100 * worst_area:.2f}% (limit 5%)")
