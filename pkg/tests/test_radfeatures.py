import itertools
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radpath.errors import DataError
from radpath.imaging import Label, LabelMask, Modality, Volume
from radpath.radfeatures import (
    FeatureVector,
    HistogramPca,
    RadFeatureConfig,
    distance_to_ventricles,
    extract_rad,
    extract_rad_table,
    first_order,
    histogram_bins,
    pca_fit,
    pca_project,
    rad_feature_names,
    rad_table_names,
    tumor_location,
    volumetrics,
)
from radpath.texture import texture_features

E, N, D, V = Label.ETUMOR, Label.NONETUMOR, Label.EDEMA, Label.VENT


def mask_from(points, shape=(6, 6, 6), spacing=(1.0, 1.0, 1.0)):
    labels = np.zeros(shape, dtype=np.uint8)
    for lab, pts in points.items():
        for p in pts:
            labels[p] = lab
    return LabelMask(labels, spacing)


# ---------------------------------------------------------------- volumetrics / location


def test_volumetrics_examples():
    labels = np.zeros((10, 10, 1), np.uint8)
    labels[:, 0, 0] = E
    labels[:, 1:4, 0] = D
    f = volumetrics(LabelMask(labels))
    assert f["etumor_vol_mm3"] == 10
    assert (f["etumor_vol_frac"], f["edema_vol_frac"], f["nonetumor_vol_frac"]) == (0.25, 0.75, 0)
    assert sum(v for k, v in f.items() if k.endswith("frac")) == 1


def test_volumetrics_requires_tumor():
    with pytest.raises(DataError, match="no tumor"):
        volumetrics(LabelMask(np.zeros((2, 2, 2))))


def test_location_examples():
    assert tumor_location(mask_from({E: [(2, 3, 4)]})) == (2, 3, 4)
    assert tumor_location(mask_from({E: [(0, 0, 0)], D: [(2, 0, 0)]})) == (1, 0, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.tuples(*[st.integers(0, 3)] * 3))
def test_location_translation(seed, delta):
    rng = np.random.default_rng(seed)
    labels = np.zeros((10, 10, 10), np.uint8)
    labels[:6, :6, :6] = rng.integers(0, 4, (6, 6, 6)) * (rng.random((6, 6, 6)) < 0.5)
    labels[0, 0, 0] = E
    spacing = (0.5, 1.0, 2.0)
    base = tumor_location(LabelMask(labels, spacing))
    moved = tumor_location(LabelMask(np.roll(labels, delta, axis=(0, 1, 2)), spacing))
    for b, m, d, s in zip(base, moved, delta, spacing):
        assert m == pytest.approx(b + d * s, abs=1e-12)


# ---------------------------------------------------------------- distances


def test_distance_examples():
    assert distance_to_ventricles(mask_from({E: [(0, 0, 0)], V: [(1, 0, 0)]}), E) == 1.0
    assert distance_to_ventricles(mask_from({E: [(0, 0, 0)], V: [(3, 4, 0)]}), E) == 5.0


def brute_distance(labels, region, spacing):
    a = np.argwhere(labels == region) * spacing
    b = np.argwhere(labels == V) * spacing
    return min(math.dist(p, q) for p, q in itertools.product(a, b))


def test_distance_matches_all_pairs_oracle():
    rng = np.random.default_rng(4)
    for _ in range(25):
        labels = rng.choice([0, 1, 2, 3, 4], size=(5, 6, 4), p=[0.7, 0.1, 0.05, 0.1, 0.05]).astype(np.uint8)
        labels[0, 0, 0], labels[4, 5, 3], labels[2, 2, 2] = E, V, D
        spacing = tuple(rng.uniform(0.5, 2.0, 3))
        m = LabelMask(labels, spacing)
        for reg in (E, D):
            assert distance_to_ventricles(m, reg) == pytest.approx(brute_distance(labels, reg, spacing), rel=1e-12)


def test_spacing_doubling():
    labels = np.zeros((8, 8, 8), np.uint8)
    labels[1:3, 1:4, 1:2] = E
    labels[4:6, 1:3, 1:3] = D
    labels[7, 7, 7] = V
    a, b = LabelMask(labels, (1.0, 0.5, 2.0)), LabelMask(labels, (2.0, 1.0, 4.0))
    va, vb = volumetrics(a), volumetrics(b)
    for k in va:
        if k.endswith("mm3"):
            assert vb[k] == 8 * va[k]
    for reg in (E, D):
        assert distance_to_ventricles(b, reg) == pytest.approx(2 * distance_to_ventricles(a, reg), rel=1e-12)


def test_missing_vent_sentinel(caplog):
    m = mask_from({E: [(0, 0, 0)]})
    with caplog.at_level(logging.WARNING):
        assert distance_to_ventricles(m, E, missing=-1.0) == -1.0
    assert "Vent" in caplog.text
    with pytest.raises(DataError):
        distance_to_ventricles(m, E)


# ---------------------------------------------------------------- intensity statistics


def test_first_order_examples():
    assert first_order([1, 1, 1]) == {"mean": 1, "std": 0, "skew": 0, "kurt": 0}
    f = first_order([0, 0, 0, 0, 10])
    assert f["mean"] == 2 and f["std"] == 4 and f["skew"] == pytest.approx(1.5, abs=1e-15)
    # two-point distribution p=0.2: excess kurtosis = (1 - 6pq) / pq
    assert f["kurt"] == pytest.approx((1 - 6 * 0.16) / 0.16, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.floats(-1e3, 1e3))
def test_first_order_shift(values, c):
    a, b = first_order(values), first_order(np.asarray(values) + c)
    assert b["mean"] == pytest.approx(a["mean"] + c, abs=1e-9)
    if a["std"] > 1e-3:
        for k in ("std", "skew", "kurt"):
            assert b[k] == pytest.approx(a[k], rel=1e-6, abs=1e-6)


def test_histogram_bins():
    h = histogram_bins(np.linspace(0, 5, 100001, endpoint=False), 5)
    np.testing.assert_allclose(h, 0.2, atol=1e-4)
    np.testing.assert_array_equal(histogram_bins([3, 3, 3], 5), [1, 0, 0, 0, 0])
    rng = np.random.default_rng(0)
    assert histogram_bins(rng.normal(size=50), 5).sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- PCA


def test_pca_rank_one():
    rng = np.random.default_rng(1)
    base, direction = rng.random(32), rng.normal(size=32)
    H = base + np.outer(rng.normal(size=12), direction)
    model = pca_fit(H, 3)
    assert model.eigenvalues[0] > 0.1
    assert np.all(np.abs(model.eigenvalues[1:]) < 1e-10)
    u = direction / np.linalg.norm(direction)
    assert abs(abs(model.components[0] @ u) - 1) < 1e-10
    assert model.components[0][np.abs(model.components[0]).argmax()] > 0


def test_pca_centering_and_reconstruction():
    rng = np.random.default_rng(2)
    H = rng.dirichlet(np.ones(32), size=40)
    model = pca_fit(H, 3)
    np.testing.assert_array_equal(pca_project(model, model.mean), 0)
    full = pca_fit(H, 32)
    scores = pca_project(full, H)
    np.testing.assert_allclose(scores @ full.components, H - H.mean(axis=0), atol=1e-8)
    assert np.all(np.diff(full.eigenvalues) <= 1e-15)


def test_pca_needs_enough_subjects():
    with pytest.raises(DataError):
        pca_fit(np.ones((3, 32)), 3)


def test_histogram_pca_leakage():
    rng = np.random.default_rng(3)
    names = ["a"] + [f"t1_etumor_pcahist_b{k:02d}" for k in range(8)] + ["z"]
    X = rng.random((10, len(names)))
    train, test = X[:7], X[7:]
    hp = HistogramPca(2).fit(train, names)
    assert hp.out_names == ["a", "t1_etumor_pca_c0", "t1_etumor_pca_c1", "z"]
    before = hp.transform(test)
    refit = HistogramPca(2).fit(train, names)
    perturbed = test.copy()
    perturbed[:, 1:9] += 5.0
    refit.transform(perturbed)
    for key in hp.models:
        np.testing.assert_array_equal(hp.models[key].components, refit.models[key].components)
        np.testing.assert_array_equal(hp.models[key].mean, refit.models[key].mean)
    np.testing.assert_array_equal(hp.transform(test), before)
    np.testing.assert_allclose(hp.transform(train)[:, 1:3].mean(axis=0), 0, atol=1e-12)


# ---------------------------------------------------------------- assembly


def small_subject(seed=0, shape=(8, 8, 6)):
    rng = np.random.default_rng(seed)
    labels = np.zeros(shape, np.uint8)
    labels[1:4, 1:4, 1:4] = N
    labels[4:7, 1:5, 1:4] = E
    labels[1:7, 5:7, 1:5] = D
    labels[0, 7, 5] = V
    labels[0, 6, 5] = V
    mask = LabelMask(labels, (1.0, 1.0, 2.0))
    vols = {m: Volume(rng.normal(100 + 10 * i, 5, shape), (1.0, 1.0, 2.0), m) for i, m in enumerate(Modality)}
    return vols, mask


def fitted_models(config):
    rows = [extract_rad_table(f"s{i}", *small_subject(i), 50, "F", config) for i in range(5)]
    names = rad_table_names(config)
    X = np.array([[r[n] for n in names] for r in rows])
    return HistogramPca(config.pca_components).fit(X, names), X


def test_extract_rad_schema_and_determinism():
    config = RadFeatureConfig()
    hp, X = fitted_models(config)
    vols, mask = small_subject(0)
    a = extract_rad("s0", vols, mask, 50, "F", config, hp.models)
    b = extract_rad("s0", vols, mask, 50, "F", config, hp.models)
    assert a.names == tuple(rad_feature_names(config)) == tuple(hp.out_names)
    assert len(a.values) == 697
    assert a.values.tobytes() == b.values.tobytes()
    np.testing.assert_allclose(a.values, hp.transform(X[:1])[0], rtol=1e-12, atol=1e-12)


def test_extract_rad_composes_module_operations():
    config = RadFeatureConfig(regions=(E, D), sequences=(Modality.T2,))
    vols, mask = small_subject(7)
    row = extract_rad_table("s7", vols, mask, 61.5, "M", config)
    vol = volumetrics(mask)
    assert row["mask_edema_vol_mm3"] == vol["edema_vol_mm3"]
    assert row["mask_tumor_loc_z"] == tumor_location(mask)[2]
    assert row["mask_edema_dist_vent"] == distance_to_ventricles(mask, D)
    data = vols[Modality.T2].data.astype(np.float64)
    roi = mask.region(E)
    assert row["t2_etumor_fo_skew"] == first_order(data[roi])["skew"]
    assert row["t2_etumor_hist_b3"] == histogram_bins(data[roi], 5)[3]
    tex = texture_features(data, roi)
    assert row["t2_etumor_glszm_lze"] == tex["glszm_lze"]
    assert row["t2_etumor_lbp_bin4"] == tex["lbp_bin4"]
    assert row["clin_subject_age_years"] == 61.5 and row["clin_subject_gender_male"] == 1


def test_extract_rad_errors_carry_subject():
    vols, mask = small_subject(0)
    del vols[Modality.FLAIR]
    with pytest.raises(DataError, match="subject s42: missing FLAIR"):
        extract_rad_table("s42", vols, mask, 50, "F")
    vols, mask = small_subject(0)
    with pytest.raises(DataError, match="s3: no PCA model"):
        extract_rad("s3", vols, mask, 50, "F")
    with pytest.raises(DataError, match="gender"):
        extract_rad_table("s3", vols, mask, 50, "X")


def test_feature_vector_validation():
    with pytest.raises(DataError, match="duplicate"):
        FeatureVector("s", ["a", "a"], [1, 2])
    with pytest.raises(DataError, match="non-finite"):
        FeatureVector("s", ["a"], [np.nan])
    assert FeatureVector("s", ["a", "b"], [1, 2], "Path").as_dict() == {"a": 1, "b": 2}
