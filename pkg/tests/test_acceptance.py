"""Acceptance gate: one test per criterion, at the stated tolerance.

Each test prints a single ``[PASS] ...`` line on success so the suite run
doubles as a checklist; a failed assertion marks the criterion failed.
Everything runs on synthetic fixtures only.
"""

import json
import time

import numpy as np
import pytest

from drgrade.classifiers import ALL_KINDS, Hyperparams, train, validate
from drgrade.cli import main as cli_main
from drgrade.ensemble import OVERALL, PER_CLASS, fit_weights
from drgrade.features import FeatureDataset, channel_stats_features, fit_scaler
from drgrade.imgio import BinaryMask, ProbMask, RgbImage
from drgrade.lesions import (
    Component,
    FiveLevelStage,
    LesionKind,
    LesionMap,
    connected_components,
    otsu_threshold,
    stage,
)
from drgrade.preprocess import (
    ColorStats,
    GaussianParams,
    color_normalize,
    convolve2d,
    gaussian_kernel,
    remove_region,
)
from drgrade.synthgen import (
    LesionSpec,
    Xorshift64Star,
    apply_channel_jitter,
    gen_features,
    gen_fundus,
)
from drgrade.trust import (
    TrustWeights,
    cohen_kappa,
    entropy_confidence,
    f1_score,
    iou,
    weighted_trust,
)


def ok(line: str) -> None:
    print(f"[PASS] {line}", flush=True)


# -- criterion 1: convolution against an independent double-loop oracle --------

def conv_oracle(plane, kernel):
    h, w = plane.shape
    a = kernel.shape[0] // 2
    b = kernel.shape[1] // 2
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(-a, a + 1):
                for j in range(-b, b + 1):
                    yy = min(max(y + j, 0), h - 1)
                    xx = min(max(x + i, 0), w - 1)
                    acc += plane[yy, xx] * kernel[i + a, j + b]
            out[y, x] = acc
    return out


def test_c01_convolution_matches_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    shapes = [(3, 3), (5, 5), (3, 5), (5, 3), (7, 7)]
    worst = 0.0
    for _ in range(50):
        plane = rng.random((16, 16)) * 255.0
        for shp in shapes:
            kernel = rng.standard_normal(shp)
            got = convolve2d(plane, kernel)
            want = conv_oracle(plane, kernel)
            worst = max(worst, float(np.abs(got - want).max()))
    assert worst <= 1e-12

    ident = np.zeros((3, 3))
    ident[1, 1] = 1.0
    plane = rng.random((16, 16))
    assert np.array_equal(convolve2d(plane, ident), plane)

    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    ok(f"convolution oracle: 250 cases, max diff {worst:.1e}, identity exact, {elapsed:.2f}s")


# -- criterion 2: Gaussian kernel normalization and impulse response -------------

def test_c02_gaussian_kernel_contracts():
    rng = np.random.default_rng(1)
    worst_sum = 0.0
    for _ in range(1000):
        params = GaussianParams(
            sigma_x=float(rng.uniform(0.1, 6.0)),
            sigma_y=float(rng.uniform(0.1, 6.0)),
            mu_x=float(rng.uniform(-2.0, 2.0)),
            mu_y=float(rng.uniform(-2.0, 2.0)),
            radius_a=int(rng.integers(0, 7)),
            radius_b=int(rng.integers(0, 7)),
        )
        worst_sum = max(worst_sum, abs(gaussian_kernel(params).sum() - 1.0))
    assert worst_sum <= 1e-9

    kernel = gaussian_kernel(GaussianParams(1.3, 0.7, 0.4, -0.2, 2, 3))
    plane = np.zeros((17, 17))
    plane[8, 8] = 1.0
    response = convolve2d(plane, kernel)
    a, b = 2, 3
    worst_imp = 0.0
    for i in range(-a, a + 1):
        for j in range(-b, b + 1):
            worst_imp = max(worst_imp, abs(response[8 - j, 8 - i] - kernel[i + a, j + b]))
    assert worst_imp <= 1e-12
    ok(f"gaussian kernel: 1000 sums within {worst_sum:.1e}, impulse response within {worst_imp:.1e}")


# -- criterion 3: Otsu equals exhaustive search -----------------------------------

def otsu_oracle(values):
    bins = np.minimum((values.astype(np.float64) * 256).astype(np.int64), 255)
    total = bins.size
    best_var, best_k = -1.0, 0
    for k in range(256):
        lo = bins < k
        n0 = int(lo.sum())
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        m0 = bins[lo].mean()
        m1 = bins[~lo].mean()
        var = (n0 / total) * (n1 / total) * (m0 - m1) ** 2
        if var > best_var:
            best_var, best_k = var, k
    return best_k / 256


def test_c03_otsu_exhaustive_agreement():
    rng = np.random.default_rng(2)
    for trial in range(100):
        lo_mode = rng.uniform(0.05, 0.45)
        hi_mode = rng.uniform(0.55, 0.95)
        width = rng.uniform(0.02, 0.12)
        frac = rng.uniform(0.15, 0.85)
        vals = np.where(
            rng.random(400) < frac,
            rng.normal(lo_mode, width, 400),
            rng.normal(hi_mode, width, 400),
        ).clip(0.0, 1.0)
        mask = ProbMask(vals.reshape(20, 20))
        assert otsu_threshold(mask) == otsu_oracle(vals), f"trial {trial}"
    ok("otsu: exact agreement with exhaustive 256-threshold search on 100 bimodal masks")


# -- criterion 4: metric identities + kappa fixture --------------------------------

def test_c04_metric_suite():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        shape = (int(rng.integers(2, 12)), int(rng.integers(2, 12)))
        a = BinaryMask(rng.random(shape) > rng.uniform(0.2, 0.8))
        b = BinaryMask(rng.random(shape) > rng.uniform(0.2, 0.8))
        assert iou(a, a) == 1.0 and f1_score(a, a) == 1.0
        assert iou(a, b) == iou(b, a)
        assert f1_score(a, b) == f1_score(b, a)
        assert iou(a, b) <= f1_score(a, b) + 1e-15
        if a.data.any() and b.data.any() and not (a.data & b.data).any():
            assert iou(a, b) == 0.0 and f1_score(a, b) == 0.0

    # constructed pair with P_o = 0.865 and P_e = 0.5
    rater_a = ["X"] * 200 + ["Y"] * 200
    rater_b = ["X"] * 173 + ["Y"] * 27 + ["Y"] * 173 + ["X"] * 27
    k, band = cohen_kappa(rater_a, rater_b)
    assert abs(k - 0.73) <= 1e-12
    assert band == "Significant agreement"
    ok(f"metric suite: 1000 random pairs hold identities; kappa fixture {k:.15f} ({band})")


# -- criterion 5: trust formula --------------------------------------------------

def test_c05_trust_formula():
    w = TrustWeights(0.4, 0.3, 0.3)
    assert weighted_trust(1.0, 1.0, 1.0, w) == 100
    assert weighted_trust(0.0, 0.0, 0.0, w) == 0
    grid = np.linspace(0.0, 1.0, 10)
    for a in grid:
        for b in grid:
            prev = -1
            for c in grid:
                cur = weighted_trust(a, b, c, w)
                assert cur >= prev
                prev = cur
    for b in grid:
        for c in grid:
            prev = -1
            for a in grid:
                cur = weighted_trust(a, b, c, w)
                assert cur >= prev
                prev = cur
    for a in grid:
        for c in grid:
            prev = -1
            for b in grid:
                cur = weighted_trust(a, b, c, w)
                assert cur >= prev
                prev = cur
    ok("trust formula: endpoints 100/0 with weights (0.4, 0.3, 0.3); monotone on the 10^3 grid")


# -- criterion 6: entropy confidence ----------------------------------------------

def test_c06_entropy_confidence():
    hard = np.zeros((10, 10))
    hard[:, :5] = 1.0
    assert entropy_confidence(ProbMask(hard)) == 1.0
    assert entropy_confidence(ProbMask(np.full((10, 10), 0.5))) == 0.0

    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        p = rng.random((12, 12))
        worst = max(
            worst,
            abs(entropy_confidence(ProbMask(p)) - entropy_confidence(ProbMask(1.0 - p))),
        )
    assert worst <= 1e-12
    ok(f"entropy confidence: saturated 1.0, uniform 0.0, complement symmetry within {worst:.1e}")


# -- criterion 7: classifier suite -------------------------------------------------

def test_c07_classifier_suite():
    start = time.perf_counter()
    ds = gen_features(101, 200, 20, 8.0)
    split = int(len(ds) * 0.7)
    tr = FeatureDataset(ds.features[:split], ds.labels[:split], ds.ids[:split])
    scaler = fit_scaler(tr)
    train_ds = FeatureDataset(scaler.transform(tr.features), tr.labels, tr.ids)
    val_ds = FeatureDataset(
        scaler.transform(ds.features[split:]), ds.labels[split:], ds.ids[split:]
    )

    members = []
    accs = {}
    for kind in ALL_KINDS:
        model = train(kind, train_ds, Hyperparams(), seed=7)
        res = validate(model, val_ds)
        assert res.accuracy >= 0.90, (kind, res.accuracy)
        members.append(model)
        accs[kind] = res.accuracy

    ens = fit_weights(members, val_ds, basis=PER_CLASS)
    ens_acc = float((ens.predict(val_ds.features) == val_ds.labels).mean())
    assert ens_acc >= max(accs.values()) - 0.02

    solo = fit_weights([members[0]], val_ds, basis=OVERALL)
    member_preds = members[0].predict(val_ds.features)
    for i in range(len(val_ds)):
        label, _ = solo.vote(val_ds.features[i])
        assert int(label) == int(member_preds[i])

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    worst = min(accs.values())
    ok(
        f"classifier suite: six members >= 90% (worst {100 * worst:.1f}%), "
        f"ensemble {100 * ens_acc:.1f}%, single-member equality, {elapsed:.1f}s"
    )


# -- criterion 8: preprocessing impact ----------------------------------------------

PROFILES = {
    0: {},
    1: {LesionKind.MA: [LesionSpec(6)], LesionKind.SE: [LesionSpec(2)]},
    2: {LesionKind.HEM: [LesionSpec(25)], LesionKind.HE: [LesionSpec(5)]},
}
REFERENCE_STATS = ColorStats((120.0, 70.0, 40.0), (30.0, 20.0, 12.0))


def jittered_features(seed, n_per_class):
    rng = Xorshift64Star(seed)
    raw, normed, labels = [], [], []
    for cls, spec in PROFILES.items():
        for _ in range(n_per_class):
            scene = gen_fundus(rng.next_u64(), (128, 128), spec)
            jit = apply_channel_jitter(scene.image, rng)
            fundus = scene.fundus_mask
            background = BinaryMask(~fundus.data)
            plain = remove_region(jit, background)
            fixed = remove_region(color_normalize(jit, REFERENCE_STATS, fundus), background)
            raw.append(channel_stats_features(plain, grid=2))
            normed.append(channel_stats_features(fixed, grid=2))
            labels.append(cls)
    return np.array(raw), np.array(normed), np.array(labels)


def linear_svm_accuracy(X_train, y_train, X_val, y_val):
    ds = FeatureDataset(X_train, y_train, [str(i) for i in range(len(y_train))])
    scaler = fit_scaler(ds)
    model = train(
        "SvmLinear",
        FeatureDataset(scaler.transform(X_train), y_train, ds.ids),
        Hyperparams(),
        seed=3,
    )
    return float((model.predict(scaler.transform(X_val)) == y_val).mean())


def test_c08_color_normalization_impact():
    start = time.perf_counter()
    raw_tr, norm_tr, y_tr = jittered_features(11, 24)
    raw_va, norm_va, y_va = jittered_features(12, 12)
    acc_raw = linear_svm_accuracy(raw_tr, y_tr, raw_va, y_va)
    acc_norm = linear_svm_accuracy(norm_tr, y_tr, norm_va, y_va)
    gap = 100.0 * (acc_norm - acc_raw)
    assert gap >= 15.0, (acc_norm, acc_raw)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    ok(
        f"preprocessing impact: normalized {100 * acc_norm:.1f}% vs raw "
        f"{100 * acc_raw:.1f}% (+{gap:.1f} pts), {elapsed:.1f}s"
    )


# -- criterion 9: staging fixtures + monotonicity -------------------------------------

def scene_stage(spec, seed, dims=(256, 256)):
    scene = gen_fundus(seed, dims, spec)
    maps = {
        kind: connected_components(scene.lesion_masks[kind], 5, kind)
        for kind in LesionKind
    }
    return stage(maps, dims, scene.center)


def test_c09_staging():
    s0 = scene_stage({}, seed=40)
    assert s0.five_level == FiveLevelStage.S0_NONE and int(s0.three_level) == 0

    s1 = scene_stage({LesionKind.MA: [LesionSpec(5)]}, seed=41)
    assert s1.five_level == FiveLevelStage.S1_MILD and int(s1.three_level) == 1

    s3 = scene_stage(
        {LesionKind.HEM: [LesionSpec(21, quadrant=q) for q in (1, 2, 3, 4)]}, seed=42
    )
    assert s3.five_level == FiveLevelStage.S3_SEVERE and int(s3.three_level) == 2

    rng = np.random.default_rng(5)

    def comp(x, y):
        return Component(np.array([[int(y), int(x)]]), 6, (x, y))

    for _ in range(200):
        base = {}
        grown = {}
        for kind in LesionKind:
            comps = tuple(
                comp(float(rng.uniform(5, 95)), float(rng.uniform(5, 95)))
                for _ in range(int(rng.integers(0, 30)))
            )
            extra = tuple(
                comp(float(rng.uniform(5, 95)), float(rng.uniform(5, 95)))
                for _ in range(int(rng.integers(0, 10)))
            )
            base[kind] = LesionMap(kind, comps)
            grown[kind] = LesionMap(kind, comps + extra)
        lo = stage(base, (100, 100), (50.0, 50.0))
        hi = stage(grown, (100, 100), (50.0, 50.0))
        assert hi.five_level >= lo.five_level
    ok("staging: S0/S1/S3 fixtures exact; monotone under lesion addition on 200 spec pairs")


# -- criterion 10: end-to-end determinism -----------------------------------------------

def test_c10_end_to_end_determinism(tmp_path):
    root = tmp_path / "fx"
    assert cli_main(["synthgen", str(root), "--seed", "9"]) == 0
    assert cli_main([
        "train", "--config", str(root / "config.json"),
        str(root / "features_train.csv"), str(root / "features_val.csv"),
        str(root / "models"),
    ]) == 0

    reports = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert cli_main([
            "grade", "--config", str(root / "config.json"),
            str(root / "images" / "img_2_00.png"), "--out", str(out),
        ]) == 0
        doc = json.loads(out.read_text())
        doc.pop("timings_ms")
        reports.append(json.dumps(doc, sort_keys=True))
    assert reports[0] == reports[1]
    ok("end-to-end determinism: repeated grade runs byte-identical apart from timings")
