"""Secondary acceptance: cross-component contracts with the grading pipeline."""

import json
import time
import warnings

import numpy as np
import pytest

from drgrade.cli import main as drgrade_main
from drgrade.features import load_features
from drgrade.imgio import load_probmask, save_probmask
from drgrade.onnx_rt import load_model, run_image_model
from drtrainer.train import train_extractor, train_unet


def ok(line: str) -> None:
    print(f"[PASS] {line}", flush=True)


@pytest.fixture(scope="module")
def extractor_artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("extractor")
    return train_extractor(out, arch="a", feature_dim=64, epochs=20, seed=3)


@pytest.fixture(scope="module")
def unet_artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("unet")
    start = time.perf_counter()
    res = train_unet(out, lesion_kind="HE", epochs=40, seed=1)
    res.elapsed = time.perf_counter() - start
    return res


def test_s01_unet_iou_and_pfmap_round_trip(unet_artifacts, tmp_path):
    res = unet_artifacts
    assert res.elapsed <= 300.0
    assert res.holdout_iou >= 0.8

    pfm_files = sorted(res.probmask_dir.glob("*.pfm"))
    assert pfm_files
    for pfm in pfm_files:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            mask = load_probmask(pfm)
        back = tmp_path / pfm.name
        save_probmask(mask, back)
        assert back.read_bytes() == pfm.read_bytes()

    meta = json.loads(res.metadata_path.read_text())
    assert 0.0 <= meta["f1"] <= 1.0
    ok(
        f"toy U-Net: held-out IoU {res.holdout_iou:.3f} in {res.elapsed:.0f}s; "
        f"{len(pfm_files)} PFMAP files round-trip bit-exactly; metadata f1 {meta['f1']:.3f}"
    )


def test_s02_extractor_parity_and_end_to_end_training(extractor_artifacts, tmp_path):
    res = extractor_artifacts
    assert res.val_accuracy >= 0.80

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        model = load_model(res.onnx_path)
        train_ds = load_features(res.train_csv)
        val_ds = load_features(res.val_csv)
    assert train_ds.dim == res.feature_dim
    assert len(np.unique(train_ds.labels)) == 3 and len(np.unique(val_ds.labels)) == 3

    black = np.zeros((64, 64, 3), dtype=np.uint8)
    got = run_image_model(model, black)
    want = np.array(json.loads(res.zeros_fixture_path.read_text())["vector"])
    worst = float(np.abs(got - want).max())
    assert worst <= 1e-4

    models_dir = tmp_path / "models"
    rc = drgrade_main([
        "train", str(res.train_csv), str(res.val_csv), str(models_dir),
    ])
    assert rc == 0
    assert (models_dir / "ensemble.json").is_file()
    metrics = json.loads((models_dir / "metrics.json").read_text())
    ok(
        f"extractor: zeros-image parity {worst:.2e}; exported CSV trained the "
        f"ensemble end-to-end (accuracy {metrics['ensemble']['accuracy']:.3f})"
    )


def test_s03_artifacts_validate_with_zero_warnings(extractor_artifacts, unet_artifacts):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_features(extractor_artifacts.train_csv)
        load_features(extractor_artifacts.val_csv)
        load_model(extractor_artifacts.onnx_path)
        load_model(unet_artifacts.onnx_path)
        for pfm in sorted(unet_artifacts.probmask_dir.glob("*.pfm")):
            load_probmask(pfm)
        meta = json.loads(unet_artifacts.metadata_path.read_text())
        assert set(meta) >= {"kind", "f1", "iou"}
    ok("every exported artifact loads through the pipeline's own loaders, zero warnings")
