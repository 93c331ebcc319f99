"""Training loops for the toy extractors and the per-lesion U-Net.

Extractor training follows the published regime (batch size 32, 20
epochs, initial learning rate 0.01) at toy width; the U-Net uses Adam
since the tiny segmentation task trains in a couple of minutes of CPU.
Exports: ONNX model, feature CSVs, a recorded feature vector for the
all-zeros image (cross-component parity fixture), PFMAP probability maps,
and per-model metadata JSON with held-out F1/IoU.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .formats import _atomic_write_bytes, write_feature_csv, write_pfmap
from .models import EXTRACTORS, TinyUNet, parameter_count
from .onnx_export import export_extractor_onnx, export_unet_onnx
from .synth import make_classification_set, make_segmentation_set


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the epoch and last finite loss."""


def _to_batch(images: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(images.astype(np.float32) / 255.0).permute(0, 3, 1, 2)


def write_versions_lock(out_dir: Path) -> None:
    lock = {
        "torch": torch.__version__,
        "numpy": np.__version__,
    }
    payload = json.dumps(lock, sort_keys=True, indent=2) + "\n"
    _atomic_write_bytes(out_dir / "versions.lock", payload.encode("utf-8"))


@dataclass
class ExtractorResult:
    val_accuracy: float
    feature_dim: int
    onnx_path: Path
    train_csv: Path
    val_csv: Path
    zeros_fixture_path: Path
    model: object = None


def train_extractor(
    out_dir,
    arch: str = "a",
    feature_dim: int = 64,
    n_per_class: int = 40,
    val_per_class: int = 20,
    epochs: int = 20,
    batch_size: int = 32,
    learning_rate: float = 0.01,
    seed: int = 0,
    image_size: int = 64,
) -> ExtractorResult:
    """Train one toy extractor and export every interchange artifact."""
    if n_per_class < 30:
        raise ValueError(f"need at least 30 images per class, got {n_per_class}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)

    train_images, train_labels = make_classification_set(seed, n_per_class, image_size)
    val_images, val_labels = make_classification_set(seed + 1, val_per_class, image_size)

    model = EXTRACTORS[arch](feature_dim)
    assert parameter_count(model) <= 200_000, "extractor exceeds the toy budget"
    optimizer = torch.optim.SGD(model.parameters(), lr=learning_rate, momentum=0.9)
    scheduler = torch.optim.lr_scheduler.StepLR(optimizer, step_size=8, gamma=0.3)

    X = _to_batch(train_images)
    y = torch.from_numpy(train_labels)
    n = X.shape[0]
    generator = torch.Generator().manual_seed(seed)

    model.train()
    for epoch in range(epochs):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            optimizer.zero_grad()
            logits = model(X[idx])
            loss = F.cross_entropy(logits, y[idx])
            if not math.isfinite(loss.item()):
                raise TrainingDiverged(
                    f"extractor loss went non-finite at epoch {epoch}: {loss.item()}"
                )
            loss.backward()
            optimizer.step()
        scheduler.step()

    model.eval()
    with torch.no_grad():
        Xv = _to_batch(val_images)
        val_pred = model(Xv).argmax(dim=1).numpy()
        val_accuracy = float((val_pred == val_labels).mean())

        feats_train = model.features(X).numpy().astype(np.float64)
        feats_val = model.features(Xv).numpy().astype(np.float64)
        zeros_vec = (
            model.features(torch.zeros(1, 3, image_size, image_size)).numpy()[0]
        )

    train_ids = [f"train-{i:04d}" for i in range(n)]
    val_ids = [f"val-{i:04d}" for i in range(Xv.shape[0])]
    train_csv = out_dir / f"features_{arch}_train.csv"
    val_csv = out_dir / f"features_{arch}_val.csv"
    write_feature_csv(train_csv, train_ids, feats_train, train_labels)
    write_feature_csv(val_csv, val_ids, feats_val, val_labels)

    onnx_path = out_dir / f"extractor_{arch}.onnx"
    _atomic_write_bytes(onnx_path, export_extractor_onnx(model, image_size))

    zeros_fixture_path = out_dir / f"zeros_fixture_{arch}.json"
    fixture = {
        "arch": arch,
        "image_size": image_size,
        "feature_dim": feature_dim,
        "vector": [float(v) for v in zeros_vec],
    }
    _atomic_write_bytes(
        zeros_fixture_path, (json.dumps(fixture, indent=2) + "\n").encode("utf-8")
    )
    write_versions_lock(out_dir)
    return ExtractorResult(
        val_accuracy, feature_dim, onnx_path, train_csv, val_csv,
        zeros_fixture_path, model,
    )


@dataclass
class UnetResult:
    holdout_iou: float
    holdout_f1: float
    onnx_path: Path
    metadata_path: Path
    probmask_dir: Path
    model: object = None


def _binary_iou_f1(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    tp = int((pred & truth).sum())
    fp = int((pred & ~truth).sum())
    fn = int((~pred & truth).sum())
    union = tp + fp + fn
    iou = 1.0 if union == 0 else tp / union
    f1 = 1.0 if (2 * tp + fp + fn) == 0 else 2 * tp / (2 * tp + fp + fn)
    return iou, f1


def train_unet(
    out_dir,
    lesion_kind: str = "HE",
    n_train: int = 30,
    n_holdout: int = 10,
    epochs: int = 40,
    batch_size: int = 8,
    learning_rate: float = 2e-3,
    seed: int = 0,
    image_size: int = 64,
    threshold: float = 0.5,
) -> UnetResult:
    """Train the per-lesion U-Net and export PFMAP masks plus metadata."""
    if n_train < 20:
        raise ValueError(f"need at least 20 annotated images, got {n_train}")
    out_dir = Path(out_dir)
    probmask_dir = out_dir / "probmasks"
    probmask_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)

    train_images, train_masks = make_segmentation_set(seed, n_train, image_size)
    hold_images, hold_masks = make_segmentation_set(seed + 1, n_holdout, image_size)
    if not train_masks.any():
        raise ValueError("degenerate segmentation set: no positive pixels")

    model = TinyUNet()
    assert parameter_count(model) <= 500_000, "U-Net exceeds the toy budget"
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)

    X = _to_batch(train_images)
    Y = torch.from_numpy(train_masks.astype(np.float32)).unsqueeze(1)
    n = X.shape[0]
    generator = torch.Generator().manual_seed(seed)

    model.train()
    for epoch in range(epochs):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            optimizer.zero_grad()
            probs = model(X[idx])
            loss = F.binary_cross_entropy(probs, Y[idx])
            if not math.isfinite(loss.item()):
                raise TrainingDiverged(
                    f"unet loss went non-finite at epoch {epoch}: {loss.item()}"
                )
            loss.backward()
            optimizer.step()

    model.eval()
    ious = []
    f1s = []
    with torch.no_grad():
        for i in range(n_holdout):
            probs = model(_to_batch(hold_images[i : i + 1]))[0, 0].numpy()
            probs = np.clip(probs, 0.0, 1.0)
            write_pfmap(probmask_dir / f"holdout_{i:03d}_{lesion_kind}.pfm", probs)
            pred = probs >= threshold
            iou, f1 = _binary_iou_f1(pred, hold_masks[i])
            ious.append(iou)
            f1s.append(f1)
    holdout_iou = float(np.mean(ious))
    holdout_f1 = float(np.mean(f1s))

    onnx_path = out_dir / f"unet_{lesion_kind}.onnx"
    _atomic_write_bytes(onnx_path, export_unet_onnx(model, image_size))

    metadata_path = out_dir / f"metadata_{lesion_kind}.json"
    metadata = {
        "kind": lesion_kind,
        "f1": holdout_f1,
        "iou": holdout_iou,
        "threshold": threshold,
        "holdout_size": n_holdout,
    }
    _atomic_write_bytes(
        metadata_path, (json.dumps(metadata, indent=2) + "\n").encode("utf-8")
    )
    write_versions_lock(out_dir)
    return UnetResult(holdout_iou, holdout_f1, onnx_path, metadata_path, probmask_dir, model)
