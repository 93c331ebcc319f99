"""Trust scoring and evaluation metrics for the segmentation side.

Per lesion model the pipeline reports a trust percentage: a weighted
average of input image quality (MSE against a good-quality reference),
the model's validation F1, and its confidence (one minus the mean binary
entropy of the probability mask, in bits, so both terms live in [0, 1]).
IoU is reported alongside, and Cohen's kappa measures rater agreement
over presence labels.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .imgio import BinaryMask, GrayImage, ProbMask
from .lesions import LesionKind

DEFAULT_WEIGHTS = (0.4, 0.3, 0.3)  # quality, f1, confidence
MSE_RESIZE = (512, 512)

KAPPA_BANDS = (
    (0.0, "Weaker than chance"),  # K < 0
    (0.2, "Weak agreement"),
    (0.4, "Moderate agreement"),
    (0.6, "Medium agreement"),
    (0.8, "Significant agreement"),
    (1.0 + 1e-12, "Almost perfect agreement"),
)


@dataclass(frozen=True)
class TrustWeights:
    w_quality: float = DEFAULT_WEIGHTS[0]
    w_f1: float = DEFAULT_WEIGHTS[1]
    w_conf: float = DEFAULT_WEIGHTS[2]

    def __post_init__(self):
        if min(self.w_quality, self.w_f1, self.w_conf) < 0:
            raise ValueError("trust weights must be non-negative")
        total = self.w_quality + self.w_f1 + self.w_conf
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"trust weights must sum to 1, got {total}")


@dataclass(frozen=True)
class LesionTrust:
    confidence: float
    quality: float
    f1: float
    iou: float
    trust_pct: int


@dataclass(frozen=True)
class TrustReport:
    per_lesion: dict[LesionKind, LesionTrust]
    weights: TrustWeights


def entropy_confidence(p: ProbMask) -> float:
    """One minus the mean per-pixel binary entropy (log base 2).

    Saturated masks (all probabilities 0 or 1) score 1.0; an all-0.5 mask
    scores 0.0.
    """
    v = p.data.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(v * np.log2(v) + (1.0 - v) * np.log2(1.0 - v))
    h = np.nan_to_num(h, nan=0.0, posinf=0.0, neginf=0.0)  # 0 log 0 := 0
    return float(1.0 - h.mean())


def _nearest_resize(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = plane.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return plane[rows][:, cols]


def mse_quality(
    img: GrayImage,
    reference: GrayImage,
    resize_to: tuple[int, int] | None = MSE_RESIZE,
) -> tuple[float, float]:
    """Mean squared difference on [0, 1] intensities, and 1 - min(mse, 1).

    Both images are nearest-neighbor resized to ``resize_to`` first; pass
    None to compare at native resolution (dimensions must then match).
    """
    a = img.data.astype(np.float64) / 255.0
    b = reference.data.astype(np.float64) / 255.0
    if resize_to is not None:
        a = _nearest_resize(a, resize_to[1], resize_to[0])
        b = _nearest_resize(b, resize_to[1], resize_to[0])
    if a.shape != b.shape:
        raise ValueError(f"image dims {a.shape} vs reference {b.shape} after resize")
    mse = float(((a - b) ** 2).mean())
    return mse, 1.0 - min(mse, 1.0)


def _check_same_dims(pred: BinaryMask, truth: BinaryMask) -> None:
    if pred.data.shape != truth.data.shape:
        raise ValueError(
            f"mask dims {pred.width}x{pred.height} vs {truth.width}x{truth.height}"
        )


def f1_score(pred: BinaryMask, truth: BinaryMask) -> float:
    """2TP / (2TP + FP + FN); two empty masks agree perfectly (1.0)."""
    _check_same_dims(pred, truth)
    tp = int((pred.data & truth.data).sum())
    fp = int((pred.data & ~truth.data).sum())
    fn = int((~pred.data & truth.data).sum())
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def iou(pred: BinaryMask, truth: BinaryMask) -> float:
    """Intersection over union; two empty masks agree perfectly (1.0)."""
    _check_same_dims(pred, truth)
    inter = int((pred.data & truth.data).sum())
    union = int((pred.data | truth.data).sum())
    if union == 0:
        return 1.0
    return inter / union


def weighted_trust(
    quality: float, f1: float, confidence: float, w: TrustWeights = TrustWeights()
) -> int:
    """Percentage 100 * (w_q * quality + w_f1 * f1 + w_c * confidence), rounded."""
    for name, v in (("quality", quality), ("f1", f1), ("confidence", confidence)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    value = 100.0 * (w.w_quality * quality + w.w_f1 * f1 + w.w_conf * confidence)
    return int(round(value))


def kappa_band(k: float) -> str:
    if k < 0:
        return KAPPA_BANDS[0][1]
    if k == 0:
        return "Equal to chance"
    for upper, label in KAPPA_BANDS[1:]:
        if k < upper:
            return label
    return KAPPA_BANDS[-1][1]


def cohen_kappa(labels_a, labels_b) -> tuple[float, str]:
    """Chance-corrected agreement K = (P_o - P_e) / (1 - P_e) plus its band.

    P_e is the product-of-marginals chance agreement. When both raters are
    constant and identical (P_e = 1) K is defined as 1.0.
    """
    labels_a = list(labels_a)
    labels_b = list(labels_b)
    if len(labels_a) != len(labels_b):
        raise ValueError(f"label sequences differ in length: {len(labels_a)} vs {len(labels_b)}")
    if not labels_a:
        raise ValueError("label sequences are empty")
    n = len(labels_a)
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    count_a = Counter(labels_a)
    count_b = Counter(labels_b)
    p_e = sum(
        (count_a[c] / n) * (count_b[c] / n) for c in set(count_a) | set(count_b)
    )
    if p_e == 1.0:
        return 1.0, kappa_band(1.0)
    k = (p_o - p_e) / (1.0 - p_e)
    return k, kappa_band(k)


def lesion_trust(
    prob: ProbMask,
    quality: float,
    model_f1: float,
    model_iou: float,
    weights: TrustWeights = TrustWeights(),
) -> LesionTrust:
    """Assemble one lesion row: confidence from the mask, the rest given."""
    conf = entropy_confidence(prob)
    return LesionTrust(
        confidence=conf,
        quality=quality,
        f1=model_f1,
        iou=model_iou,
        trust_pct=weighted_trust(quality, model_f1, conf, weights),
    )


TABLE_ORDER = (LesionKind.HEM, LesionKind.SE, LesionKind.HE, LesionKind.MA)


def render_trust_table(report: TrustReport) -> str:
    """Terminal table with one column per lesion kind (HEM SE HE MA)."""
    kinds = [k for k in TABLE_ORDER if k in report.per_lesion]
    header = "Lesion       " + "".join(f"{k.value:>8s}" for k in kinds)
    conf = "Confidence   " + "".join(
        f"{report.per_lesion[k].confidence:8.2f}" for k in kinds
    )
    iou_row = "IoU score    " + "".join(f"{report.per_lesion[k].iou:8.2f}" for k in kinds)
    trust = "Module Trust " + "".join(
        f"{report.per_lesion[k].trust_pct:7d}%" for k in kinds
    )
    return "\n".join([header, conf, iou_row, trust])
