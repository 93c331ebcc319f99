"""Lesion mask post-processing and severity staging.

Probability masks are binarized (Otsu or a fixed threshold), labeled into
8-connected components, distributed over retinal quadrants, and mapped to
the clinical five-level severity scale, which then collapses to the
3-class scheme used by the classifier ensemble.

Staging reductions (the masks support nothing finer):
  - stage 3 fires only on the hemorrhage load criterion (more than 20 in
    every quadrant); venous beading and IRMA have no mask to count.
  - stage 4 (proliferative disease) is never produced here since no
    neovascularization or vitreous-hemorrhage mask exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np
from scipy import ndimage

from .features import ClassLabel
from .imgio import BinaryMask, ProbMask

OTSU_BINS = 256
DEFAULT_MIN_AREA = 5
SEVERE_HEM_PER_QUADRANT = 20  # stage 3 needs strictly more than this in all four


class ConstantMaskError(ValueError):
    """Otsu cannot split a mask whose values are all identical."""


class LesionKind(Enum):
    MA = "MA"  # microaneurysm
    HEM = "HEM"  # hemorrhage
    SE = "SE"  # soft exudate
    HE = "HE"  # hard exudate


class FiveLevelStage(IntEnum):
    S0_NONE = 0
    S1_MILD = 1
    S2_MODERATE = 2
    S3_SEVERE = 3
    S4_PROLIFERATIVE = 4


COLLAPSE = {
    FiveLevelStage.S0_NONE: ClassLabel.NO_DR,
    FiveLevelStage.S1_MILD: ClassLabel.MILD_DR,
    FiveLevelStage.S2_MODERATE: ClassLabel.MILD_DR,
    FiveLevelStage.S3_SEVERE: ClassLabel.SEVERE_DR,
    FiveLevelStage.S4_PROLIFERATIVE: ClassLabel.SEVERE_DR,
}


@dataclass(frozen=True)
class Component:
    """One connected lesion region."""

    pixels: np.ndarray  # (n, 2) array of (y, x) coordinates
    area: int
    centroid: tuple[float, float]  # (x, y)
    quadrant: int | None = None

    def with_quadrant(self, q: int) -> "Component":
        return Component(self.pixels, self.area, self.centroid, q)


@dataclass(frozen=True)
class LesionMap:
    kind: LesionKind
    components: tuple[Component, ...]

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class SeverityStage:
    five_level: FiveLevelStage
    three_level: ClassLabel
    reason: str


def otsu_threshold(p: ProbMask) -> float:
    """Threshold in [0, 1] maximizing between-class variance over 256 bins.

    Probabilities quantize to bins ``min(floor(v * 256), 255)``; candidate
    thresholds are the bin edges k/256 so ``v >= k/256`` matches bin
    membership exactly. Among equal-variance maxima the lowest threshold
    wins.
    """
    vals = p.data.reshape(-1).astype(np.float64)
    if vals.min() == vals.max():
        raise ConstantMaskError(
            f"mask is constant at {vals[0]}, no threshold separates it"
        )
    bins = np.minimum((vals * OTSU_BINS).astype(np.int64), OTSU_BINS - 1)
    hist = np.bincount(bins, minlength=OTSU_BINS).astype(np.float64)
    total = hist.sum()

    levels = np.arange(OTSU_BINS, dtype=np.float64)
    cum_count = np.cumsum(hist)
    cum_mass = np.cumsum(hist * levels)
    grand_mass = cum_mass[-1]

    best_var = -1.0
    best_k = 0
    for k in range(OTSU_BINS):
        # class 0: bins < k, class 1: bins >= k
        n0 = cum_count[k - 1] if k > 0 else 0.0
        n1 = total - n0
        if n0 == 0.0 or n1 == 0.0:
            continue
        m0 = (cum_mass[k - 1] if k > 0 else 0.0) / n0
        m1 = (grand_mass - (cum_mass[k - 1] if k > 0 else 0.0)) / n1
        var = (n0 / total) * (n1 / total) * (m0 - m1) ** 2
        if var > best_var:
            best_var = var
            best_k = k
    return best_k / OTSU_BINS


def binarize(p: ProbMask, t: float) -> BinaryMask:
    """Pixel true iff probability >= t."""
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    return BinaryMask(p.data >= t)


_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def connected_components(
    m: BinaryMask, min_area: int = DEFAULT_MIN_AREA, kind: LesionKind = LesionKind.MA
) -> LesionMap:
    """8-connectivity labeling; regions below min_area are dropped."""
    labels, count = ndimage.label(m.data, structure=_EIGHT_CONNECTED)
    comps: list[Component] = []
    for idx in range(1, count + 1):
        ys, xs = np.nonzero(labels == idx)
        area = int(ys.size)
        if area < min_area:
            continue
        centroid = (float(xs.mean()), float(ys.mean()))
        comps.append(Component(np.column_stack([ys, xs]), area, centroid))
    return LesionMap(kind, tuple(comps))


def assign_quadrant(centroid: tuple[float, float], center: tuple[float, float]) -> int:
    """Quadrant 1..4 of a point relative to the fundus center.

    1 = upper-left, 2 = upper-right, 3 = lower-left, 4 = lower-right in
    image coordinates (y grows downward). Centroids exactly on a dividing
    line take the lower-numbered side.
    """
    dx = centroid[0] - center[0]
    dy = centroid[1] - center[1]
    return 1 + (1 if dx > 0 else 0) + (2 if dy > 0 else 0)


def quadrant_counts(
    lesion_map: LesionMap, dims: tuple[int, int], center: tuple[float, float]
) -> tuple[LesionMap, dict[int, int]]:
    """Assign each component a quadrant and tally counts per quadrant."""
    width, height = dims
    if not (0 <= center[0] < width and 0 <= center[1] < height):
        raise ValueError(f"center {center} outside image {width}x{height}")
    counts = {1: 0, 2: 0, 3: 0, 4: 0}
    assigned = []
    for comp in lesion_map.components:
        q = assign_quadrant(comp.centroid, center)
        counts[q] += 1
        assigned.append(comp.with_quadrant(q))
    return LesionMap(lesion_map.kind, tuple(assigned)), counts


def collapse(stage5: FiveLevelStage) -> ClassLabel:
    return COLLAPSE[stage5]


def stage(
    lesions: dict[LesionKind, LesionMap],
    dims: tuple[int, int],
    center: tuple[float, float],
) -> SeverityStage:
    """Map lesion maps to the five-level scale (and its 3-class collapse).

    Rules, from most to least specific:
      - no components of any kind: stage 0.
      - microaneurysms only: stage 1.
      - more than 20 hemorrhages in each of the 4 quadrants: stage 3.
      - anything else beyond microaneurysms: stage 2.
    """
    missing = [k for k in LesionKind if k not in lesions]
    if missing:
        raise ValueError(f"lesion map missing kinds: {[k.value for k in missing]}")

    counts = {k: len(lesions[k]) for k in LesionKind}
    if all(c == 0 for c in counts.values()):
        five = FiveLevelStage.S0_NONE
        reason = "no lesions detected"
    elif counts[LesionKind.MA] > 0 and all(
        counts[k] == 0 for k in (LesionKind.HEM, LesionKind.SE, LesionKind.HE)
    ):
        five = FiveLevelStage.S1_MILD
        reason = "microaneurysms only"
    else:
        _, hem_quadrants = quadrant_counts(lesions[LesionKind.HEM], dims, center)
        if all(hem_quadrants[q] > SEVERE_HEM_PER_QUADRANT for q in (1, 2, 3, 4)):
            five = FiveLevelStage.S3_SEVERE
            reason = (
                f"more than {SEVERE_HEM_PER_QUADRANT} hemorrhages in each of the "
                f"4 quadrants ({hem_quadrants[1]}/{hem_quadrants[2]}/"
                f"{hem_quadrants[3]}/{hem_quadrants[4]})"
            )
        else:
            five = FiveLevelStage.S2_MODERATE
            reason = "lesions beyond microaneurysms, below the severe threshold"
    return SeverityStage(five, collapse(five), reason)
