"""Synthetic fixtures: fundus-like images, exact lesion masks, feature sets.

Everything is driven by one deterministic 64-bit generator (xorshift64*
seeded through splitmix64, constants below) so fixtures are reproducible
bit-for-bit across platforms and reimplementable in any language. Scene
geometry (fundus circle, disc, vessel tree) is procedural; randomness only
enters through placement and sizing draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import ClassLabel, FeatureDataset
from .imgio import BinaryMask, ProbMask, RgbImage
from .lesions import LesionKind

_MASK64 = (1 << 64) - 1


class SpecOverflowError(ValueError):
    """More lesions were requested than fit without overlap."""


class Xorshift64Star:
    """xorshift64* PRNG.

    State update: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27``; output is
    ``x * 0x2545F4914F6CDD1D`` (all mod 2^64). The seed is whitened with
    one splitmix64 step so seed 0 is legal.
    """

    def __init__(self, seed: int):
        z = (seed + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        self._state = z if z != 0 else 0x9E3779B97F4A7C15
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, n: int) -> int:
        """Integer in [0, n)."""
        return min(int(self.uniform() * n), n - 1)

    def normal(self) -> float:
        """Standard normal via Box-Muller, second value cached."""
        if self._spare_normal is not None:
            out = self._spare_normal
            self._spare_normal = None
            return out
        u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]


# ---------------------------------------------------------------------------
# Fundus scene generation
# ---------------------------------------------------------------------------

DEFAULT_RADIUS = {
    LesionKind.MA: (1.8, 2.4),  # floor keeps every raster blob at >= 5 px
    LesionKind.HEM: (2.5, 4.0),
    LesionKind.SE: (3.0, 5.0),
    LesionKind.HE: (2.5, 4.5),
}

LESION_COLOR = {
    LesionKind.MA: (150, 25, 20),
    LesionKind.HEM: (120, 20, 18),
    LesionKind.SE: (215, 215, 190),
    LesionKind.HE: (235, 220, 80),
}


@dataclass(frozen=True)
class LesionSpec:
    """Request for a batch of same-kind lesion blobs."""

    count: int
    radius: tuple[float, float] | None = None
    quadrant: int | None = None  # 1..4 or None for anywhere

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.quadrant is not None and self.quadrant not in (1, 2, 3, 4):
            raise ValueError(f"quadrant must be 1..4, got {self.quadrant}")


@dataclass
class FundusScene:
    image: RgbImage
    lesion_masks: dict[LesionKind, BinaryMask]
    disc_mask: BinaryMask
    vessel_mask: BinaryMask
    center: tuple[float, float]
    fundus_radius: float

    @property
    def fundus_mask(self) -> BinaryMask:
        """Exact fundus-circle support from the scene geometry."""
        h, w = self.image.height, self.image.width
        yy, xx = np.mgrid[0:h, 0:w]
        rr = np.sqrt((xx - self.center[0]) ** 2 + (yy - self.center[1]) ** 2)
        return BinaryMask(rr <= self.fundus_radius)


def _disk(h, w, cx, cy, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _paint_segment(canvas_mask, x0, y0, x1, y1, thickness):
    h, w = canvas_mask.shape
    length = max(abs(x1 - x0), abs(y1 - y0), 1.0)
    steps = int(length * 2) + 1
    for s in range(steps + 1):
        t = s / steps
        x = x0 + (x1 - x0) * t
        y = y0 + (y1 - y0) * t
        x_lo = max(0, int(x - thickness))
        x_hi = min(w, int(x + thickness) + 2)
        y_lo = max(0, int(y - thickness))
        y_hi = min(h, int(y + thickness) + 2)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        yy, xx = np.mgrid[y_lo:y_hi, x_lo:x_hi]
        canvas_mask[y_lo:y_hi, x_lo:x_hi] |= (xx - x) ** 2 + (yy - y) ** 2 <= thickness**2


def gen_fundus(
    seed: int,
    dims: tuple[int, int] = (256, 256),
    lesion_spec: dict[LesionKind, list[LesionSpec]] | None = None,
) -> FundusScene:
    """Render a fundus-like scene with exact ground-truth masks.

    Returns the image, one binary mask per lesion kind (empty where no
    lesions were requested), the optic-disc mask, and the vessel mask.
    """
    width, height = dims
    if width < 128 or height < 128:
        raise ValueError(f"dims must be at least 128x128, got {dims}")
    rng = Xorshift64Star(seed)
    lesion_spec = lesion_spec or {}

    h, w = height, width
    cx, cy = w / 2.0, h / 2.0
    radius = 0.46 * min(w, h)

    yy, xx = np.mgrid[0:h, 0:w]
    rr = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    fundus = rr <= radius

    img = np.zeros((h, w, 3), dtype=np.float64)
    shade = 1.0 - 0.35 * np.clip(rr / radius, 0, 1) ** 2
    base = np.array([172.0, 84.0, 42.0])
    img[fundus] = shade[fundus, None] * base[None, :]

    # Optic disc: bright ellipse right of center.
    disc_cx = cx + 0.52 * radius
    disc_cy = cy + rng.uniform_in(-0.08, 0.08) * radius
    disc_rx = 0.15 * radius
    disc_ry = 0.12 * radius
    disc = ((xx - disc_cx) / disc_rx) ** 2 + ((yy - disc_cy) / disc_ry) ** 2 <= 1.0
    disc &= fundus
    img[disc] = [231.0, 203.0, 152.0]

    # Vessel tree: random-walk branches leaving the disc.
    vessels = np.zeros((h, w), dtype=bool)
    n_branches = 5 + rng.randint(3)
    for _ in range(n_branches):
        angle = rng.uniform_in(0.0, 2.0 * math.pi)
        x, y = disc_cx, disc_cy
        thickness = rng.uniform_in(1.0, 1.8)
        for _ in range(14):
            step = rng.uniform_in(10.0, 22.0)
            angle += rng.uniform_in(-0.55, 0.55)
            nx = x + step * math.cos(angle)
            ny = y + step * math.sin(angle)
            if (nx - cx) ** 2 + (ny - cy) ** 2 > (radius * 0.94) ** 2:
                break
            _paint_segment(vessels, x, y, nx, ny, thickness)
            x, y = nx, ny
            thickness = max(0.8, thickness * 0.96)
    vessels &= fundus
    vessels &= ~disc
    img[vessels] = [110.0, 30.0, 25.0]

    # Lesions: rejection-placed disjoint blobs, exact masks by construction.
    occupied = disc | vessels
    lesion_masks = {kind: np.zeros((h, w), dtype=bool) for kind in LesionKind}
    for kind in LesionKind:
        for spec in lesion_spec.get(kind, []):
            r_lo, r_hi = spec.radius if spec.radius else DEFAULT_RADIUS[kind]
            for _ in range(spec.count):
                placed = False
                for _attempt in range(400):
                    r = rng.uniform_in(r_lo, r_hi)
                    bx, by = _sample_position(rng, cx, cy, radius - r - 4.0, spec.quadrant, r)
                    blob = _disk(h, w, bx, by, r)
                    y0 = max(0, int(by - r) - 2)
                    y1 = min(h, int(by + r) + 3)
                    x0 = max(0, int(bx - r) - 2)
                    x1 = min(w, int(bx + r) + 3)
                    if occupied[y0:y1, x0:x1][blob[y0:y1, x0:x1]].any():
                        continue
                    grown = np.zeros_like(blob)
                    gy0, gy1 = max(0, y0 - 2), min(h, y1 + 2)
                    gx0, gx1 = max(0, x0 - 2), min(w, x1 + 2)
                    gyy, gxx = np.mgrid[gy0:gy1, gx0:gx1]
                    grown[gy0:gy1, gx0:gx1] = (gxx - bx) ** 2 + (gyy - by) ** 2 <= (r + 2.0) ** 2
                    lesion_masks[kind][blob] = True
                    occupied |= grown
                    img[blob] = np.array(LESION_COLOR[kind], dtype=np.float64)
                    placed = True
                    break
                if not placed:
                    raise SpecOverflowError(
                        f"could not place {spec.count} {kind.value} lesions "
                        f"(quadrant={spec.quadrant}) without overlap"
                    )

    image = RgbImage(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return FundusScene(
        image=image,
        lesion_masks={k: BinaryMask(v) for k, v in lesion_masks.items()},
        disc_mask=BinaryMask(disc),
        vessel_mask=BinaryMask(vessels),
        center=(cx, cy),
        fundus_radius=radius,
    )


def _sample_position(rng, cx, cy, max_r, quadrant, blob_r):
    """Uniform point inside the fundus circle, optionally quadrant-locked."""
    margin = blob_r + 3.0  # keep the whole blob strictly inside one quadrant
    for _ in range(1000):
        x = cx + rng.uniform_in(-max_r, max_r)
        y = cy + rng.uniform_in(-max_r, max_r)
        if (x - cx) ** 2 + (y - cy) ** 2 > max_r * max_r:
            continue
        if quadrant is None:
            return x, y
        dx, dy = x - cx, y - cy
        ok_x = dx > margin if quadrant in (2, 4) else dx < -margin
        ok_y = dy > margin if quadrant in (3, 4) else dy < -margin
        if ok_x and ok_y:
            return x, y
    raise SpecOverflowError(f"no room left in quadrant {quadrant}")


def mask_to_probmask(mask: BinaryMask, hi: float = 0.95, lo: float = 0.02) -> ProbMask:
    """Turn an exact mask into a plausible probability map (hi inside, lo outside)."""
    data = np.where(mask.data, np.float32(hi), np.float32(lo))
    return ProbMask(data)


def apply_channel_jitter(
    img: RgbImage,
    rng: Xorshift64Star,
    gain_range: tuple[float, float] = (0.6, 1.4),
    offset_range: tuple[float, float] = (-40.0, 40.0),
) -> RgbImage:
    """Per-channel random gain and offset, the nuisance the normalizer undoes."""
    out = img.data.astype(np.float64)
    for c in range(3):
        gain = rng.uniform_in(*gain_range)
        offset = rng.uniform_in(*offset_range)
        out[:, :, c] = out[:, :, c] * gain + offset
    return RgbImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# Feature-space fixtures
# ---------------------------------------------------------------------------

def gen_features(
    seed: int, n_per_class: int, d: int, class_separation: float
) -> FeatureDataset:
    """Three unit-variance Gaussian clusters at mutual distance separation * sigma.

    Cluster centers form an equilateral triangle inside a random 2-D
    subspace of R^d; every ambient dimension carries unit noise.
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    rng = Xorshift64Star(seed)

    # Random orthonormal 2-D basis via Gram-Schmidt on normal draws.
    u = np.array([rng.normal() for _ in range(d)])
    u /= np.linalg.norm(u)
    v = np.array([rng.normal() for _ in range(d)])
    v -= u * (u @ v)
    v /= np.linalg.norm(v)

    s = class_separation
    centers_2d = [(0.0, 0.0), (s, 0.0), (s / 2.0, s * math.sqrt(3.0) / 2.0)]
    centers = [c0 * u + c1 * v for c0, c1 in centers_2d]

    rows = []
    labels = []
    for cls in (ClassLabel.NO_DR, ClassLabel.MILD_DR, ClassLabel.SEVERE_DR):
        for _ in range(n_per_class):
            noise = np.array([rng.normal() for _ in range(d)])
            rows.append(centers[int(cls)] + noise)
            labels.append(int(cls))

    order = list(range(len(rows)))
    rng.shuffle(order)
    feats = np.array([rows[i] for i in order])
    labs = np.array([labels[i] for i in order])
    ids = [f"syn-{i:05d}" for i in range(len(order))]
    return FeatureDataset(feats, labs, ids)
