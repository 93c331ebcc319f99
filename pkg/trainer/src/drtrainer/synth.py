"""Synthetic training data for the toy networks.

Classification task: three classes separable by blob color statistics
(reddish dots, whitish patches, yellow clumps on a dark textured ground).
Segmentation task: bright elliptical blobs on a noisy dark field, mask =
exact blob support.
"""

from __future__ import annotations

import numpy as np


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = np.array([70.0, 35.0, 20.0])
    img = np.tile(base, (size, size, 1))
    img += rng.normal(0.0, 6.0, size=(size, size, 3))
    ramp = np.linspace(-10, 10, size)[:, None, None]
    return img + ramp


CLASS_BLOBS = {
    0: {"color": (150.0, 40.0, 30.0), "count": (2, 4), "radius": (2.0, 4.0)},
    1: {"color": (220.0, 215.0, 200.0), "count": (4, 7), "radius": (3.0, 5.0)},
    2: {"color": (235.0, 210.0, 60.0), "count": (7, 11), "radius": (3.0, 6.0)},
}


def make_classification_set(
    seed: int, n_per_class: int, size: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Images (n, size, size, 3) uint8 and labels (n,) for the 3-class task."""
    rng = np.random.default_rng(seed)
    images = []
    labels = []
    yy, xx = np.mgrid[0:size, 0:size]
    for cls, spec in CLASS_BLOBS.items():
        for _ in range(n_per_class):
            img = _background(rng, size)
            count = int(rng.integers(*spec["count"]))
            for _b in range(count):
                r = rng.uniform(*spec["radius"])
                cx = rng.uniform(r + 2, size - r - 2)
                cy = rng.uniform(r + 2, size - r - 2)
                blob = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
                img[blob] = spec["color"]
            images.append(np.clip(img, 0, 255).astype(np.uint8))
            labels.append(cls)
    order = rng.permutation(len(images))
    return np.stack(images)[order], np.array(labels)[order]


def make_segmentation_set(
    seed: int, n: int, size: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Images (n, size, size, 3) uint8 and boolean masks (n, size, size)."""
    rng = np.random.default_rng(seed)
    images = []
    masks = []
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(n):
        img = _background(rng, size)
        mask = np.zeros((size, size), dtype=bool)
        for _b in range(int(rng.integers(2, 5))):
            rx = rng.uniform(4.0, 9.0)
            ry = rng.uniform(4.0, 9.0)
            cx = rng.uniform(rx + 2, size - rx - 2)
            cy = rng.uniform(ry + 2, size - ry - 2)
            blob = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
            mask |= blob
            img[blob] = (235.0, 225.0, 205.0)
        img += rng.normal(0.0, 3.0, size=img.shape)
        images.append(np.clip(img, 0, 255).astype(np.uint8))
        masks.append(mask)
    return np.stack(images), np.stack(masks)
