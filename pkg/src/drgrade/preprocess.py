"""Fundus preprocessing chain.

Steps, in pipeline order: contrast-limited adaptive histogram equalization
per RGB channel, color normalization against reference channel statistics,
Gaussian low-pass filtering, optic-disc blanking, and blood-vessel removal
by median inpainting.

Convolution convention used throughout: for a kernel half-width ``a`` (x)
and half-height ``b`` (y), the kernel matrix is shaped ``(2a+1, 2b+1)`` and
``kernel[i + a, j + b]`` weights the sample at column ``x + i``, row
``y + j``. No kernel flip is applied (correlation orientation); borders are
handled by edge replication.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from .imgio import BinaryMask, RgbImage

FUNDUS_INTENSITY_FLOOR = 10
FUNDUS_MEDIAN_SIZE = 5


class ConstantChannelError(ValueError):
    """A channel has zero variance, so it cannot be variance-matched."""


@dataclass(frozen=True)
class GaussianParams:
    """Separable anisotropic Gaussian kernel description."""

    sigma_x: float = 1.0
    sigma_y: float = 1.0
    mu_x: float = 0.0
    mu_y: float = 0.0
    radius_a: int = 3
    radius_b: int = 3

    def __post_init__(self):
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValueError(f"sigma must be positive, got ({self.sigma_x}, {self.sigma_y})")
        if self.radius_a < 0 or self.radius_b < 0:
            raise ValueError(f"radii must be >= 0, got ({self.radius_a}, {self.radius_b})")


@dataclass(frozen=True)
class ColorStats:
    """Per-channel mean and standard deviation (R, G, B order)."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def __post_init__(self):
        if any(s < 0 for s in self.std):
            raise ValueError(f"std must be >= 0, got {self.std}")
        if any(not (0.0 <= m <= 255.0) for m in self.mean):
            raise ValueError(f"mean must lie in [0, 255], got {self.mean}")

    @classmethod
    def from_image(cls, img: RgbImage, fundus: BinaryMask) -> "ColorStats":
        """Population statistics over pixels inside the fundus mask."""
        _check_mask_dims(img, fundus)
        sel = img.data[fundus.data].astype(np.float64)
        if sel.size == 0:
            raise ValueError("fundus mask selects no pixels")
        return cls(mean=tuple(sel.mean(axis=0)), std=tuple(sel.std(axis=0)))


def _check_mask_dims(img: RgbImage, mask: BinaryMask) -> None:
    if (mask.height, mask.width) != (img.height, img.width):
        raise ValueError(
            f"mask dimensions {mask.width}x{mask.height} do not match "
            f"image {img.width}x{img.height}"
        )


def clahe_rgb(img: RgbImage, clip_limit: float = 2.0, tile_grid: int = 8) -> RgbImage:
    """Contrast-limited adaptive equalization applied to each RGB channel."""
    if clip_limit <= 0:
        raise ValueError(f"clip_limit must be positive, got {clip_limit}")
    if tile_grid < 1:
        raise ValueError(f"tile_grid must be >= 1, got {tile_grid}")
    if tile_grid > min(img.width, img.height):
        raise ValueError(
            f"tile_grid {tile_grid} exceeds smallest image dimension "
            f"{min(img.width, img.height)}"
        )
    op = cv2.createCLAHE(clipLimit=float(clip_limit), tileGridSize=(tile_grid, tile_grid))
    out = np.empty_like(img.data)
    for c in range(3):
        out[:, :, c] = op.apply(np.ascontiguousarray(img.data[:, :, c]))
    return RgbImage(out)


def fundus_mask(img: RgbImage) -> BinaryMask:
    """Fundus-circle support: max-channel intensity above a floor after a 5x5 median."""
    maxchan = img.data.max(axis=2)
    smooth = ndimage.median_filter(maxchan, size=FUNDUS_MEDIAN_SIZE, mode="nearest")
    return BinaryMask(smooth > FUNDUS_INTENSITY_FLOOR)


def color_normalize(img: RgbImage, reference: ColorStats, fundus: BinaryMask) -> RgbImage:
    """Match per-channel mean/std inside the fundus mask to the reference stats.

    Pixels outside the mask (camera background) are left untouched.
    """
    _check_mask_dims(img, fundus)
    if any(s <= 0 for s in reference.std):
        raise ValueError(f"reference std must be positive, got {reference.std}")
    sel = fundus.data
    if not sel.any():
        raise ValueError("fundus mask selects no pixels")
    out = img.data.astype(np.float64)
    for c in range(3):
        vals = out[:, :, c][sel]
        mean = vals.mean()
        std = vals.std()
        if std == 0.0:
            raise ConstantChannelError(
                f"channel {'RGB'[c]} is constant inside the fundus mask"
            )
        chan = out[:, :, c]
        chan[sel] = (vals - mean) / std * reference.std[c] + reference.mean[c]
    return RgbImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def gaussian_kernel(params: GaussianParams) -> np.ndarray:
    """Normalized Gaussian taps on the grid i in [-a, a], j in [-b, b].

    Entry ``[i + a, j + b]`` is proportional to
    ``exp(-((i - mu_x)^2 / (2 sigma_x^2) + (j - mu_y)^2 / (2 sigma_y^2)))``
    and the matrix sums to 1.
    """
    i = np.arange(-params.radius_a, params.radius_a + 1, dtype=np.float64)
    j = np.arange(-params.radius_b, params.radius_b + 1, dtype=np.float64)
    qx = (i - params.mu_x) ** 2 / (2.0 * params.sigma_x**2)
    qy = (j - params.mu_y) ** 2 / (2.0 * params.sigma_y**2)
    kernel = np.exp(-(qx[:, None] + qy[None, :]))
    return kernel / kernel.sum()


def convolve2d(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Sliding weighted sum with edge-replicated borders, correlation orientation.

    ``out[y, x] = sum_{i,j} plane[y + j, x + i] * kernel[i + a, j + b]``.
    Output shape equals input shape.
    """
    plane = np.asarray(plane, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if plane.ndim != 2 or kernel.ndim != 2:
        raise ValueError("plane and kernel must be 2-D")
    if kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(f"kernel dimensions must be odd, got {kernel.shape}")
    a = kernel.shape[0] // 2
    b = kernel.shape[1] // 2
    h, w = plane.shape
    padded = np.pad(plane, ((b, b), (a, a)), mode="edge")
    out = np.zeros_like(plane)
    for ii in range(kernel.shape[0]):
        for jj in range(kernel.shape[1]):
            weight = kernel[ii, jj]
            if weight == 0.0:
                continue
            out += weight * padded[jj : jj + h, ii : ii + w]
    return out


def gaussian_filter(img: RgbImage, params: GaussianParams) -> RgbImage:
    """Low-pass each channel with the normalized Gaussian kernel."""
    kernel = gaussian_kernel(params)
    out = np.empty_like(img.data)
    for c in range(3):
        blurred = convolve2d(img.data[:, :, c].astype(np.float64), kernel)
        out[:, :, c] = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)
    return RgbImage(out)


def dilate_mask(mask: BinaryMask, px: int) -> BinaryMask:
    """Morphological dilation by a (2*px+1) square structuring element."""
    if px < 0:
        raise ValueError(f"dilation radius must be >= 0, got {px}")
    if px == 0 or not mask.data.any():
        return mask
    grown = ndimage.binary_dilation(mask.data, structure=np.ones((3, 3), bool), iterations=px)
    return BinaryMask(grown)


def remove_region(img: RgbImage, region: BinaryMask, dilate_px: int = 0) -> RgbImage:
    """Blank (zero) all channels inside the dilated region mask."""
    _check_mask_dims(img, region)
    grown = dilate_mask(region, dilate_px)
    out = img.data.copy()
    out[grown.data] = 0
    return RgbImage(out)


def remove_vessels(img: RgbImage, vessels: BinaryMask, window: int = 9) -> RgbImage:
    """Replace vessel pixels with the median of nearby non-vessel pixels.

    Each vessel pixel takes the per-channel median of non-vessel pixels
    inside a window x window neighborhood of the original image. If the
    neighborhood holds no non-vessel pixel, the half-width doubles until one
    is found; once the window spans the whole image the global non-vessel
    channel median is used (or the whole-image median if everything is
    masked).
    """
    _check_mask_dims(img, vessels)
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    src = img.data
    keep = ~vessels.data
    out = src.copy()
    ys, xs = np.nonzero(vessels.data)
    if ys.size == 0:
        return RgbImage(out)

    h, w = keep.shape
    if keep.any():
        global_fill = np.median(src[keep].astype(np.float64), axis=0)
    else:
        global_fill = np.median(src.reshape(-1, 3).astype(np.float64), axis=0)

    base_half = window // 2
    for y, x in zip(ys.tolist(), xs.tolist()):
        half = base_half
        fill = None
        while True:
            y0, y1 = max(0, y - half), min(h, y + half + 1)
            x0, x1 = max(0, x - half), min(w, x + half + 1)
            local_keep = keep[y0:y1, x0:x1]
            if local_keep.any():
                fill = np.median(src[y0:y1, x0:x1][local_keep].astype(np.float64), axis=0)
                break
            if y0 == 0 and x0 == 0 and y1 == h and x1 == w:
                fill = global_fill
                break
            half *= 2
        out[y, x] = np.clip(np.rint(fill), 0, 255).astype(np.uint8)
    return RgbImage(out)


def preprocess_image(
    img: RgbImage,
    *,
    clip_limit: float = 2.0,
    tile_grid: int = 8,
    reference: ColorStats | None = None,
    gaussian: GaussianParams | None = None,
    disc_mask: BinaryMask | None = None,
    disc_dilate_px: int = 0,
    vessel_mask: BinaryMask | None = None,
    vessel_window: int = 9,
) -> RgbImage:
    """Run the full chain: equalize, normalize, filter, blank disc, inpaint vessels.

    The fundus mask for normalization statistics is derived from the raw
    input image, before contrast amplification can lift the background.
    """
    fundus = fundus_mask(img) if reference is not None else None
    out = clahe_rgb(img, clip_limit, tile_grid)
    if reference is not None:
        out = color_normalize(out, reference, fundus)
    out = gaussian_filter(out, gaussian if gaussian is not None else GaussianParams())
    if disc_mask is not None:
        out = remove_region(out, disc_mask, disc_dilate_px)
    if vessel_mask is not None:
        out = remove_vessels(out, vessel_mask, vessel_window)
    return out
