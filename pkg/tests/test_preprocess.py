import math

import numpy as np
import pytest

from drgrade.imgio import BinaryMask, RgbImage
from drgrade.preprocess import (
    ColorStats,
    ConstantChannelError,
    GaussianParams,
    clahe_rgb,
    color_normalize,
    convolve2d,
    dilate_mask,
    fundus_mask,
    gaussian_filter,
    gaussian_kernel,
    preprocess_image,
    remove_region,
    remove_vessels,
)


def conv_oracle(plane, kernel):
    """Literal double loop over output pixels and kernel taps, edge clamped."""
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


def full_true_mask(img):
    return BinaryMask(np.ones((img.height, img.width), dtype=bool))


# -- CLAHE -------------------------------------------------------------------

def test_clahe_constant_image_stays_constant():
    img = RgbImage(np.full((64, 64, 3), 128, dtype=np.uint8))
    out = clahe_rgb(img)
    for c in range(3):
        chan = out.data[:, :, c].astype(int)
        assert chan.max() - chan.min() <= 1


def test_clahe_expands_low_contrast_range():
    ramp = np.linspace(100, 140, 64).astype(np.uint8)
    img = RgbImage(np.repeat(np.tile(ramp, (64, 1))[:, :, None], 3, axis=2))
    out = clahe_rgb(img)
    in_range = int(img.data.max()) - int(img.data.min())
    out_range = int(out.data.max()) - int(out.data.min())
    assert out_range / in_range > 1.0


def test_clahe_deterministic():
    rng = np.random.default_rng(5)
    data = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
    a = clahe_rgb(RgbImage(data))
    b = clahe_rgb(RgbImage(data.copy()))
    assert a == b


def test_clahe_rejects_oversized_grid():
    img = RgbImage(np.zeros((4, 4, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        clahe_rgb(img, tile_grid=8)


# -- color normalization ------------------------------------------------------

def test_color_normalize_fixed_point():
    rng = np.random.default_rng(2)
    data = rng.integers(40, 200, size=(32, 32, 3), dtype=np.uint8)
    img = RgbImage(data)
    mask = full_true_mask(img)
    ref = ColorStats.from_image(img, mask)
    out = color_normalize(img, ref, mask)
    assert np.abs(out.data.astype(int) - img.data.astype(int)).max() <= 1


def test_color_normalize_constant_channel_error():
    data = np.zeros((8, 8, 3), dtype=np.uint8)
    data[:, :, 0] = 90  # constant red channel
    data[:, :, 1] = np.arange(64, dtype=np.uint8).reshape(8, 8)
    data[:, :, 2] = np.arange(64, dtype=np.uint8).reshape(8, 8)
    img = RgbImage(data)
    ref = ColorStats(mean=(100, 100, 100), std=(10, 10, 10))
    with pytest.raises(ConstantChannelError):
        color_normalize(img, ref, full_true_mask(img))


def test_color_normalize_moves_mean_to_reference():
    rng = np.random.default_rng(9)
    data = rng.normal(50, 12, size=(64, 64, 3)).clip(0, 255).astype(np.uint8)
    img = RgbImage(data)
    mask = full_true_mask(img)
    ref = ColorStats(mean=(120.0, 120.0, 120.0), std=(12.0, 12.0, 12.0))
    out = color_normalize(img, ref, mask)
    r_mean = out.data[:, :, 0].mean()
    assert 119.0 <= r_mean <= 121.0


def test_color_normalize_leaves_background_alone():
    data = np.full((16, 16, 3), 4, dtype=np.uint8)
    data[4:12, 4:12] = [80, 120, 60]
    data[5, 5] = [90, 100, 70]  # variance inside the fundus
    img = RgbImage(data)
    sel = np.zeros((16, 16), dtype=bool)
    sel[4:12, 4:12] = True
    out = color_normalize(img, ColorStats((128, 128, 128), (10, 10, 10)), BinaryMask(sel))
    assert np.array_equal(out.data[~sel], img.data[~sel])


# -- Gaussian kernel ----------------------------------------------------------

def test_kernel_symmetry_and_peak():
    k = gaussian_kernel(GaussianParams(1.0, 1.0, 0.0, 0.0, 1, 1))
    assert k.shape == (3, 3)
    assert k[1, 1] == k.max()
    assert np.allclose(k, k[::-1, :]) and np.allclose(k, k[:, ::-1])


def test_kernel_sums_to_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        params = GaussianParams(
            sigma_x=float(rng.uniform(0.2, 5)),
            sigma_y=float(rng.uniform(0.2, 5)),
            mu_x=float(rng.uniform(-2, 2)),
            mu_y=float(rng.uniform(-2, 2)),
            radius_a=int(rng.integers(0, 6)),
            radius_b=int(rng.integers(0, 6)),
        )
        assert abs(gaussian_kernel(params).sum() - 1.0) <= 1e-9


def test_kernel_center_corner_ratio():
    k = gaussian_kernel(GaussianParams(1.0, 1.0, 0.0, 0.0, 3, 3))
    # unnormalized center/corner = exp(0) / exp(-9); normalization cancels
    assert abs(k[3, 3] / k[0, 0] - math.exp(9.0)) <= 1e-6


def test_kernel_rejects_bad_sigma():
    with pytest.raises(ValueError):
        GaussianParams(sigma_x=0.0)


def test_kernel_anisotropy_orientation():
    # wider sigma_x spreads mass along axis 0 (the x-offset axis)
    k = gaussian_kernel(GaussianParams(sigma_x=3.0, sigma_y=0.5, radius_a=3, radius_b=3))
    assert k[0, 3] > k[3, 0]  # far x-offset beats far y-offset


# -- convolution --------------------------------------------------------------

def test_convolve_identity_kernel_exact():
    rng = np.random.default_rng(1)
    plane = rng.random((12, 11))
    ident = np.zeros((3, 3))
    ident[1, 1] = 1.0
    assert np.array_equal(convolve2d(plane, ident), plane)


def test_convolve_impulse_reproduces_kernel():
    rng = np.random.default_rng(4)
    kernel = rng.random((5, 3))
    plane = np.zeros((15, 15))
    plane[7, 7] = 1.0
    got = convolve2d(plane, kernel)
    want = conv_oracle(plane, kernel)
    assert np.abs(got - want).max() <= 1e-12
    # interior response carries every kernel value (point-reflected copy)
    a, b = 2, 1
    for i in range(-a, a + 1):
        for j in range(-b, b + 1):
            assert abs(got[7 - j, 7 - i] - kernel[i + a, j + b]) <= 1e-12


def test_convolve_constant_mass_conservation():
    kernel = gaussian_kernel(GaussianParams(1.5, 0.8, 0.0, 0.0, 2, 3))
    plane = np.full((9, 9), 42.0)
    out = convolve2d(plane, kernel)
    assert np.abs(out - 42.0).max() <= 1e-9


def test_convolve_matches_double_loop_oracle():
    rng = np.random.default_rng(6)
    for _ in range(5):
        plane = rng.random((10, 9)) * 255
        kernel = rng.standard_normal((3, 5))
        got = convolve2d(plane, kernel)
        want = conv_oracle(plane, kernel)
        assert np.abs(got - want).max() <= 1e-12


def test_convolve_linearity():
    rng = np.random.default_rng(8)
    f = rng.random((16, 16))
    g = rng.random((16, 16))
    kernel = rng.standard_normal((5, 5))
    lhs = convolve2d(2.5 * f + 0.75 * g, kernel)
    rhs = 2.5 * convolve2d(f, kernel) + 0.75 * convolve2d(g, kernel)
    assert np.abs(lhs - rhs).max() <= 1e-9


def test_convolve_rejects_even_kernel():
    with pytest.raises(ValueError):
        convolve2d(np.zeros((4, 4)), np.zeros((2, 3)))


# -- Gaussian filter ----------------------------------------------------------

def test_gaussian_filter_constant_unchanged():
    img = RgbImage(np.full((16, 16, 3), 77, dtype=np.uint8))
    out = gaussian_filter(img, GaussianParams())
    assert np.abs(out.data.astype(int) - 77).max() <= 1


def test_gaussian_filter_reduces_salt_and_pepper_noise():
    rng = np.random.default_rng(12)
    data = np.full((64, 64, 3), 128, dtype=np.uint8)
    noisy = rng.random((64, 64)) < 0.05
    data[noisy] = np.where(rng.random((int(noisy.sum()), 1)) < 0.5, 0, 255)
    img = RgbImage(data)
    out = gaussian_filter(img, GaussianParams())
    assert out.data.astype(float).std() < img.data.astype(float).std()


def test_gaussian_filter_large_sigma_collapses_checkerboard():
    yy, xx = np.mgrid[0:32, 0:32]
    board = np.where((yy + xx) % 2 == 0, 0, 255).astype(np.uint8)
    img = RgbImage(np.repeat(board[:, :, None], 3, axis=2))
    out = gaussian_filter(img, GaussianParams(sigma_x=8.0, sigma_y=8.0, radius_a=12, radius_b=12))
    in_range = int(img.data.max()) - int(img.data.min())
    out_range = int(out.data.max()) - int(out.data.min())
    assert out_range < in_range / 2
    # away from the replicated border the board sits at the global mean
    interior = out.data[13:19, 13:19, 0].astype(float)
    assert np.abs(interior - 127.5).max() <= 2.0


# -- region removal -----------------------------------------------------------

def dilate_oracle(mask, px):
    h, w = mask.shape
    out = set()
    for y, x in zip(*np.nonzero(mask)):
        for dy in range(-px, px + 1):
            for dx in range(-px, px + 1):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w:
                    out.add((yy, xx))
    return out


def test_remove_region_empty_mask_is_identity():
    rng = np.random.default_rng(3)
    img = RgbImage(rng.integers(0, 256, size=(10, 10, 3), dtype=np.uint8))
    out = remove_region(img, BinaryMask(np.zeros((10, 10), bool)), dilate_px=2)
    assert out == img


def test_remove_region_full_mask_blacks_out():
    img = RgbImage(np.full((6, 6, 3), 200, dtype=np.uint8))
    out = remove_region(img, BinaryMask(np.ones((6, 6), bool)))
    assert out.data.max() == 0


def test_remove_region_matches_dilation_oracle():
    mask = np.zeros((10, 10), bool)
    yy, xx = np.mgrid[0:10, 0:10]
    mask[(yy - 5) ** 2 + (xx - 4) ** 2 <= 4] = True
    img = RgbImage(np.full((10, 10, 3), 50, dtype=np.uint8))
    out = remove_region(img, BinaryMask(mask), dilate_px=2)
    zeroed = {(y, x) for y, x in zip(*np.nonzero((out.data == 0).all(axis=2)))}
    assert zeroed == dilate_oracle(mask, 2)


def test_dilate_mask_support_equality_random():
    rng = np.random.default_rng(14)
    for _ in range(10):
        mask = rng.random((12, 12)) < 0.12
        px = int(rng.integers(0, 3))
        got = dilate_mask(BinaryMask(mask), px).data
        want = dilate_oracle(mask, px)
        assert {(y, x) for y, x in zip(*np.nonzero(got))} == want


def test_remove_region_dimension_mismatch():
    img = RgbImage(np.zeros((4, 4, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        remove_region(img, BinaryMask(np.zeros((5, 4), bool)))


# -- vessel removal -----------------------------------------------------------

def test_remove_vessels_empty_mask_identity():
    rng = np.random.default_rng(21)
    img = RgbImage(rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8))
    out = remove_vessels(img, BinaryMask(np.zeros((8, 8), bool)), window=3)
    assert out == img


def test_remove_vessels_single_pixel_constant_field():
    data = np.full((9, 9, 3), 140, dtype=np.uint8)
    data[4, 4] = [0, 0, 0]
    mask = np.zeros((9, 9), bool)
    mask[4, 4] = True
    out = remove_vessels(RgbImage(data), BinaryMask(mask), window=3)
    assert out.data[4, 4].tolist() == [140, 140, 140]


def test_remove_vessels_line_matches_median_oracle():
    # horizontal gradient, vertical 1-px vessel through the middle
    grad = np.tile(np.arange(0, 250, 10, dtype=np.uint8), (25, 1))
    data = np.repeat(grad[:, :, None], 3, axis=2)
    mask = np.zeros((25, 25), bool)
    mask[:, 12] = True
    img = RgbImage(data)
    out = remove_vessels(img, BinaryMask(mask), window=5)

    h, w = mask.shape
    half = 2
    for y in range(h):
        vals = []
        for dy in range(-half, half + 1):
            for dx in range(-half, half + 1):
                yy, xx = y + dy, 12 + dx
                if 0 <= yy < h and 0 <= xx < w and not mask[yy, xx]:
                    vals.append(int(data[yy, xx, 0]))
        expect = int(np.rint(np.median(vals)))
        assert out.data[y, 12, 0] == expect
    assert np.array_equal(out.data[~mask], img.data[~mask])


def test_remove_vessels_window_growth_until_fill():
    # vessel blob so large the 3x3 window starts empty
    data = np.full((15, 15, 3), 60, dtype=np.uint8)
    mask = np.zeros((15, 15), bool)
    mask[3:12, 3:12] = True
    data[mask] = 255
    out = remove_vessels(RgbImage(data), BinaryMask(mask), window=3)
    assert out.data[7, 7].tolist() == [60, 60, 60]


def test_remove_vessels_all_masked_uses_whole_image_median():
    data = np.zeros((4, 4, 3), dtype=np.uint8)
    data[:, :, 0] = 10
    out = remove_vessels(RgbImage(data), BinaryMask(np.ones((4, 4), bool)), window=3)
    assert out.data[0, 0].tolist() == [10, 0, 0]


# -- fundus mask and pipeline ---------------------------------------------------

def test_fundus_mask_selects_bright_disc():
    data = np.zeros((32, 32, 3), dtype=np.uint8)
    yy, xx = np.mgrid[0:32, 0:32]
    inside = (yy - 16) ** 2 + (xx - 16) ** 2 <= 100
    data[inside] = [120, 60, 30]
    mask = fundus_mask(RgbImage(data))
    assert mask.data[16, 16]
    assert not mask.data[0, 0]
    # agreement except at the median-smoothed rim
    assert (mask.data == inside).mean() > 0.9


def test_pipeline_deterministic():
    rng = np.random.default_rng(33)
    data = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
    disc = np.zeros((40, 40), bool)
    disc[5:9, 5:9] = True
    vessels = np.zeros((40, 40), bool)
    vessels[:, 20] = True
    kwargs = dict(
        reference=ColorStats((110.0, 100.0, 90.0), (20.0, 20.0, 20.0)),
        gaussian=GaussianParams(),
        disc_mask=BinaryMask(disc),
        disc_dilate_px=1,
        vessel_mask=BinaryMask(vessels),
        vessel_window=5,
    )
    a = preprocess_image(RgbImage(data), **kwargs)
    b = preprocess_image(RgbImage(data.copy()), **kwargs)
    assert a == b
