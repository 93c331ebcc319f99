"""Raster image and mask types plus file I/O.

Formats handled here:
  - RGB rasters: PNG (interchange) and binary PPM, i.e. P6 (fixture-friendly).
  - Binary masks: 8-bit grayscale PNG, 0 = background, 255 = foreground.
  - Probability masks: PFMAP, a little-endian binary format of ours:
        magic "PFM1" | width u32le | height u32le | reserved u32le (zero) |
        width*height float32le, row-major, top-left origin.

All types are immutable after construction (backing arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

PFMAP_MAGIC = b"PFM1"

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_PPM_MAGIC = b"P6"


class MalformedImageError(ValueError):
    """File is not a recognized raster or its header is invalid."""


class TruncatedImageError(ValueError):
    """Header parsed but the pixel payload is incomplete or undecodable."""


class MaskValueError(ValueError):
    """A mask file holds a value outside its legal range."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB raster, data shaped (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"RGB data must be (h, w, 3), got {self.data.shape}")
        if self.data.dtype != np.uint8:
            raise ValueError(f"RGB data must be uint8, got {self.data.dtype}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        object.__setattr__(self, "data", _freeze(self.data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, RgbImage) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single-channel raster, data shaped (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"gray data must be 2-D, got shape {self.data.shape}")
        if self.data.dtype != np.uint8:
            raise ValueError(f"gray data must be uint8, got {self.data.dtype}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        object.__setattr__(self, "data", _freeze(self.data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class ProbMask:
    """Per-pixel probability in [0, 1], shaped (height, width).

    Held as float64 in memory so arithmetic identities (e.g. exact
    complements) survive; the PFMAP file format quantizes to float32.
    """

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"probability data must be 2-D, got {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("mask dimensions must be positive")
        data = np.asarray(self.data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            idx = int(np.flatnonzero(~np.isfinite(data))[0])
            raise MaskValueError(f"non-finite probability at index {idx}")
        if data.min() < 0.0 or data.max() > 1.0:
            bad = (data < 0.0) | (data > 1.0)
            idx = int(np.flatnonzero(bad)[0])
            raise MaskValueError(
                f"probability {data.reshape(-1)[idx]} out of [0, 1] at index {idx}"
            )
        object.__setattr__(self, "data", _freeze(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, ProbMask) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean mask shaped (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"mask data must be 2-D, got {self.data.shape}")
        if self.data.dtype != np.bool_:
            raise ValueError(f"mask data must be bool, got {self.data.dtype}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("mask dimensions must be positive")
        object.__setattr__(self, "data", _freeze(self.data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.data, other.data)


# ---------------------------------------------------------------------------
# RGB raster I/O (PNG + PPM P6)
# ---------------------------------------------------------------------------

def load_rgb(path) -> RgbImage:
    """Load an RGB raster from PNG or binary PPM, byte-exact, no color transform."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(_PNG_MAGIC):
        return _load_png_rgb(path)
    if head.startswith(_PPM_MAGIC):
        return _load_ppm(path)
    raise MalformedImageError(f"{path}: not a PNG or binary PPM (P6) file")


def save_rgb(img: RgbImage, path) -> None:
    """Write a PNG or PPM (chosen by extension, .ppm -> P6, otherwise PNG)."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + img.data.tobytes())
    else:
        Image.fromarray(img.data, mode="RGB").save(path, format="PNG")


def _load_png_rgb(path: Path) -> RgbImage:
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise MalformedImageError(
                    f"{path}: PNG mode {im.mode!r} unsupported, expected RGB"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise MalformedImageError(f"{path}: undecodable PNG header") from exc
    except (OSError, SyntaxError) as exc:
        raise TruncatedImageError(f"{path}: truncated or corrupt PNG data") from exc
    return RgbImage(arr)


def _load_ppm(path: Path) -> RgbImage:
    raw = path.read_bytes()
    # Header: "P6" <ws> width <ws> height <ws> maxval <single ws>, '#' comments allowed.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedImageError(f"{path}: incomplete PPM header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise MalformedImageError(f"{path}: non-numeric PPM header field") from None
    if width <= 0 or height <= 0:
        raise MalformedImageError(f"{path}: non-positive PPM dimensions")
    if maxval != 255:
        raise MalformedImageError(f"{path}: PPM maxval {maxval} unsupported, need 255")
    payload = raw[pos : pos + width * height * 3]
    if len(payload) < width * height * 3:
        raise TruncatedImageError(
            f"{path}: PPM payload holds {len(payload)} bytes, needs {width * height * 3}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return RgbImage(arr.copy())


# ---------------------------------------------------------------------------
# Binary mask I/O (8-bit PNG, 0/255)
# ---------------------------------------------------------------------------

def load_mask(path) -> BinaryMask:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such mask file: {path}")
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise MalformedImageError(
                    f"{path}: mask PNG mode {im.mode!r} unsupported, expected 8-bit gray"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise MalformedImageError(f"{path}: undecodable mask file") from exc
    except (OSError, SyntaxError) as exc:
        raise TruncatedImageError(f"{path}: truncated or corrupt mask data") from exc
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise MaskValueError(f"{path}: mask value {arr.reshape(-1)[idx]} at index {idx}, expected 0 or 255")
    return BinaryMask(arr == 255)


def save_mask(mask: BinaryMask, path) -> None:
    arr = np.where(mask.data, np.uint8(255), np.uint8(0))
    Image.fromarray(arr, mode="L").save(Path(path), format="PNG")


# ---------------------------------------------------------------------------
# PFMAP probability-mask I/O
# ---------------------------------------------------------------------------

def load_probmask(path) -> ProbMask:
    """Read a PFMAP file; rejects out-of-range or non-finite values."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such probability-mask file: {path}")
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != PFMAP_MAGIC:
        raise MalformedImageError(f"{path}: bad PFMAP magic")
    width, height, reserved = struct.unpack_from("<III", raw, 4)
    if width == 0 or height == 0:
        raise MalformedImageError(f"{path}: zero PFMAP dimension {width}x{height}")
    expected = 16 + width * height * 4
    if len(raw) != expected:
        raise MalformedImageError(
            f"{path}: PFMAP dimension overflow, {width}x{height} needs {expected} bytes, file has {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=width * height, offset=16)
    data = data.reshape(height, width).astype(np.float64)
    try:
        return ProbMask(data)
    except MaskValueError as exc:
        raise MaskValueError(f"{path}: {exc}") from None


def save_probmask(mask: ProbMask, path) -> None:
    """Write PFMAP, little-endian float32 regardless of host byte order.

    Values are quantized to float32 on disk; data that originated from a
    PFMAP (or is otherwise float32-representable) round-trips bit-exactly.
    """
    header = PFMAP_MAGIC + struct.pack("<III", mask.width, mask.height, 0)
    payload = mask.data.astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


# ---------------------------------------------------------------------------
# Conversions
# ---------------------------------------------------------------------------

def to_gray(img: RgbImage) -> GrayImage:
    """Luminance via BT.601 weights: round(0.299 R + 0.587 G + 0.114 B)."""
    rgb = img.data.astype(np.float64)
    lum = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return GrayImage(np.clip(np.rint(lum), 0, 255).astype(np.uint8))


def gray_as_rgb(gray: GrayImage) -> RgbImage:
    """Replicate a gray plane into the three RGB channels."""
    return RgbImage(np.repeat(gray.data[:, :, None], 3, axis=2))
