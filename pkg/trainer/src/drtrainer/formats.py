"""Writers for the grading pipeline's interchange formats.

These deliberately reimplement the documented formats rather than import
the consumer package; the two components only meet at the files.

  - feature CSV: header ``id,f0,...,f{d-1},label``, floats via repr,
    labels in {0, 1, 2}
  - PFMAP: ``"PFM1" | width u32le | height u32le | reserved u32le(0) |
    width*height float32le row-major``
  - binary masks: 8-bit grayscale PNG, 0 background / 255 foreground

All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

PFMAP_MAGIC = b"PFM1"


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pfmap(path, probs: np.ndarray) -> None:
    """Probability map to PFMAP; values must already lie in [0, 1]."""
    probs = np.asarray(probs, dtype=np.float32)
    if probs.ndim != 2:
        raise ValueError(f"probability map must be 2-D, got {probs.shape}")
    if not np.all(np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0:
        raise ValueError("probability map must be finite and within [0, 1]")
    h, w = probs.shape
    header = PFMAP_MAGIC + struct.pack("<III", w, h, 0)
    _atomic_write_bytes(Path(path), header + probs.astype("<f4").tobytes())


def write_feature_csv(path, ids, features: np.ndarray, labels) -> None:
    features = np.asarray(features, dtype=np.float64)
    labels = [int(v) for v in labels]
    if features.ndim != 2 or len(ids) != features.shape[0] or len(labels) != features.shape[0]:
        raise ValueError("ids, features, labels must agree in length")
    if any(label not in (0, 1, 2) for label in labels):
        raise ValueError("labels must be in {0, 1, 2}")
    d = features.shape[1]
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["id"] + [f"f{i}" for i in range(d)] + ["label"])
    for i in range(features.shape[0]):
        writer.writerow([ids[i]] + [repr(float(v)) for v in features[i]] + [labels[i]])
    _atomic_write_bytes(Path(path), buf.getvalue().encode("utf-8"))


def write_mask_png(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=bool)
    arr = np.where(mask, np.uint8(255), np.uint8(0))
    import io

    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    _atomic_write_bytes(Path(path), buf.getvalue())


def write_image_png(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    import io

    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    _atomic_write_bytes(Path(path), buf.getvalue())
