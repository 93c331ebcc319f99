"""Dataset layout adapters for the two public corpora.

APTOS ships fundus photographs plus a CSV of 5-level severity labels;
those collapse to the 3-class scheme on ingest. IDRiD ships 54 training
and 27 test images with one ground-truth mask folder per lesion kind.

Expected (simplified) IDRiD-style tree::

    root/
      images/train/<id>.png          images/test/<id>.png
      masks/train/<KIND>/<id>_<KIND>.png   (KIND in MA, HEM, SE, HE)
      masks/test/<KIND>/<id>_<KIND>.png
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .features import ClassLabel
from .lesions import LesionKind

FIVE_TO_THREE = {0: 0, 1: 1, 2: 1, 3: 2, 4: 2}

IMAGE_SUFFIXES = (".png", ".ppm")


class DatasetLayoutError(ValueError):
    pass


def collapse_five_level(label: int) -> ClassLabel:
    if label not in FIVE_TO_THREE:
        raise DatasetLayoutError(f"severity label {label} outside 0..4")
    return ClassLabel(FIVE_TO_THREE[label])


def load_aptos_labels(csv_path) -> dict[str, ClassLabel]:
    """Read an APTOS-style labels CSV (id_code,diagnosis) and collapse 5 -> 3."""
    csv_path = Path(csv_path)
    out: dict[str, ClassLabel] = {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DatasetLayoutError(f"{csv_path}: expected header id_code,diagnosis")
        for lineno, row in enumerate(reader, start=2):
            if len(row) < 2:
                raise DatasetLayoutError(f"{csv_path}: line {lineno} too short")
            try:
                label = int(row[1])
            except ValueError:
                raise DatasetLayoutError(
                    f"{csv_path}: line {lineno} non-integer diagnosis {row[1]!r}"
                ) from None
            out[row[0]] = collapse_five_level(label)
    return out


@dataclass(frozen=True)
class SegmentationItem:
    image: Path
    masks: dict[LesionKind, Path | None]


def discover_idrid(root) -> dict[str, list[SegmentationItem]]:
    """Walk an IDRiD-style tree and pair images with their per-lesion masks."""
    root = Path(root)
    images_root = root / "images"
    masks_root = root / "masks"
    if not images_root.is_dir():
        raise DatasetLayoutError(f"{root}: missing images/ directory")
    splits: dict[str, list[SegmentationItem]] = {}
    for split_dir in sorted(p for p in images_root.iterdir() if p.is_dir()):
        items = []
        for img in sorted(split_dir.iterdir()):
            if img.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            masks: dict[LesionKind, Path | None] = {}
            for kind in LesionKind:
                candidate = (
                    masks_root / split_dir.name / kind.value / f"{img.stem}_{kind.value}.png"
                )
                masks[kind] = candidate if candidate.is_file() else None
            items.append(SegmentationItem(img, masks))
        splits[split_dir.name] = items
    if not splits:
        raise DatasetLayoutError(f"{root}: no split directories under images/")
    return splits
