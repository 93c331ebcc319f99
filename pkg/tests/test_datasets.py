import numpy as np
import pytest

from drgrade.datasets import (
    DatasetLayoutError,
    collapse_five_level,
    discover_idrid,
    load_aptos_labels,
)
from drgrade.features import ClassLabel
from drgrade.imgio import BinaryMask, RgbImage, save_mask, save_rgb
from drgrade.lesions import LesionKind


def test_five_level_collapse():
    assert collapse_five_level(0) == ClassLabel.NO_DR
    assert collapse_five_level(1) == ClassLabel.MILD_DR
    assert collapse_five_level(2) == ClassLabel.MILD_DR
    assert collapse_five_level(3) == ClassLabel.SEVERE_DR
    assert collapse_five_level(4) == ClassLabel.SEVERE_DR
    with pytest.raises(DatasetLayoutError):
        collapse_five_level(5)


def test_aptos_labels_csv(tmp_path):
    p = tmp_path / "train.csv"
    p.write_text("id_code,diagnosis\nabc,0\ndef,2\nghi,4\n", encoding="utf-8")
    labels = load_aptos_labels(p)
    assert labels == {
        "abc": ClassLabel.NO_DR,
        "def": ClassLabel.MILD_DR,
        "ghi": ClassLabel.SEVERE_DR,
    }


def test_aptos_bad_row(tmp_path):
    p = tmp_path / "train.csv"
    p.write_text("id_code,diagnosis\nabc,x\n", encoding="utf-8")
    with pytest.raises(DatasetLayoutError) as exc:
        load_aptos_labels(p)
    assert "line 2" in str(exc.value)


def test_idrid_discovery(tmp_path):
    img = RgbImage(np.zeros((8, 8, 3), dtype=np.uint8))
    mask = BinaryMask(np.zeros((8, 8), dtype=bool))
    for split, ids in (("train", ["a", "b"]), ("test", ["c"])):
        (tmp_path / "images" / split).mkdir(parents=True)
        for stem in ids:
            save_rgb(img, tmp_path / "images" / split / f"{stem}.png")
        for kind in LesionKind:
            d = tmp_path / "masks" / split / kind.value
            d.mkdir(parents=True)
            for stem in ids:
                if not (split == "test" and kind == LesionKind.SE):
                    save_mask(mask, d / f"{stem}_{kind.value}.png")

    splits = discover_idrid(tmp_path)
    assert sorted(splits) == ["test", "train"]
    assert len(splits["train"]) == 2 and len(splits["test"]) == 1
    item = splits["train"][0]
    assert item.image.name == "a.png"
    assert all(item.masks[k] is not None for k in LesionKind)
    assert splits["test"][0].masks[LesionKind.SE] is None  # absent mask -> None


def test_idrid_missing_images_dir(tmp_path):
    with pytest.raises(DatasetLayoutError):
        discover_idrid(tmp_path)
