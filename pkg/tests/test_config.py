import json

import pytest

from drgrade.config import ConfigError, load_config, parse_config
from drgrade.lesions import LesionKind


def write(tmp_path, doc):
    p = tmp_path / "config.json"
    p.write_text(json.dumps(doc), encoding="utf-8")
    return p


def test_empty_config_gives_defaults(tmp_path):
    cfg = load_config(write(tmp_path, {}))
    assert cfg.seed == 0
    assert cfg.preprocessing.clip_limit == 2.0
    assert cfg.features.dim == 1056 and cfg.features.split == 528
    assert cfg.lesions.min_area == 5
    assert cfg.trust.weights.w_quality == 0.4


def test_error_paths_are_precise(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, {"preprocessing": {"gaussian": {"sigma_x": -1}}}))
    assert "preprocessing.gaussian" in str(exc.value)

    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, {"lesions": {"min_area": -3}}))
    assert "lesions.min_area" in str(exc.value)

    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, {"trust": {"weights": {"quality": 0.9, "f1": 0.3, "confidence": 0.3}}}))
    assert "trust.weights" in str(exc.value)


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, {"featuers": {}}))
    assert "featuers" in str(exc.value)


def test_invalid_json_reported(tmp_path):
    p = tmp_path / "config.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(p)


def test_backend_choice_validated(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, {"features": {"backend": "magic"}}))
    assert "features.backend" in str(exc.value)


def test_threshold_ranges(tmp_path):
    cfg = load_config(write(tmp_path, {"lesions": {"thresholds": {"MA": 0.25}}}))
    assert cfg.lesions.thresholds[LesionKind.MA] == 0.25
    assert cfg.lesions.thresholds[LesionKind.HEM] is None
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, {"lesions": {"thresholds": {"MA": 1.5}}}))


def test_relative_paths_resolve_against_config_dir(tmp_path):
    cfg = load_config(write(tmp_path, {"ensemble_path": "models/e.json"}))
    assert cfg.resolve(cfg.ensemble_path) == tmp_path / "models" / "e.json"


def test_fingerprint_tracks_content(tmp_path):
    a = parse_config({"seed": 1})
    b = parse_config({"seed": 1})
    c = parse_config({"seed": 2})
    assert a.fingerprint == b.fingerprint != c.fingerprint


def test_vessel_window_must_be_odd(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, {"preprocessing": {"vessel_window": 4}}))
    assert "vessel_window" in str(exc.value)


def test_lesion_metadata_inline(tmp_path):
    cfg = load_config(
        write(tmp_path, {"trust": {"lesion_metadata": {"HE": {"f1": 0.9, "iou": 0.97}}}})
    )
    assert cfg.trust.lesion_metadata[LesionKind.HE] == {"f1": 0.9, "iou": 0.97}
