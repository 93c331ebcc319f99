"""Pipeline configuration: one JSON document, validated with precise paths.

Every section is optional and falls back to defaults; unknown keys are
rejected so typos surface immediately. Validation errors name the exact
config path, e.g. ``preprocessing.gaussian.sigma_x: must be > 0``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .lesions import DEFAULT_MIN_AREA, LesionKind
from .preprocess import ColorStats, GaussianParams
from .trust import TrustWeights


class ConfigError(ValueError):
    """Configuration document is invalid; message carries the JSON path."""


@dataclass
class PreprocessingConfig:
    clip_limit: float = 2.0
    tile_grid: int = 8
    color_reference: ColorStats | None = None
    gaussian: GaussianParams = field(default_factory=GaussianParams)
    disc_mask_dir: str | None = None
    disc_dilate_px: int = 0
    vessel_mask_dir: str | None = None
    vessel_window: int = 9


@dataclass
class FeatureConfig:
    backend: str = "file"  # "file" | "onnx"
    path: str | None = None
    dim: int = 1056
    split: int = 528  # leading block width when two extractors are concatenated


@dataclass
class LesionConfig:
    masks_dir: str | None = None
    thresholds: dict[LesionKind, float | None] = field(
        default_factory=lambda: {k: None for k in LesionKind}  # None -> Otsu
    )
    min_area: int = DEFAULT_MIN_AREA


@dataclass
class TrustConfig:
    weights: TrustWeights = field(default_factory=TrustWeights)
    reference_image: str | None = None
    lesion_metadata: dict[LesionKind, dict[str, float]] = field(default_factory=dict)


@dataclass
class PipelineConfig:
    seed: int = 0
    preprocessing: PreprocessingConfig = field(default_factory=PreprocessingConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    ensemble_path: str | None = None
    lesions: LesionConfig = field(default_factory=LesionConfig)
    trust: TrustConfig = field(default_factory=TrustConfig)
    base_dir: Path = field(default_factory=Path)
    fingerprint: str = ""

    def resolve(self, maybe_path: str | None) -> Path | None:
        if maybe_path is None:
            return None
        p = Path(maybe_path)
        return p if p.is_absolute() else self.base_dir / p


def _expect(obj, path: str, kinds, what: str):
    if not isinstance(obj, kinds):
        raise ConfigError(f"{path}: must be {what}, got {type(obj).__name__}")
    return obj


def _num(obj, path, lo=None, hi=None, integer=False):
    kinds = (int,) if integer else (int, float)
    v = _expect(obj, path, kinds, "an integer" if integer else "a number")
    if isinstance(v, bool):
        raise ConfigError(f"{path}: must be a number, got bool")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {v}")
    return v


def _no_unknown(doc: dict, path: str, allowed: set[str]):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _parse_preprocessing(doc: dict) -> PreprocessingConfig:
    _no_unknown(doc, "preprocessing", {
        "clahe", "color_reference", "gaussian", "disc_mask_dir",
        "disc_dilate_px", "vessel_mask_dir", "vessel_window",
    })
    out = PreprocessingConfig()
    if "clahe" in doc:
        c = _expect(doc["clahe"], "preprocessing.clahe", dict, "an object")
        _no_unknown(c, "preprocessing.clahe", {"clip_limit", "tile_grid"})
        if "clip_limit" in c:
            out.clip_limit = float(_num(c["clip_limit"], "preprocessing.clahe.clip_limit"))
            if out.clip_limit <= 0:
                raise ConfigError("preprocessing.clahe.clip_limit: must be > 0")
        if "tile_grid" in c:
            out.tile_grid = _num(c["tile_grid"], "preprocessing.clahe.tile_grid", lo=1, integer=True)
    if doc.get("color_reference") is not None:
        r = _expect(doc["color_reference"], "preprocessing.color_reference", dict, "an object")
        _no_unknown(r, "preprocessing.color_reference", {"mean", "std"})
        try:
            mean = tuple(float(v) for v in r["mean"])
            std = tuple(float(v) for v in r["std"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(
                "preprocessing.color_reference: needs numeric mean/std triples"
            ) from None
        if len(mean) != 3 or len(std) != 3:
            raise ConfigError("preprocessing.color_reference: mean/std must have 3 entries")
        try:
            out.color_reference = ColorStats(mean, std)
        except ValueError as exc:
            raise ConfigError(f"preprocessing.color_reference: {exc}") from None
    if "gaussian" in doc:
        g = _expect(doc["gaussian"], "preprocessing.gaussian", dict, "an object")
        _no_unknown(g, "preprocessing.gaussian",
                    {"sigma_x", "sigma_y", "mu_x", "mu_y", "radius_a", "radius_b"})
        kwargs = {}
        for key in ("sigma_x", "sigma_y", "mu_x", "mu_y"):
            if key in g:
                kwargs[key] = float(_num(g[key], f"preprocessing.gaussian.{key}"))
        for key in ("radius_a", "radius_b"):
            if key in g:
                kwargs[key] = _num(g[key], f"preprocessing.gaussian.{key}", lo=0, integer=True)
        try:
            out.gaussian = GaussianParams(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"preprocessing.gaussian: {exc}") from None
    if doc.get("disc_mask_dir") is not None:
        out.disc_mask_dir = _expect(doc["disc_mask_dir"], "preprocessing.disc_mask_dir", str, "a string")
    if "disc_dilate_px" in doc:
        out.disc_dilate_px = _num(doc["disc_dilate_px"], "preprocessing.disc_dilate_px", lo=0, integer=True)
    if doc.get("vessel_mask_dir") is not None:
        out.vessel_mask_dir = _expect(doc["vessel_mask_dir"], "preprocessing.vessel_mask_dir", str, "a string")
    if "vessel_window" in doc:
        out.vessel_window = _num(doc["vessel_window"], "preprocessing.vessel_window", lo=3, integer=True)
        if out.vessel_window % 2 == 0:
            raise ConfigError("preprocessing.vessel_window: must be odd")
    return out


def _parse_features(doc: dict) -> FeatureConfig:
    _no_unknown(doc, "features", {"backend", "path", "dim", "split"})
    out = FeatureConfig()
    if "backend" in doc:
        backend = _expect(doc["backend"], "features.backend", str, "a string")
        if backend not in ("file", "onnx"):
            raise ConfigError(f"features.backend: must be 'file' or 'onnx', got {backend!r}")
        out.backend = backend
    if doc.get("path") is not None:
        out.path = _expect(doc["path"], "features.path", str, "a string")
    if "dim" in doc:
        out.dim = _num(doc["dim"], "features.dim", lo=1, integer=True)
    if "split" in doc:
        out.split = _num(doc["split"], "features.split", lo=0, integer=True)
    if out.split > out.dim:
        raise ConfigError(f"features.split: {out.split} exceeds dim {out.dim}")
    return out


def _parse_lesions(doc: dict) -> LesionConfig:
    _no_unknown(doc, "lesions", {"masks_dir", "thresholds", "min_area"})
    out = LesionConfig()
    if doc.get("masks_dir") is not None:
        out.masks_dir = _expect(doc["masks_dir"], "lesions.masks_dir", str, "a string")
    if doc.get("thresholds") is not None:
        t = _expect(doc["thresholds"], "lesions.thresholds", dict, "an object")
        valid = {k.value for k in LesionKind}
        _no_unknown(t, "lesions.thresholds", valid)
        for key, val in t.items():
            if val is not None:
                val = float(_num(val, f"lesions.thresholds.{key}", lo=0.0, hi=1.0))
            out.thresholds[LesionKind(key)] = val
    if "min_area" in doc:
        out.min_area = _num(doc["min_area"], "lesions.min_area", lo=0, integer=True)
    return out


def _parse_trust(doc: dict) -> TrustConfig:
    _no_unknown(doc, "trust", {"weights", "reference_image", "lesion_metadata"})
    out = TrustConfig()
    if "weights" in doc:
        w = _expect(doc["weights"], "trust.weights", dict, "an object")
        _no_unknown(w, "trust.weights", {"quality", "f1", "confidence"})
        try:
            out.weights = TrustWeights(
                float(w.get("quality", 0.4)),
                float(w.get("f1", 0.3)),
                float(w.get("confidence", 0.3)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"trust.weights: {exc}") from None
    if doc.get("reference_image") is not None:
        out.reference_image = _expect(doc["reference_image"], "trust.reference_image", str, "a string")
    if doc.get("lesion_metadata") is not None:
        meta = doc["lesion_metadata"]
        if isinstance(meta, str):
            raise ConfigError(
                "trust.lesion_metadata: inline object required (load files beforehand)"
            )
        meta = _expect(meta, "trust.lesion_metadata", dict, "an object")
        valid = {k.value for k in LesionKind}
        _no_unknown(meta, "trust.lesion_metadata", valid)
        for key, entry in meta.items():
            entry = _expect(entry, f"trust.lesion_metadata.{key}", dict, "an object")
            _no_unknown(entry, f"trust.lesion_metadata.{key}", {"f1", "iou"})
            out.lesion_metadata[LesionKind(key)] = {
                "f1": float(_num(entry.get("f1", 0.0), f"trust.lesion_metadata.{key}.f1", 0.0, 1.0)),
                "iou": float(_num(entry.get("iou", 0.0), f"trust.lesion_metadata.{key}.iou", 0.0, 1.0)),
            }
    return out


def parse_config(doc: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    _expect(doc, "<root>", dict, "an object")
    _no_unknown(doc, "<root>", {
        "seed", "preprocessing", "features", "ensemble_path", "lesions", "trust",
    })
    cfg = PipelineConfig(base_dir=Path(base_dir))
    if "seed" in doc:
        cfg.seed = _num(doc["seed"], "seed", lo=0, integer=True)
    if "preprocessing" in doc:
        cfg.preprocessing = _parse_preprocessing(
            _expect(doc["preprocessing"], "preprocessing", dict, "an object")
        )
    if "features" in doc:
        cfg.features = _parse_features(_expect(doc["features"], "features", dict, "an object"))
    if doc.get("ensemble_path") is not None:
        cfg.ensemble_path = _expect(doc["ensemble_path"], "ensemble_path", str, "a string")
    if "lesions" in doc:
        cfg.lesions = _parse_lesions(_expect(doc["lesions"], "lesions", dict, "an object"))
    if "trust" in doc:
        cfg.trust = _parse_trust(_expect(doc["trust"], "trust", dict, "an object"))
    cfg.fingerprint = hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc, base_dir=path.parent)
