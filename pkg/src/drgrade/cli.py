"""Command-line surface: preprocess, train, grade, evaluate, report, synthgen."""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import imgio
from .classifiers import ALL_KINDS, Hyperparams, MissingClassError, train, validate
from .config import ConfigError, PipelineConfig, load_config
from .ensemble import PER_CLASS, fit_weights, load_ensemble, save_ensemble
from .features import (
    ClassLabel,
    FeatureDataset,
    FileBackend,
    OnnxBackend,
    fit_scaler,
    load_features,
    save_features,
)
from .lesions import (
    ConstantMaskError,
    LesionKind,
    binarize,
    connected_components,
    otsu_threshold,
    quadrant_counts,
    stage,
)
from .preprocess import ColorStats, fundus_mask, preprocess_image, remove_region
from .report import GradingReport, render_report_text, report_to_dict, report_to_json
from .synthgen import LesionSpec, Xorshift64Star, gen_features, gen_fundus, mask_to_probmask
from .trust import TrustReport, cohen_kappa, f1_score, iou, lesion_trust, mse_quality

OVERLAY_COLORS = {
    LesionKind.MA: (255, 128, 0),
    LesionKind.HEM: (0, 100, 0),
    LesionKind.SE: (255, 105, 180),
    LesionKind.HE: (57, 255, 20),
}

MODEL_DISPLAY = {
    "SvmLinear": "SVM Linear Kernel",
    "SvmPoly": "SVM Polynomial Kernel",
    "SvmRbf": "SVM Radial Basis Kernel",
    "SvmCrammerSinger": "SVM Crammer-Singer",
    "RandomForest": "Random Forest",
    "NaiveBayes": "Naive Bayes",
}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_optional_mask(dir_path: Path | None, stem: str, suffix: str):
    """Fetch <stem>_<suffix>.png from dir_path; error text if configured but absent."""
    if dir_path is None:
        return None, None
    candidate = dir_path / f"{stem}_{suffix}.png"
    if not candidate.is_file():
        return None, f"missing {suffix} mask: {candidate}"
    return imgio.load_mask(candidate), None


def _preprocess_one(cfg: PipelineConfig, img: imgio.RgbImage, stem: str):
    pp = cfg.preprocessing
    disc_dir = cfg.resolve(pp.disc_mask_dir)
    vessel_dir = cfg.resolve(pp.vessel_mask_dir)
    disc, err1 = _load_optional_mask(disc_dir, stem, "disc")
    vessels, err2 = _load_optional_mask(vessel_dir, stem, "vessels")
    errors = [e for e in (err1, err2) if e]
    if errors:
        raise FileNotFoundError("; ".join(errors))
    out = preprocess_image(
        img,
        clip_limit=pp.clip_limit,
        tile_grid=pp.tile_grid,
        reference=pp.color_reference,
        gaussian=pp.gaussian,
        disc_mask=disc,
        disc_dilate_px=pp.disc_dilate_px,
        vessel_mask=vessels,
        vessel_window=pp.vessel_window,
    )
    applied = {
        "clahe": {"clip_limit": pp.clip_limit, "tile_grid": pp.tile_grid},
        "color_reference": None
        if pp.color_reference is None
        else {"mean": list(pp.color_reference.mean), "std": list(pp.color_reference.std)},
        "gaussian": {
            "sigma_x": pp.gaussian.sigma_x,
            "sigma_y": pp.gaussian.sigma_y,
            "mu_x": pp.gaussian.mu_x,
            "mu_y": pp.gaussian.mu_y,
            "radius_a": pp.gaussian.radius_a,
            "radius_b": pp.gaussian.radius_b,
        },
        "disc_removed": disc is not None,
        "disc_dilate_px": pp.disc_dilate_px,
        "vessels_removed": vessels is not None,
        "vessel_window": pp.vessel_window,
    }
    return out, applied


def cmd_preprocess(cfg: PipelineConfig, in_dir: Path, out_dir: Path, jobs: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    images = sorted(
        p for p in in_dir.iterdir() if p.suffix.lower() in (".png", ".ppm")
    ) if in_dir.is_dir() else []
    if not in_dir.is_dir():
        _log(f"error: input directory {in_dir} does not exist")
        return 1

    def work(path: Path):
        img = imgio.load_rgb(path)
        out, applied = _preprocess_one(cfg, img, path.stem)
        imgio.save_rgb(out, out_dir / f"{path.stem}.png")
        sidecar = json.dumps(applied, sort_keys=True, indent=2) + "\n"
        (out_dir / f"{path.stem}.json").write_text(sidecar, encoding="utf-8")

    failed = 0
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = {pool.submit(work, p): p for p in images}
        for fut, path in futures.items():
            try:
                fut.result()
            except Exception as exc:
                failed += 1
                _log(f"error: {path.name}: {exc}")
    _log(f"preprocessed {len(images) - failed}/{len(images)} images into {out_dir}")
    return 1 if failed else 0


def _metrics_table(rows: list[tuple[str, tuple[float, float, float]]]) -> str:
    lines = [f"{'Model':26s} {'No-DR':>8s} {'Mild-DR':>8s} {'Severe-DR':>10s}"]
    for name, per_class in rows:
        lines.append(
            f"{name:26s} {100 * per_class[0]:8.2f} {100 * per_class[1]:8.2f} "
            f"{100 * per_class[2]:10.2f}"
        )
    return "\n".join(lines)


def cmd_train(
    cfg: PipelineConfig, train_csv: Path, val_csv: Path, out_dir: Path,
    jobs: int, fmt: str,
) -> int:
    try:
        train_ds = load_features(train_csv)
        val_ds = load_features(val_csv)
    except (OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return 1
    for name, ds in (("training", train_ds), ("validation", val_ds)):
        present = set(int(v) for v in np.unique(ds.labels)) if len(ds) else set()
        missing = [int(c) for c in ClassLabel if int(c) not in present]
        if missing:
            _log(f"error: {name} split lacks classes {missing}")
            return 1

    scaler = fit_scaler(train_ds)
    train_std = FeatureDataset(
        scaler.transform(train_ds.features), train_ds.labels, train_ds.ids
    )
    val_std = FeatureDataset(scaler.transform(val_ds.features), val_ds.labels, val_ds.ids)

    hp = Hyperparams()

    def fit_one(kind: str):
        return train(kind, train_std, hp, seed=cfg.seed, require_classes=(0, 1, 2))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        members = list(pool.map(fit_one, ALL_KINDS))

    rows = []
    metrics = {}
    for kind, model in zip(ALL_KINDS, members):
        res = validate(model, val_std)
        rows.append((MODEL_DISPLAY[kind], res.per_class))
        metrics[kind] = {
            "accuracy": res.accuracy,
            "per_class": list(res.per_class),
        }

    ens = fit_weights(members, val_std, basis=PER_CLASS, scaler=scaler)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_ensemble(ens, out_dir / "ensemble.json")
    # the ensemble standardizes internally, so it scores on the raw features
    ens_res_preds = ens.predict(val_ds.features)
    metrics["ensemble"] = {
        "accuracy": float((ens_res_preds == val_std.labels).mean()),
        "weight_basis": ens.weight_basis,
    }
    (out_dir / "metrics.json").write_text(
        json.dumps(metrics, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    table = _metrics_table(rows)
    (out_dir / "metrics.txt").write_text(table + "\n", encoding="utf-8")
    if fmt == "text":
        print(table)
        print(f"ensemble accuracy: {100 * metrics['ensemble']['accuracy']:.2f}")
    else:
        print(json.dumps(metrics, sort_keys=True, indent=2))
    return 0


def _binarize_with_fallback(prob, threshold):
    """Fixed threshold, or Otsu; a constant mask means nothing separable."""
    if threshold is not None:
        return binarize(prob, threshold), threshold
    try:
        t = otsu_threshold(prob)
    except ConstantMaskError:
        level = float(prob.data.reshape(-1)[0])
        t = 0.0 if level >= 0.5 else 1.0 + np.finfo(float).eps
        full = level >= 0.5
        return imgio.BinaryMask(np.full(prob.data.shape, full, dtype=bool)), min(t, 1.0)
    return binarize(prob, t), t


def grade_image(cfg: PipelineConfig, image_path: Path) -> tuple[GradingReport, dict]:
    """Run the full grading flow for one image; returns (report, extras)."""
    timings: dict[str, float] = {}
    stem = image_path.stem
    t0 = time.perf_counter()
    img = imgio.load_rgb(image_path)
    raw_fundus = fundus_mask(img)
    pre, _ = _preprocess_one(cfg, img, stem)
    timings["preprocess"] = (time.perf_counter() - t0) * 1000.0

    # feature extraction + ensemble vote
    t0 = time.perf_counter()
    if cfg.features.backend == "file":
        fpath = cfg.resolve(cfg.features.path)
        if fpath is None or not fpath.is_file():
            raise FileNotFoundError(f"features.path not found: {fpath}")
        backend = FileBackend.from_csv(fpath)
    else:
        mpath = cfg.resolve(cfg.features.path)
        if mpath is None or not mpath.is_file():
            raise FileNotFoundError(f"features.path (onnx model) not found: {mpath}")
        backend = OnnxBackend.from_file(mpath)
    vec = backend.extract(pre, stem)
    epath = cfg.resolve(cfg.ensemble_path)
    if epath is None or not epath.is_file():
        raise FileNotFoundError(f"ensemble_path not found: {epath}")
    ens = load_ensemble(epath)
    label, scores = ens.vote(vec)
    timings["classify"] = (time.perf_counter() - t0) * 1000.0

    # lesion maps -> stage
    t0 = time.perf_counter()
    masks_dir = cfg.resolve(cfg.lesions.masks_dir)
    if masks_dir is None:
        raise FileNotFoundError("lesions.masks_dir is not configured")
    missing = []
    probs = {}
    for kind in LesionKind:
        p = masks_dir / f"{stem}_{kind.value}.pfm"
        if not p.is_file():
            missing.append(str(p))
        else:
            probs[kind] = imgio.load_probmask(p)
    if missing:
        raise FileNotFoundError("missing lesion masks: " + ", ".join(missing))

    maps = {}
    binmasks = {}
    for kind in LesionKind:
        mask, _t = _binarize_with_fallback(probs[kind], cfg.lesions.thresholds[kind])
        binmasks[kind] = mask
        maps[kind] = connected_components(mask, cfg.lesions.min_area, kind)

    ys, xs = np.nonzero(raw_fundus.data)
    if xs.size:
        center = (float(xs.mean()), float(ys.mean()))
    else:
        center = (img.width / 2.0, img.height / 2.0)
    dims = (img.width, img.height)
    quad = {}
    for kind in LesionKind:
        maps[kind], quad[kind] = quadrant_counts(maps[kind], dims, center)
    severity = stage(maps, dims, center)
    timings["stage"] = (time.perf_counter() - t0) * 1000.0

    # trust
    t0 = time.perf_counter()
    ref_path = cfg.resolve(cfg.trust.reference_image)
    if ref_path is not None:
        reference = imgio.to_gray(imgio.load_rgb(ref_path))
        _, quality = mse_quality(imgio.to_gray(pre), reference)
    else:
        quality = 1.0
    per_lesion = {}
    for kind in LesionKind:
        meta = cfg.trust.lesion_metadata.get(kind, {"f1": 0.0, "iou": 0.0})
        per_lesion[kind] = lesion_trust(
            probs[kind], quality, meta["f1"], meta["iou"], cfg.trust.weights
        )
    trust_report = TrustReport(per_lesion, cfg.trust.weights)
    timings["trust"] = (time.perf_counter() - t0) * 1000.0

    report = GradingReport(
        source_id=stem,
        ensemble_label=label,
        ensemble_scores=list(scores),
        lesion_counts={k: len(maps[k]) for k in LesionKind},
        quadrant_counts=quad,
        stage=severity,
        trust=trust_report,
        config_fingerprint=cfg.fingerprint,
        timings_ms=timings,
    )
    return report, {"preprocessed": pre, "binmasks": binmasks}


def cmd_grade(
    cfg: PipelineConfig, image_path: Path, out_path: Path | None,
    overlay: bool, fmt: str,
) -> int:
    try:
        report, extras = grade_image(cfg, image_path)
    except (OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return 1
    text = report_to_json(report)
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text, encoding="utf-8")
        _log(f"report written to {out_path}")
    if fmt == "text":
        print(render_report_text(report_to_dict(report)))
    elif out_path is None:
        print(text, end="")
    if overlay:
        pre = extras["preprocessed"]
        canvas = pre.data.copy()
        for kind, mask in extras["binmasks"].items():
            canvas[mask.data] = OVERLAY_COLORS[kind]
        target = (out_path.parent if out_path else image_path.parent) / f"{image_path.stem}_overlay.png"
        imgio.save_rgb(imgio.RgbImage(canvas), target)
        _log(f"overlay written to {target}")
    return 0


def cmd_evaluate(
    cfg: PipelineConfig, pred_dir: Path, truth_dir: Path,
    out_path: Path | None, fmt: str,
) -> int:
    pred_files = {p.name: p for p in pred_dir.glob("*.png")} if pred_dir.is_dir() else {}
    truth_files = {p.name: p for p in truth_dir.glob("*.png")} if truth_dir.is_dir() else {}
    unpaired = sorted(set(pred_files) ^ set(truth_files))
    shared = sorted(set(pred_files) & set(truth_files))
    if not shared:
        _log("error: no pairs of prediction/truth masks found")
        return 1
    for name in unpaired:
        side = "prediction" if name in pred_files else "truth"
        _log(f"error: unpaired {side} mask {name}")

    # per kind: iou values, f1 values, (pred_present, truth_present) pairs
    by_kind = {k.value: {"iou": [], "f1": [], "presence": []} for k in LesionKind}
    skipped = 0
    for name in shared:
        kind = None
        for k in LesionKind:
            if name.endswith(f"_{k.value}.png"):
                kind = k.value
                break
        if kind is None:
            skipped += 1
            continue
        pred = imgio.load_mask(pred_files[name])
        truth = imgio.load_mask(truth_files[name])
        by_kind[kind]["iou"].append(iou(pred, truth))
        by_kind[kind]["f1"].append(f1_score(pred, truth))
        by_kind[kind]["presence"].append(
            (int(pred.data.any()), int(truth.data.any()))
        )

    results = {}
    for kind, acc in by_kind.items():
        if not acc["iou"]:
            continue
        pres_pred = [p for p, _ in acc["presence"]]
        pres_truth = [t for _, t in acc["presence"]]
        k_val, band = cohen_kappa(pres_pred, pres_truth)
        results[kind] = {
            "n_pairs": len(acc["iou"]),
            "mean_iou": float(np.mean(acc["iou"])),
            "mean_f1": float(np.mean(acc["f1"])),
            "kappa": k_val,
            "kappa_band": band,
        }
    payload = json.dumps(results, sort_keys=True, indent=2) + "\n"
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(payload, encoding="utf-8")
    if fmt == "text":
        for kind, r in results.items():
            print(
                f"{kind:3s} n={r['n_pairs']:3d} IoU {r['mean_iou']:.4f} "
                f"F1 {r['mean_f1']:.4f} kappa {r['kappa']:.4f} ({r['kappa_band']})"
            )
    else:
        print(payload, end="")
    return 1 if unpaired else 0


def cmd_report(report_path: Path) -> int:
    try:
        doc = json.loads(report_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _log(f"error: cannot read report {report_path}: {exc}")
        return 1
    print(render_report_text(doc), end="")
    return 0


# ---------------------------------------------------------------------------
# fixture tree
# ---------------------------------------------------------------------------

CLASS_PROFILES = {
    0: {},
    1: {LesionKind.MA: [LesionSpec(6)]},
    2: {LesionKind.HEM: [LesionSpec(21, quadrant=q) for q in (1, 2, 3, 4)]},
}

# segmentation-model metadata echoing the published per-lesion IoU figures;
# f1 derived via f1 = 2*iou/(1+iou)
FIXTURE_METADATA = {
    "HEM": {"iou": 0.85}, "SE": {"iou": 0.92}, "HE": {"iou": 0.97}, "MA": {"iou": 0.77},
}
for _entry in FIXTURE_METADATA.values():
    _entry["f1"] = round(2 * _entry["iou"] / (1 + _entry["iou"]), 4)


def emit_fixture_tree(
    out_dir: Path, seed: int, n_train: int = 60, n_val: int = 30,
    images_per_class: int = 2, dims: tuple[int, int] = (256, 256),
) -> None:
    """Write a self-contained demo tree: images, masks, features, config."""
    out_dir = Path(out_dir)
    for sub in ("images", "masks", "probmasks", "anatomy", "models"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    total = n_train + n_val + images_per_class
    ds = gen_features(seed, total, 20, 8.0)
    parts = {"train": ([], [], []), "val": ([], [], []), "img": ([], [], [])}
    taken = {0: 0, 1: 0, 2: 0}
    image_ids: dict[str, int] = {}
    counter = 0
    for i in range(len(ds)):
        cls = int(ds.labels[i])
        pos = taken[cls]
        taken[cls] += 1
        if pos < n_train:
            part = "train"
            row_id = ds.ids[i]
        elif pos < n_train + n_val:
            part = "val"
            row_id = ds.ids[i]
        else:
            part = "img"
            row_id = f"img_{cls}_{pos - n_train - n_val:02d}"
            image_ids[row_id] = cls
            counter += 1
        parts[part][0].append(ds.features[i])
        parts[part][1].append(cls)
        parts[part][2].append(row_id)

    for name, fname in (("train", "features_train.csv"), ("val", "features_val.csv"),
                        ("img", "features_images.csv")):
        feats, labels, ids = parts[name]
        save_features(
            FeatureDataset(np.array(feats), np.array(labels), ids), out_dir / fname
        )

    scene_rng = Xorshift64Star(seed ^ 0xABCDEF)
    reference_scene = gen_fundus(seed + 9999, dims, {})
    imgio.save_rgb(reference_scene.image, out_dir / "reference.png")
    ref_stats = ColorStats.from_image(reference_scene.image, reference_scene.fundus_mask)

    for image_id, cls in sorted(image_ids.items()):
        scene = gen_fundus(scene_rng.next_u64(), dims, CLASS_PROFILES[cls])
        imgio.save_rgb(scene.image, out_dir / "images" / f"{image_id}.png")
        imgio.save_mask(scene.disc_mask, out_dir / "anatomy" / f"{image_id}_disc.png")
        imgio.save_mask(scene.vessel_mask, out_dir / "anatomy" / f"{image_id}_vessels.png")
        for kind in LesionKind:
            mask = scene.lesion_masks[kind]
            imgio.save_mask(mask, out_dir / "masks" / f"{image_id}_{kind.value}.png")
            imgio.save_probmask(
                mask_to_probmask(mask), out_dir / "probmasks" / f"{image_id}_{kind.value}.pfm"
            )

    config = {
        "seed": seed,
        "preprocessing": {
            "clahe": {"clip_limit": 2.0, "tile_grid": 8},
            "color_reference": {
                "mean": [round(v, 4) for v in ref_stats.mean],
                "std": [round(v, 4) for v in ref_stats.std],
            },
            "gaussian": {"sigma_x": 1.0, "sigma_y": 1.0, "radius_a": 3, "radius_b": 3},
            "disc_mask_dir": "anatomy",
            "disc_dilate_px": 2,
            "vessel_mask_dir": "anatomy",
            "vessel_window": 9,
        },
        "features": {"backend": "file", "path": "features_images.csv", "dim": 20, "split": 10},
        "ensemble_path": "models/ensemble.json",
        "lesions": {"masks_dir": "probmasks", "min_area": 5},
        "trust": {
            "weights": {"quality": 0.4, "f1": 0.3, "confidence": 0.3},
            "reference_image": "reference.png",
            "lesion_metadata": FIXTURE_METADATA,
        },
    }
    (out_dir / "config.json").write_text(
        json.dumps(config, indent=2) + "\n", encoding="utf-8"
    )


def cmd_synthgen(out_dir: Path, seed: int, images_per_class: int) -> int:
    emit_fixture_tree(out_dir, seed, images_per_class=images_per_class)
    _log(f"fixture tree written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                        help="pipeline config JSON")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the config seed")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="worker pool width")
    common.add_argument("--format", choices=("json", "text"), default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="drgrade",
        description="Diabetic retinopathy grading pipeline",
    )
    parser.add_argument("--config", type=Path, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker pool width")
    parser.add_argument("--format", choices=("json", "text"), default="json")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name, help_text):
        return sub.add_parser(name, help=help_text, parents=[common])

    p = add_command("preprocess", "run the preprocessing chain over a directory")
    p.add_argument("in_dir", type=Path)
    p.add_argument("out_dir", type=Path)

    p = add_command("train", "train the six classifiers and the ensemble")
    p.add_argument("train_csv", type=Path)
    p.add_argument("val_csv", type=Path)
    p.add_argument("out_dir", type=Path)

    p = add_command("grade", "grade one fundus image")
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path, help="write the report JSON here")
    p.add_argument("--overlay", action="store_true", help="emit a lesion overlay PNG")

    p = add_command("evaluate", "score predicted masks against ground truth")
    p.add_argument("pred_dir", type=Path)
    p.add_argument("truth_dir", type=Path)
    p.add_argument("--out", type=Path)

    p = add_command("report", "render a stored report JSON as text")
    p.add_argument("report_json", type=Path)

    p = add_command("synthgen", "emit the synthetic fixture tree")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--images-per-class", type=int, default=2)
    return parser


def _config_for(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "preprocess":
            return cmd_preprocess(_config_for(args), args.in_dir, args.out_dir, args.jobs)
        if args.command == "train":
            return cmd_train(
                _config_for(args), args.train_csv, args.val_csv, args.out_dir,
                args.jobs, args.format,
            )
        if args.command == "grade":
            return cmd_grade(_config_for(args), args.image, args.out, args.overlay, args.format)
        if args.command == "evaluate":
            return cmd_evaluate(
                _config_for(args), args.pred_dir, args.truth_dir, args.out, args.format
            )
        if args.command == "report":
            return cmd_report(args.report_json)
        if args.command == "synthgen":
            seed = args.seed if args.seed is not None else 0
            return cmd_synthgen(args.out_dir, seed, args.images_per_class)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
