"""drtrainer command line: train-extractor and train-unet."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .train import TrainingDiverged, train_extractor, train_unet


def _seed_from_config(path: Path | None, fallback: int) -> int:
    if path is None:
        return fallback
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return int(doc.get("seed", fallback))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drtrainer",
                                     description="Toy neural trainers for the grading pipeline")
    parser.add_argument("--config", type=Path, help="pipeline config JSON (seed is honored)")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-extractor", help="train a feature extractor and export artifacts")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--arch", choices=("a", "b"), default="a")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--n-per-class", type=int, default=40)

    p = sub.add_parser("train-unet", help="train a per-lesion segmentation net")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--kind", choices=("MA", "HEM", "SE", "HE"), default="HE")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--n-train", type=int, default=30)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed = _seed_from_config(args.config, args.seed)
    try:
        if args.command == "train-extractor":
            res = train_extractor(
                args.out_dir, arch=args.arch, feature_dim=args.dim,
                n_per_class=args.n_per_class, epochs=args.epochs, seed=seed,
            )
            print(f"validation accuracy: {res.val_accuracy:.3f}")
            print(f"exported: {res.onnx_path.name}, {res.train_csv.name}, "
                  f"{res.val_csv.name}, {res.zeros_fixture_path.name}")
            return 0
        if args.command == "train-unet":
            res = train_unet(
                args.out_dir, lesion_kind=args.kind, n_train=args.n_train,
                epochs=args.epochs, seed=seed,
            )
            print(f"held-out IoU: {res.holdout_iou:.3f}  F1: {res.holdout_f1:.3f}")
            print(f"exported: {res.onnx_path.name}, {res.metadata_path.name}, "
                  f"{res.probmask_dir.name}/")
            return 0
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
