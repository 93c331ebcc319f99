"""Six from-scratch learners behind a scikit-learn style estimator API.

Estimators: linear / polynomial / RBF / Crammer-Singer SVMs, random
forest, and Gaussian naive Bayes. Module-level ``train`` / ``predict`` /
``validate`` wrap them for the pipeline; ``save_model`` / ``load_model``
handle the versioned JSON files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import ClassLabel, FeatureDataset, FeatureVector
from .base import MissingClassError, SeverityClassifier, argmax_severity
from .bayes import GaussianNbClassifier
from .forest import RandomForestClassifier
from .serialize import (
    CorruptModelError,
    VersionMismatchError,
    kind_of,
    load_model,
    model_to_bytes,
    save_model,
)
from .svm import (
    CrammerSingerSvmClassifier,
    LinearSvmClassifier,
    PolySvmClassifier,
    RbfSvmClassifier,
)

ALL_KINDS = (
    "SvmLinear",
    "SvmPoly",
    "SvmRbf",
    "SvmCrammerSinger",
    "RandomForest",
    "NaiveBayes",
)

__all__ = [
    "ALL_KINDS",
    "CorruptModelError",
    "CrammerSingerSvmClassifier",
    "GaussianNbClassifier",
    "Hyperparams",
    "LinearSvmClassifier",
    "MissingClassError",
    "PolySvmClassifier",
    "RandomForestClassifier",
    "RbfSvmClassifier",
    "SeverityClassifier",
    "VersionMismatchError",
    "argmax_severity",
    "kind_of",
    "load_model",
    "model_to_bytes",
    "predict",
    "save_model",
    "train",
    "validate",
]


@dataclass(frozen=True)
class Hyperparams:
    """Pipeline-level knobs shared across the six learners."""

    C: float = 1.0
    poly_degree: int = 3
    gamma: float | None = None  # None -> 1/d
    n_trees: int = 100
    max_depth: int | None = 16
    epochs: int = 30
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.poly_degree < 1:
            raise ValueError(f"poly_degree must be >= 1, got {self.poly_degree}")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


def build_estimator(kind: str, hp: Hyperparams, seed: int) -> SeverityClassifier:
    if kind == "SvmLinear":
        return LinearSvmClassifier(hp.C, hp.epochs, hp.learning_rate, seed)
    if kind == "SvmPoly":
        return PolySvmClassifier(hp.C, hp.poly_degree, 1.0, hp.epochs, hp.learning_rate, seed)
    if kind == "SvmRbf":
        return RbfSvmClassifier(hp.C, hp.gamma, hp.epochs, hp.learning_rate, seed)
    if kind == "SvmCrammerSinger":
        return CrammerSingerSvmClassifier(hp.C, hp.epochs, hp.learning_rate, seed)
    if kind == "RandomForest":
        return RandomForestClassifier(hp.n_trees, hp.max_depth, seed)
    if kind == "NaiveBayes":
        return GaussianNbClassifier(random_state=seed)
    raise ValueError(f"unknown classifier kind {kind!r}")


def train(
    kind: str,
    ds: FeatureDataset,
    hp: Hyperparams | None = None,
    seed: int = 0,
    require_classes=None,
) -> SeverityClassifier:
    """Fit one learner on an (already standardized) training split."""
    if require_classes is not None:
        present = set(int(v) for v in np.unique(ds.labels))
        missing = [int(c) for c in require_classes if int(c) not in present]
        if missing:
            raise MissingClassError(f"training split lacks classes {missing}")
    est = build_estimator(kind, hp or Hyperparams(), seed)
    return est.fit(ds.features, ds.labels)


def predict(model: SeverityClassifier, x: FeatureVector) -> ClassLabel:
    return ClassLabel(int(model.predict(x.values.reshape(1, -1))[0]))


@dataclass(frozen=True)
class ValidationResult:
    accuracy: float
    per_class: tuple[float, float, float]  # indexed by ClassLabel; 0.0 if absent


def validate(model: SeverityClassifier, ds: FeatureDataset) -> ValidationResult:
    """Overall and per-class accuracy on a validation split."""
    if len(ds) == 0:
        raise ValueError("validation split is empty")
    preds = model.predict(ds.features)
    correct = preds == ds.labels
    per_class = []
    for cls in ClassLabel:
        sel = ds.labels == int(cls)
        per_class.append(float(correct[sel].mean()) if sel.any() else 0.0)
    return ValidationResult(float(correct.mean()), tuple(per_class))
