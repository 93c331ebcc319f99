"""Weighted-vote aggregation of the six learners into one 3-class decision.

Each member casts a hard vote for its predicted class; the vote counts
with a weight derived from the member's validation performance, either
its overall accuracy or its accuracy on the candidate class (default).
Exact score ties resolve toward the higher severity, like everywhere
else in the pipeline.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .classifiers import load_model, save_model, validate
from .classifiers.base import argmax_severity
from .features import ClassLabel, FeatureDataset, FeatureScaler, FeatureVector

FORMAT_VERSION = 1
OVERALL = "overall_accuracy"
PER_CLASS = "per_class_accuracy"
N_CLASSES = len(ClassLabel)


class EnsembleFormatError(ValueError):
    """Ensemble file is unreadable or references a bad member."""


class WeightedVoteEnsemble:
    """Hard-voting ensemble with performance-derived member weights.

    ``weights`` is (m,) under the overall basis and (m, 3) under the
    per-class basis, where entry [m, c] weights member m's vote when it
    votes for class c. Weights stay unnormalized; the argmax is invariant
    to positive rescaling.
    """

    def __init__(self, members, weights, weight_basis: str = PER_CLASS,
                 scaler: FeatureScaler | None = None):
        if len(members) == 0:
            raise ValueError("ensemble needs at least one member")
        weights = np.asarray(weights, dtype=np.float64)
        expected = (len(members),) if weight_basis == OVERALL else (len(members), N_CLASSES)
        if weight_basis not in (OVERALL, PER_CLASS):
            raise ValueError(f"unknown weight basis {weight_basis!r}")
        if weights.shape != expected:
            raise ValueError(f"weights shape {weights.shape}, expected {expected}")
        if (weights < 0).any():
            raise ValueError("weights must be non-negative")
        if not (weights > 0).any():
            raise ValueError("at least one weight must be positive")
        self.members = list(members)
        self.weights = weights
        self.weight_basis = weight_basis
        self.scaler = scaler

    def vote(self, x: FeatureVector | np.ndarray) -> tuple[ClassLabel, np.ndarray]:
        """Weighted hard vote; returns the winner and the full score vector."""
        values = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
        row = values.reshape(1, -1)
        if self.scaler is not None:
            row = self.scaler.transform(row)
        scores = np.zeros(N_CLASSES)
        for m, member in enumerate(self.members):
            pred = int(member.predict(row)[0])
            w = self.weights[m] if self.weight_basis == OVERALL else self.weights[m, pred]
            scores[pred] += w
        winner = argmax_severity(scores, np.arange(N_CLASSES))
        return ClassLabel(winner), scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([int(self.vote(X[i])[0]) for i in range(X.shape[0])], dtype=np.int64)


def fit_weights(
    members,
    val: FeatureDataset,
    basis: str = PER_CLASS,
    scaler: FeatureScaler | None = None,
) -> WeightedVoteEnsemble:
    """Weight each member by its validation performance.

    The validation features must be in the same (standardized) space the
    members were trained in; pass the scaler separately so the ensemble
    can standardize raw probes at vote time.
    """
    if len(val) == 0:
        raise ValueError("validation split is empty")
    if basis == OVERALL:
        weights = np.array([validate(m, val).accuracy for m in members])
    elif basis == PER_CLASS:
        weights = np.array([validate(m, val).per_class for m in members])
    else:
        raise ValueError(f"unknown weight basis {basis!r}")
    return WeightedVoteEnsemble(members, weights, basis, scaler)


def save_ensemble(ens: WeightedVoteEnsemble, path, member_dir=None) -> None:
    """Write the ensemble JSON plus one model file per member.

    Member files land next to the ensemble file (or in member_dir) and are
    referenced by relative path.
    """
    path = Path(path)
    member_dir = Path(member_dir) if member_dir else path.parent
    member_dir.mkdir(parents=True, exist_ok=True)
    member_paths = []
    for i, member in enumerate(ens.members):
        from .classifiers import kind_of

        rel = f"member_{i}_{kind_of(member)}.json"
        save_model(member, member_dir / rel)
        member_paths.append(str((member_dir / rel).relative_to(path.parent)))
    doc = {
        "format_version": FORMAT_VERSION,
        "member_paths": member_paths,
        "weights": ens.weights.tolist(),
        "weight_basis": ens.weight_basis,
        "scaler": None
        if ens.scaler is None
        else {"mean": ens.scaler.mean_.tolist(), "std": ens.scaler.scale_.tolist()},
    }
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")), encoding="utf-8")


def load_ensemble(path) -> WeightedVoteEnsemble:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise EnsembleFormatError(f"{path}: unreadable ensemble file ({exc})") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise EnsembleFormatError(
            f"{path}: format_version {doc.get('format_version')}, expected {FORMAT_VERSION}"
        )
    try:
        members = [load_model(path.parent / rel) for rel in doc["member_paths"]]
        scaler = None
        if doc.get("scaler") is not None:
            scaler = FeatureScaler()
            scaler.mean_ = np.array(doc["scaler"]["mean"], dtype=np.float64)
            scaler.scale_ = np.array(doc["scaler"]["std"], dtype=np.float64)
        return WeightedVoteEnsemble(members, doc["weights"], doc["weight_basis"], scaler)
    except KeyError as exc:
        raise EnsembleFormatError(f"{path}: missing field {exc}") from exc
