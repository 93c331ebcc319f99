"""Versioned JSON model files with canonical, byte-stable serialization.

Document layout: ``{format_version, kind, hyperparams, seed, parameters}``.
Floats are emitted by ``repr`` (via json), so every value round-trips
bit-exactly; keys are sorted and separators fixed, so retraining with
identical inputs yields identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bayes import GaussianNbClassifier
from .forest import RandomForestClassifier
from .svm import (
    CrammerSingerSvmClassifier,
    LinearSvmClassifier,
    PolySvmClassifier,
    RbfSvmClassifier,
    _BudgetedKernelMachine,
)

FORMAT_VERSION = 1

KIND_TO_CLASS = {
    "SvmLinear": LinearSvmClassifier,
    "SvmPoly": PolySvmClassifier,
    "SvmRbf": RbfSvmClassifier,
    "SvmCrammerSinger": CrammerSingerSvmClassifier,
    "RandomForest": RandomForestClassifier,
    "NaiveBayes": GaussianNbClassifier,
}
CLASS_TO_KIND = {cls: kind for kind, cls in KIND_TO_CLASS.items()}


class CorruptModelError(ValueError):
    """Model file is unreadable or structurally wrong."""


class VersionMismatchError(ValueError):
    """Model file was written by a different format version."""


def kind_of(model) -> str:
    try:
        return CLASS_TO_KIND[type(model)]
    except KeyError:
        raise TypeError(f"unknown model type {type(model).__name__}") from None


def _floats(arr) -> list:
    return np.asarray(arr, dtype=np.float64).tolist()


def _export_parameters(model) -> dict:
    params: dict = {
        "classes": [int(c) for c in model.classes_],
        "n_features": int(model.n_features_in_),
    }
    if isinstance(model, (LinearSvmClassifier, CrammerSingerSvmClassifier)):
        params["coef"] = _floats(model.coef_)
        params["intercept"] = _floats(model.intercept_)
        params["loss_curve"] = _floats(model.loss_curve_)
    elif isinstance(model, (PolySvmClassifier, RbfSvmClassifier)):
        params["machines"] = [
            {
                "support": _floats(m.support[: m.count]),
                "alpha": _floats(m.alpha[: m.count]),
                "bias": float(m.bias),
            }
            for m in model.machines_
        ]
        if isinstance(model, RbfSvmClassifier):
            params["gamma_resolved"] = float(model.gamma_)
    elif isinstance(model, RandomForestClassifier):
        params["trees"] = model.trees_
    elif isinstance(model, GaussianNbClassifier):
        params["priors"] = _floats(model.priors_)
        params["means"] = _floats(model.means_)
        params["vars"] = _floats(model.vars_)
    else:  # pragma: no cover
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return params


def _import_parameters(model, params: dict) -> None:
    model.classes_ = np.array(params["classes"], dtype=np.int64)
    model.n_features_in_ = int(params["n_features"])
    if isinstance(model, (LinearSvmClassifier, CrammerSingerSvmClassifier)):
        model.coef_ = np.array(params["coef"], dtype=np.float64)
        model.intercept_ = np.array(params["intercept"], dtype=np.float64)
        model.loss_curve_ = list(params["loss_curve"])
    elif isinstance(model, (PolySvmClassifier, RbfSvmClassifier)):
        if isinstance(model, RbfSvmClassifier):
            model.gamma_ = float(params["gamma_resolved"])
        machines = []
        d = model.n_features_in_
        for spec in params["machines"]:
            m = _BudgetedKernelMachine(model._kernel, model.budget)
            m.init(d)
            sup = np.array(spec["support"], dtype=np.float64).reshape(-1, d)
            m.count = sup.shape[0]
            m.support[: m.count] = sup
            m.alpha[: m.count] = np.array(spec["alpha"], dtype=np.float64)
            m.bias = float(spec["bias"])
            machines.append(m)
        model.machines_ = machines
    elif isinstance(model, RandomForestClassifier):
        model.trees_ = params["trees"]
    elif isinstance(model, GaussianNbClassifier):
        model.priors_ = np.array(params["priors"], dtype=np.float64)
        model.means_ = np.array(params["means"], dtype=np.float64)
        model.vars_ = np.array(params["vars"], dtype=np.float64)
    else:  # pragma: no cover
        raise TypeError(f"cannot deserialize {type(model).__name__}")


def model_to_bytes(model) -> bytes:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind_of(model),
        "hyperparams": model.get_params(),
        "seed": int(model.random_state),
        "parameters": _export_parameters(model),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(model, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path):
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorruptModelError(f"{path}: unparsable model file") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptModelError(f"{path}: missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format_version {doc['format_version']}, this build reads {FORMAT_VERSION}"
        )
    try:
        cls = KIND_TO_CLASS[doc["kind"]]
        model = cls(**doc["hyperparams"])
        _import_parameters(model, doc["parameters"])
    except (KeyError, TypeError, IndexError) as exc:
        raise CorruptModelError(f"{path}: malformed model document ({exc})") from exc
    return model
