"""Gaussian naive Bayes with per-class, per-dimension fits."""

from __future__ import annotations

import numpy as np

from .base import SeverityClassifier
from ..validation import check_is_fitted

VAR_FLOOR = 1e-9


class GaussianNbClassifier(SeverityClassifier):
    def __init__(self, var_floor=VAR_FLOOR, random_state=0):
        self.var_floor = var_floor
        self.random_state = random_state

    def _fit(self, X, y, rng):
        if self.var_floor <= 0:
            raise ValueError(f"var_floor must be positive, got {self.var_floor}")
        k = self.classes_.size
        d = X.shape[1]
        self.priors_ = np.zeros(k)
        self.means_ = np.zeros((k, d))
        self.vars_ = np.zeros((k, d))
        for ci, cls in enumerate(self.classes_):
            rows = X[y == cls]
            self.priors_[ci] = rows.shape[0] / X.shape[0]
            self.means_[ci] = rows.mean(axis=0)
            self.vars_[ci] = np.maximum(rows.var(axis=0), self.var_floor)

    def _log_joint(self, X):
        out = np.zeros((X.shape[0], self.classes_.size))
        for ci in range(self.classes_.size):
            diff = X - self.means_[ci]
            log_pdf = -0.5 * (
                np.log(2.0 * np.pi * self.vars_[ci]) + diff**2 / self.vars_[ci]
            )
            out[:, ci] = np.log(self.priors_[ci]) + log_pdf.sum(axis=1)
        return out

    def _decision_scores(self, X):
        return self._log_joint(X)

    def predict_proba(self, X) -> np.ndarray:
        """Posterior per class; rows sum to 1."""
        check_is_fitted(self)
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        log_joint = self._log_joint(X)
        shifted = log_joint - log_joint.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        return probs / probs.sum(axis=1, keepdims=True)
