"""Shared estimator plumbing: fit scaffolding and severity-biased argmax."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ..validation import check_is_fitted, check_probe_dim, check_X_y


class MissingClassError(ValueError):
    """The training split lacks a class the caller requires."""


def argmax_severity(scores: np.ndarray, classes: np.ndarray) -> int:
    """Class with the highest score; exact ties go to the higher severity.

    In a screening setting a false referral is safer than a false
    clearance, so every tie in the pipeline resolves upward.
    """
    best = scores.max()
    return int(classes[scores == best].max())


class SeverityClassifier(BaseEstimator, ClassifierMixin):
    """Base for the from-scratch learners.

    Subclasses implement ``_fit(X, y, rng)`` and
    ``_decision_scores(X) -> (n, n_classes)``; prediction is the
    severity-biased argmax over those scores.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise MissingClassError(
                f"training data holds {self.classes_.size} class, need at least 2"
            )
        self.n_features_in_ = X.shape[1]
        rng = np.random.default_rng(self.random_state)
        self._fit(X, y, rng)
        return self

    def decision_scores(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        check_probe_dim(self, X)
        return self._decision_scores(X)

    def predict(self, X) -> np.ndarray:
        scores = self.decision_scores(X)
        return np.array(
            [argmax_severity(row, self.classes_) for row in scores], dtype=np.int64
        )

    def _fit(self, X, y, rng):  # pragma: no cover - abstract
        raise NotImplementedError

    def _decision_scores(self, X):  # pragma: no cover - abstract
        raise NotImplementedError
