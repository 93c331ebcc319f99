"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError


class DimensionMismatchError(ValueError):
    """Probe dimensionality disagrees with the fitted model."""


def check_feature_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"feature matrix must be non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix holds non-finite values")
    return X


def check_X_y(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = check_feature_matrix(X)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(
            f"labels shape {y.shape} does not match {X.shape[0]} samples"
        )
    return X, y.astype(np.int64)


def check_is_fitted(estimator, attr: str = "classes_") -> None:
    if not hasattr(estimator, attr):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )


def check_probe_dim(estimator, X: np.ndarray) -> None:
    if X.shape[1] != estimator.n_features_in_:
        raise DimensionMismatchError(
            f"probe has {X.shape[1]} features, model was trained with "
            f"{estimator.n_features_in_}"
        )
