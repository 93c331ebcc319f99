"""Support vector machines trained by stochastic subgradient descent.

Three flavors:
  - linear one-vs-rest hinge loss;
  - kernelized one-vs-rest (polynomial / RBF) with a budgeted support set,
    trimmed by dropping the smallest-magnitude coefficient;
  - Crammer-Singer natively multiclass hinge.

All use L2 regularization with lambda = 1 / (C * n) and the step size
lr / (1 + lr * lambda * t), which decays like 1/t. Epoch-wise average
hinge loss is recorded in ``loss_curve_``.
"""

from __future__ import annotations

import numpy as np

from .base import SeverityClassifier

SUPPORT_BUDGET = 2000


def _epoch_order(rng, n: int) -> np.ndarray:
    return rng.permutation(n)


class LinearSvmClassifier(SeverityClassifier):
    """One-vs-rest linear SVM on standardized features."""

    def __init__(self, C=1.0, epochs=30, learning_rate=1e-3, random_state=0):
        self.C = C
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _fit(self, X, y, rng):
        if self.C <= 0 or self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("degenerate hyperparameters for linear SVM")
        n, d = X.shape
        k = self.classes_.size
        lam = 1.0 / (self.C * n)
        W = np.zeros((k, d))
        b = np.zeros(k)
        targets = np.where(y[:, None] == self.classes_[None, :], 1.0, -1.0)

        lr0 = self.learning_rate
        t = 0
        curve = []
        for _ in range(self.epochs):
            for i in _epoch_order(rng, n):
                t += 1
                eta = lr0 / (1.0 + lr0 * lam * t)
                xi = X[i]
                margins = targets[i] * (W @ xi + b)
                W *= 1.0 - eta * lam
                violated = margins < 1.0
                if violated.any():
                    W[violated] += eta * targets[i, violated, None] * xi[None, :]
                    b[violated] += eta * targets[i, violated]
            hinge = np.maximum(0.0, 1.0 - targets * (X @ W.T + b)).sum(axis=1)
            curve.append(float(hinge.mean()))

        self.coef_ = W
        self.intercept_ = b
        self.loss_curve_ = curve

    def _decision_scores(self, X):
        return X @ self.coef_.T + self.intercept_


class _BudgetedKernelMachine:
    """One binary kernel-SGD machine with a capped support set."""

    def __init__(self, kernel_fn, budget: int):
        self.kernel_fn = kernel_fn
        self.budget = budget
        self.support = None  # (m, d)
        self.alpha = None  # (m,)
        self.count = 0
        self.bias = 0.0

    def init(self, d: int):
        self.support = np.zeros((self.budget, d))
        self.alpha = np.zeros(self.budget)
        self.count = 0
        self.bias = 0.0

    def raw_score(self, x: np.ndarray) -> float:
        if self.count == 0:
            return self.bias
        kvals = self.kernel_fn(self.support[: self.count], x[None, :]).reshape(-1)
        return float(self.alpha[: self.count] @ kvals + self.bias)

    def step(self, x: np.ndarray, target: float, eta: float, lam: float):
        score = self.raw_score(x)
        self.alpha[: self.count] *= 1.0 - eta * lam
        if target * score < 1.0:
            if self.count == self.budget:
                drop = int(np.argmin(np.abs(self.alpha[: self.count])))
                last = self.count - 1
                self.support[drop] = self.support[last]
                self.alpha[drop] = self.alpha[last]
                self.count = last
            self.support[self.count] = x
            self.alpha[self.count] = eta * target
            self.count += 1
            self.bias += eta * target

    def batch_scores(self, X: np.ndarray) -> np.ndarray:
        if self.count == 0:
            return np.full(X.shape[0], self.bias)
        K = self.kernel_fn(self.support[: self.count], X)  # (m, n)
        return self.alpha[: self.count] @ K + self.bias


class _KernelSvmBase(SeverityClassifier):
    budget = SUPPORT_BUDGET

    def _kernel(self, A, B):  # pragma: no cover - abstract
        raise NotImplementedError

    def _check_hp(self):
        if self.C <= 0 or self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("degenerate hyperparameters for kernel SVM")

    def _fit(self, X, y, rng):
        self._check_hp()
        n, d = X.shape
        lam = 1.0 / (self.C * n)
        machines = [
            _BudgetedKernelMachine(self._kernel, self.budget) for _ in self.classes_
        ]
        for m in machines:
            m.init(d)
        targets = np.where(y[:, None] == self.classes_[None, :], 1.0, -1.0)

        lr0 = self.learning_rate
        t = 0
        for _ in range(self.epochs):
            for i in _epoch_order(rng, n):
                t += 1
                eta = lr0 / (1.0 + lr0 * lam * t)
                for ci, machine in enumerate(machines):
                    machine.step(X[i], targets[i, ci], eta, lam)

        self.machines_ = machines

    def _decision_scores(self, X):
        return np.column_stack([m.batch_scores(X) for m in self.machines_])


class PolySvmClassifier(_KernelSvmBase):
    """One-vs-rest SVM with kernel (x . z + coef0)^degree."""

    def __init__(self, C=1.0, degree=3, coef0=1.0, epochs=30, learning_rate=1e-3,
                 random_state=0):
        self.C = C
        self.degree = degree
        self.coef0 = coef0
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _kernel(self, A, B):
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        return (A @ B.T + self.coef0) ** self.degree


class RbfSvmClassifier(_KernelSvmBase):
    """One-vs-rest SVM with kernel exp(-gamma ||x - z||^2).

    gamma=None resolves to 1/d at fit time.
    """

    def __init__(self, C=1.0, gamma=None, epochs=30, learning_rate=1e-3,
                 random_state=0):
        self.C = C
        self.gamma = gamma
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _fit(self, X, y, rng):
        self.gamma_ = 1.0 / X.shape[1] if self.gamma is None else float(self.gamma)
        if self.gamma_ <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma_}")
        super()._fit(X, y, rng)

    def _kernel(self, A, B):
        sq = (
            np.sum(A * A, axis=1)[:, None]
            - 2.0 * (A @ B.T)
            + np.sum(B * B, axis=1)[None, :]
        )
        return np.exp(-self.gamma_ * np.maximum(sq, 0.0))


class CrammerSingerSvmClassifier(SeverityClassifier):
    """Natively multiclass SVM with the Crammer-Singer hinge.

    Per sample the most-offending wrong class r = argmax_{c != y} s_c is
    pushed down while the true class is pushed up whenever
    1 + s_r - s_y > 0.
    """

    def __init__(self, C=1.0, epochs=30, learning_rate=1e-3, random_state=0):
        self.C = C
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _fit(self, X, y, rng):
        if self.C <= 0 or self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("degenerate hyperparameters for Crammer-Singer SVM")
        n, d = X.shape
        k = self.classes_.size
        lam = 1.0 / (self.C * n)
        W = np.zeros((k, d))
        b = np.zeros(k)
        y_idx = np.searchsorted(self.classes_, y)

        lr0 = self.learning_rate
        t = 0
        curve = []
        for _ in range(self.epochs):
            for i in _epoch_order(rng, n):
                t += 1
                eta = lr0 / (1.0 + lr0 * lam * t)
                xi = X[i]
                yi = y_idx[i]
                scores = W @ xi + b
                scores_other = scores.copy()
                scores_other[yi] = -np.inf
                r = int(np.argmax(scores_other))
                W *= 1.0 - eta * lam
                if 1.0 + scores[r] - scores[yi] > 0.0:
                    W[yi] += eta * xi
                    W[r] -= eta * xi
                    b[yi] += eta
                    b[r] -= eta
            S = X @ W.T + b
            true_scores = S[np.arange(n), y_idx]
            S_masked = S.copy()
            S_masked[np.arange(n), y_idx] = -np.inf
            losses = np.maximum(0.0, 1.0 + S_masked.max(axis=1) - true_scores)
            curve.append(float(losses.mean()))

        self.coef_ = W
        self.intercept_ = b
        self.loss_curve_ = curve

    def _decision_scores(self, X):
        return X @ self.coef_.T + self.intercept_
