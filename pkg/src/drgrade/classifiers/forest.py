"""Random forest built from scratch: bootstrap, random feature subsets, Gini."""

from __future__ import annotations

import math

import numpy as np

from .base import SeverityClassifier, argmax_severity


def _gini_split_gain(col: np.ndarray, y_idx: np.ndarray, k: int):
    """Best threshold on one feature by weighted child Gini impurity.

    Returns (impurity, threshold) or None when the column is constant.
    Thresholds are midpoints between consecutive distinct sorted values;
    a sample goes left when value <= threshold.
    """
    order = np.argsort(col, kind="stable")
    sv = col[order]
    sy = y_idx[order]
    n = sv.size
    boundaries = np.nonzero(sv[1:] > sv[:-1])[0]  # split after position i
    if boundaries.size == 0:
        return None

    onehot = np.zeros((n, k))
    onehot[np.arange(n), sy] = 1.0
    left_counts = np.cumsum(onehot, axis=0)[boundaries]  # (m, k)
    total = onehot.sum(axis=0)
    right_counts = total[None, :] - left_counts

    n_left = left_counts.sum(axis=1)
    n_right = n - n_left
    gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
    gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
    weighted = (n_left * gini_left + n_right * gini_right) / n

    best = int(np.argmin(weighted))
    cut = boundaries[best]
    threshold = (sv[cut] + sv[cut + 1]) / 2.0
    return float(weighted[best]), threshold


class _TreeBuilder:
    def __init__(self, max_depth, max_features, k, rng):
        self.max_depth = max_depth
        self.max_features = max_features
        self.k = k
        self.rng = rng

    def build(self, X, y_idx, depth):
        counts = np.bincount(y_idx, minlength=self.k)
        if (
            (self.max_depth is not None and depth >= self.max_depth)
            or counts.max() == y_idx.size
            or y_idx.size < 2
        ):
            return {"leaf": counts.tolist()}

        d = X.shape[1]
        feats = self.rng.choice(d, size=min(self.max_features, d), replace=False)
        best = None
        for f in feats:
            res = _gini_split_gain(X[:, f], y_idx, self.k)
            if res is None:
                continue
            impurity, threshold = res
            if best is None or impurity < best[0]:
                best = (impurity, int(f), threshold)
        if best is None:
            return {"leaf": counts.tolist()}

        _, f, threshold = best
        left = X[:, f] <= threshold
        return {
            "f": f,
            "t": threshold,
            "l": self.build(X[left], y_idx[left], depth + 1),
            "r": self.build(X[~left], y_idx[~left], depth + 1),
        }


def _tree_leaf_counts(node, x):
    while "leaf" not in node:
        node = node["l"] if x[node["f"]] <= node["t"] else node["r"]
    return node["leaf"]


class RandomForestClassifier(SeverityClassifier):
    """Bagged Gini trees with sqrt(d) features considered per node.

    A single-tree forest skips the bootstrap so it degenerates to one
    plain decision tree that memorizes any consistent training set.
    max_depth=None grows unbounded trees.
    """

    def __init__(self, n_trees=100, max_depth=16, random_state=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.random_state = random_state

    def _fit(self, X, y, rng):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        n, d = X.shape
        k = self.classes_.size
        y_idx = np.searchsorted(self.classes_, y)
        max_features = max(1, math.ceil(math.sqrt(d)))

        trees = []
        for _ in range(self.n_trees):
            tree_rng = np.random.default_rng(rng.integers(0, 2**63))
            if self.n_trees == 1:
                Xb, yb = X, y_idx
            else:
                idx = tree_rng.integers(0, n, size=n)
                Xb, yb = X[idx], y_idx[idx]
            builder = _TreeBuilder(self.max_depth, max_features, k, tree_rng)
            trees.append(builder.build(Xb, yb, 0))
        self.trees_ = trees

    def _decision_scores(self, X):
        # Integer vote tallies: exactly invariant to tree-list permutation.
        votes = np.zeros((X.shape[0], self.classes_.size), dtype=np.int64)
        for tree in self.trees_:
            for i, x in enumerate(X):
                counts = _tree_leaf_counts(tree, x)
                votes[i, argmax_severity(np.array(counts), np.arange(len(counts)))] += 1
        return votes
