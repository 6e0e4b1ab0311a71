"""CART decision trees with weighted (multiset) training samples."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels

QUALITIES = {"gini": _kernels.GINI, "entropy": _kernels.ENTROPY}
SUBSETS = ("sqrt", "log2", "all")


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    split_quality: str = "gini"
    feature_subset: str = "sqrt"

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.split_quality not in QUALITIES:
            raise ValueError(f"unknown split quality {self.split_quality!r}")
        if self.feature_subset not in SUBSETS:
            raise ValueError(f"unknown feature subset rule {self.feature_subset!r}")

    def n_candidate_features(self, n_features: int) -> int:
        if self.feature_subset == "sqrt":
            return max(1, math.isqrt(n_features))
        if self.feature_subset == "log2":
            return max(1, int(math.floor(math.log2(n_features))))
        return n_features


def impurity(class_counts, quality="gini") -> float:
    """Gini impurity or Shannon entropy (bits) of a class-count vector."""
    counts = np.asarray(class_counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("impurity of an empty node is undefined")
    return float(_kernels.node_impurity(counts, total, QUALITIES[quality]))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    weighted_child_impurity: float


def best_split(X, y, rows, features, quality="gini", min_samples_leaf=1, n_classes=None):
    """Greedy CART split search over ``features`` for the multiset ``rows``.

    ``rows`` may repeat indices; a row appearing m times weighs m.  Returns
    a :class:`Split`, or ``None`` when the node is pure or no threshold
    satisfies the leaf-size rule.  A zero-gain split is still returned:
    XOR-like layouts need one to make progress, and recursion terminates
    anyway because both children are non-empty.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    w = np.bincount(np.asarray(rows, dtype=np.int64), minlength=X.shape[0]).astype(np.float64)
    unique_rows = np.flatnonzero(w)
    feats = np.unique(np.asarray(features, dtype=np.int64))
    code = QUALITIES[quality]
    f, t, imp = _kernels.find_split(np.ascontiguousarray(X.T), y, w, unique_rows, feats, n_classes, code,
                                    float(min_samples_leaf))
    if f < 0 or np.unique(y[unique_rows]).size < 2:
        return None
    return Split(int(f), float(t), float(imp))


class DecisionTree:
    """A fitted tree stored as flat node arrays.

    Node 0 is the root.  For an internal node ``k``, rows with
    ``x[feature[k]] <= threshold[k]`` go to ``left[k]``; leaves carry
    ``feature[k] == -1`` and the (weighted) class counts in ``value[k]``.
    """

    def __init__(self, feature, threshold, left, right, value, config: TreeConfig, n_features: int):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.config = config
        self.n_features = n_features

    @property
    def n_classes(self) -> int:
        return self.value.shape[1]

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for k in range(self.node_count):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return _kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict_proba(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.zeros((X.shape[0], self.n_classes))
        _kernels.accumulate_proba(X, self.feature, self.threshold, self.left, self.right,
                                  self.value, out)
        return out

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"class_counts": self.value[node].tolist()}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    def state(self) -> dict:
        return {
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict, config: TreeConfig) -> DecisionTree:
        return cls(np.asarray(state["feature"], dtype=np.int64),
                   np.asarray(state["threshold"], dtype=np.float64),
                   np.asarray(state["left"], dtype=np.int64),
                   np.asarray(state["right"], dtype=np.int64),
                   np.asarray(state["value"], dtype=np.float64).reshape(len(state["feature"]), -1),
                   config, state["n_features"])


def _check_X(X, n_features):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    return X


def fit_weighted(X, y, weights, n_classes, config: TreeConfig, rng, Xt=None) -> DecisionTree:
    """Fit on rows with positive integer ``weights`` (the bootstrap counts).

    ``Xt`` optionally supplies ``X.T`` in C order so callers fitting many
    trees on the same matrix transpose it only once.
    """
    if Xt is None:
        Xt = np.ascontiguousarray(X.T)
    rows = np.flatnonzero(weights)
    if rows.size == 0:
        raise ValueError("cannot fit a tree on an empty sample")
    max_depth = -1 if config.max_depth is None else config.max_depth
    arrays = _kernels.grow_tree(X, Xt, y, weights, rows, n_classes,
                                QUALITIES[config.split_quality], max_depth,
                                float(config.min_samples_split), float(config.min_samples_leaf),
                                config.n_candidate_features(X.shape[1]), rng)
    return DecisionTree(*arrays, config=config, n_features=X.shape[1])


def fit_tree(ds, sample_indices, config: TreeConfig, rng) -> DecisionTree:
    """Fit a tree on the multiset ``sample_indices`` of rows of ``ds``.

    ``rng`` is a :class:`numpy.random.Generator`; it drives the per-node
    feature subsets.
    """
    idx = np.asarray(sample_indices, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("sample_indices is empty")
    if idx.min() < 0 or idx.max() >= ds.n_samples:
        raise IndexError("sample index out of range")
    w = np.bincount(idx, minlength=ds.n_samples).astype(np.float64)
    return fit_weighted(ds.features, ds.labels, w, ds.n_classes, config, rng)


def predict_tree(tree: DecisionTree, x) -> np.ndarray:
    """Class-probability vector for a single feature vector."""
    return tree.predict_proba(np.asarray(x, dtype=float).reshape(1, -1))[0]


def config_dict(config: TreeConfig) -> dict:
    return asdict(config)
