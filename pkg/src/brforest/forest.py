"""Random forests with an arbitrary positive bootstrap rate.

Tree ``i`` of a forest seeded with ``seed`` draws all of its randomness
(bootstrap sample, then per-node feature subsets) from
``numpy.random.default_rng([seed, i])``.  NumPy's ``SeedSequence`` hashes
the pair into an independent 128-bit PCG64 state, so every tree's stream
is fixed regardless of the order or thread in which trees are grown.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from .tree import DecisionTree, TreeConfig, _check_X, fit_weighted

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    tree: TreeConfig = field(default_factory=TreeConfig)
    bootstrap_rate: float = 1.0
    seed: int = 0
    name: str = "RF(base)"
    voting: str = "soft"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not self.bootstrap_rate > 0:
            raise ValueError("bootstrap_rate must be positive")
        if self.voting not in ("soft", "hard"):
            raise ValueError("voting must be 'soft' or 'hard'")

    def with_br(self, br: float) -> ForestConfig:
        return replace(self, bootstrap_rate=br)

    def with_seed(self, seed: int) -> ForestConfig:
        return replace(self, seed=seed)


def bootstrap_size(n_rows: int, br: float) -> int:
    # round half away from zero; both factors are positive
    return int(math.floor(br * n_rows + 0.5))


def bootstrap_sample(n_rows: int, br: float, rng) -> np.ndarray:
    """Draw ``round(br * n_rows)`` row indices uniformly with replacement."""
    if n_rows < 1 or not br > 0:
        raise ValueError("need n_rows >= 1 and br > 0")
    m = bootstrap_size(n_rows, br)
    if m == 0:
        raise ValueError("empty bootstrap: br * n_rows rounds to 0")
    return rng.integers(0, n_rows, size=m)


def tree_rng(seed: int, index: int):
    return np.random.default_rng([seed, index])


class RandomForest:
    def __init__(self, trees, n_classes: int, config: ForestConfig):
        self.trees = trees
        self.n_classes = n_classes
        self.config = config

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def predict_proba(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.zeros((X.shape[0], self.n_classes))
        if self.config.voting == "soft":
            for t in self.trees:
                _kernels.accumulate_proba(X, t.feature, t.threshold, t.left, t.right, t.value, out)
        else:
            rows = np.arange(X.shape[0])
            for t in self.trees:
                leaves = _kernels.apply_tree(X, t.feature, t.threshold, t.left, t.right)
                out[rows, t.value[leaves].argmax(axis=1)] += 1.0
        return out / len(self.trees)

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class id on ties
        return self.predict_proba(X).argmax(axis=1)

    def to_json(self) -> str:
        cfg = asdict(self.config)
        return json.dumps({
            "format": "brforest.RandomForest",
            "version": FORMAT_VERSION,
            "n_classes": self.n_classes,
            "config": cfg,
            "trees": [t.state() for t in self.trees],
        })

    @classmethod
    def from_json(cls, text: str) -> RandomForest:
        doc = json.loads(text)
        if doc.get("format") != "brforest.RandomForest" or doc.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported forest file")
        c = doc["config"]
        config = ForestConfig(c["n_trees"], TreeConfig(**c["tree"]), c["bootstrap_rate"],
                              c["seed"], c["name"], c["voting"])
        trees = [DecisionTree.from_state(s, config.tree) for s in doc["trees"]]
        return cls(trees, doc["n_classes"], config)


def _fit_one(X, Xt, y, n_classes, config: ForestConfig, index: int) -> DecisionTree:
    rng = tree_rng(config.seed, index)
    idx = bootstrap_sample(X.shape[0], config.bootstrap_rate, rng)
    w = np.bincount(idx, minlength=X.shape[0]).astype(np.float64)
    return fit_weighted(X, y, w, n_classes, config.tree, rng, Xt)


def fit_arrays(X, y, n_classes: int, config: ForestConfig, n_jobs: int = 1, Xt=None) -> RandomForest:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if Xt is None:
        Xt = np.ascontiguousarray(X.T)
    if n_jobs > 1 and config.n_trees > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(lambda i: _fit_one(X, Xt, y, n_classes, config, i),
                                  range(config.n_trees)))
    else:
        trees = [_fit_one(X, Xt, y, n_classes, config, i) for i in range(config.n_trees)]
    return RandomForest(trees, n_classes, config)


def fit_forest(ds, config: ForestConfig, n_jobs: int = 1) -> RandomForest:
    """Grow ``config.n_trees`` trees, each on its own bootstrap multiset of ``ds``."""
    return fit_arrays(ds.features, ds.labels, ds.n_classes, config, n_jobs)


def predict_forest(rf: RandomForest, x):
    """Return ``(label, proba)`` for a single feature vector."""
    proba = rf.predict_proba(np.asarray(x, dtype=float).reshape(1, -1))[0]
    return int(proba.argmax()), proba


def named_configs(seed: int = 0) -> list[ForestConfig]:
    """RF(base) followed by its 17 single-hyperparameter variants."""
    base = TreeConfig()
    out = [ForestConfig(name="RF(base)", seed=seed)]
    for nt in (200, 500):
        out.append(ForestConfig(n_trees=nt, name=f"RF(nt_{nt})", seed=seed))
    for md in (10, 15, 20, 25):
        out.append(ForestConfig(tree=replace(base, max_depth=md), name=f"RF(md_{md})", seed=seed))
    out.append(ForestConfig(tree=replace(base, split_quality="entropy"), name="RF(qs_ent)", seed=seed))
    for mn in (3, 4, 6, 8):
        out.append(ForestConfig(tree=replace(base, min_samples_split=mn), name=f"RF(mn_{mn})", seed=seed))
    for ml in (2, 3, 4, 5):
        out.append(ForestConfig(tree=replace(base, min_samples_leaf=ml), name=f"RF(ml_{ml})", seed=seed))
    out.append(ForestConfig(tree=replace(base, feature_subset="log2"), name="RF(nf_log)", seed=seed))
    out.append(ForestConfig(tree=replace(base, feature_subset="all"), name="RF(nf_all)", seed=seed))
    return out


def config_by_name(name: str) -> ForestConfig:
    for cfg in named_configs():
        if cfg.name == name:
            return cfg
    raise KeyError(f"unknown configuration {name!r}")
