"""Nearest-neighbour class-structure statistics and the BR-regime classifier.

``k_l`` is the share (in percent) of observations for which exactly ``l``
of their ``k`` nearest neighbours, under the Manhattan metric, carry the
observation's own class.  Ten neighbourhood sizes give 65 base features,
which are optionally scaled by the class count and combined pairwise.
"""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset, neighborhood_scale
from .experiment import cell_seed
from .forest import ForestConfig, fit_arrays
from .stats import spearman_columns

MAX_K = 10
LE1 = "LE1"
GT1 = "GT1"


def kl_names(max_k: int = MAX_K) -> list[str]:
    return [f"{k}_{l}" for k in range(1, max_k + 1) for l in range(k + 1)]


@dataclass
class KLStats:
    dataset: str
    n_classes: int
    table: np.ndarray  # [k - 1, l], zero where l > k

    def __getitem__(self, kl):
        k, l = kl
        if not (1 <= k <= self.table.shape[0] and 0 <= l <= k):
            raise KeyError(kl)
        return float(self.table[k - 1, l])

    @property
    def names(self) -> list[str]:
        return kl_names(self.table.shape[0])

    def vector(self) -> np.ndarray:
        return np.array([self.table[k - 1, l] for k in range(1, self.table.shape[0] + 1)
                         for l in range(k + 1)])


def nearest_neighbors(X, n_neighbors: int, block: int = 256) -> np.ndarray:
    """Indices of each row's nearest other rows under the L1 metric.

    Equal distances are ordered by row index.
    """
    n = X.shape[0]
    out = np.empty((n, n_neighbors), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(n, start + block)
        d = np.abs(X[start:stop, None, :] - X[None, :, :]).sum(axis=2)
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(d, axis=1, kind="stable")
        out[start:stop] = order[:, :n_neighbors]
    return out


def kl_statistics(ds: Dataset, max_k: int = MAX_K) -> KLStats:
    """Normalized k_l table of a dataset already passed through ``neighborhood_scale``."""
    n = ds.n_samples
    if n <= max_k:
        raise ValueError(f"need more than {max_k} observations, got {n}")
    nb = nearest_neighbors(ds.features, max_k)
    same = ds.labels[nb] == ds.labels[:, None]
    hits = np.cumsum(same, axis=1)  # hits[i, k-1] = same-class among first k
    table = np.zeros((max_k, max_k + 1))
    for k in range(1, max_k + 1):
        table[k - 1, : k + 1] = np.bincount(hits[:, k - 1], minlength=k + 1)[: k + 1]
    table *= 100.0 / n
    return KLStats(ds.name, ds.n_classes, table)


def dataset_kl(ds: Dataset, max_k: int = MAX_K) -> KLStats:
    return kl_statistics(neighborhood_scale(ds), max_k)


def class_scaled_features(kl: KLStats) -> tuple[np.ndarray, list[str]]:
    return kl.vector() * kl.n_classes, [f"{n}*C" for n in kl.names]


def interaction_names(names) -> list[str]:
    out = []
    for f, g in itertools.combinations(names, 2):
        out += [f"{f}/{g}", f"{g}/{f}", f"{f}-{g}", f"{g}-{f}", f"{f}*{g}", f"{f}+{g}"]
    for f in names:
        out += [f"{f}*{f}", f"{f}+{f}"]
    return out


def interaction_features(values, names) -> tuple[np.ndarray, list[str]]:
    """Pairwise ratios, differences, products and sums, plus squares and doubles.

    Works on a single vector or row-wise on a matrix.  A division by zero
    yields NaN, which downstream ranking treats as missing.
    """
    v = np.asarray(values, dtype=float)
    single = v.ndim == 1
    V = v[None, :] if single else v
    n = V.shape[1]
    if n != len(names):
        raise ValueError("one name per value required")
    ia, ib = np.triu_indices(n, k=1)
    f, g = V[:, ia], V[:, ib]
    with np.errstate(divide="ignore", invalid="ignore"):
        f_g = np.where(g != 0, f / np.where(g != 0, g, 1.0), np.nan)
        g_f = np.where(f != 0, g / np.where(f != 0, f, 1.0), np.nan)
    pair = np.stack([f_g, g_f, f - g, g - f, f * g, f + g], axis=2).reshape(V.shape[0], -1)
    out = np.hstack([pair, np.stack([V * V, V + V], axis=2).reshape(V.shape[0], -1)])
    return (out[0] if single else out), interaction_names(names)


@dataclass
class MetaFeatureMatrix:
    datasets: list[str]
    names: list[str]
    values: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset"] + self.names)
        for d, row in zip(self.datasets, self.values):
            w.writerow([d] + ["" if np.isnan(v) else repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> MetaFeatureMatrix:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        vals = np.array([[np.nan if c == "" else float(c) for c in r[1:]] for r in rows[1:]])
        return cls([r[0] for r in rows[1:]], rows[0][1:], vals.reshape(len(rows) - 1, -1))


def build_meta_matrix(kls, class_scaled: bool = False, interactions: bool = True) -> MetaFeatureMatrix:
    """Stack per-dataset k_l vectors, optionally adding derived columns."""
    base = np.array([kl.vector() for kl in kls])
    names = list(kls[0].names)
    blocks = [base]
    if class_scaled:
        C = np.array([kl.n_classes for kl in kls], dtype=float)[:, None]
        blocks.append(base * C)
        names += [f"{n}*C" for n in kls[0].names]
    if interactions:
        inter, inter_names = interaction_features(base, kls[0].names)
        blocks.append(inter)
        names += inter_names
    return MetaFeatureMatrix([kl.dataset for kl in kls], names, np.hstack(blocks))


def correlation_table(matrix: MetaFeatureMatrix, targets: dict) -> dict[str, np.ndarray]:
    """Spearman rho of every feature with every target column.

    ``targets`` maps a target name (e.g. ``"best"`` or a configuration name)
    to per-dataset values aligned with ``matrix.datasets``.  Undefined
    coefficients (constant columns) are NaN.
    """
    if len(matrix.datasets) < 3:
        raise ValueError("need at least three datasets")
    return {name: spearman_columns(matrix.values, np.asarray(y, dtype=float))
            for name, y in targets.items()}


def correlation_csv(matrix: MetaFeatureMatrix, table: dict, rows=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature"] + list(table))
    idx = range(len(matrix.names)) if rows is None else [matrix.names.index(r) for r in rows]
    for i in idx:
        w.writerow([matrix.names[i]] + ["" if np.isnan(col[i]) else f"{col[i]:.6f}" for col in table.values()])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# regime classifier


@dataclass(frozen=True)
class RegimeLabel:
    dataset: str
    value: str  # LE1 or GT1


def regime_labels(reports, p_threshold=None) -> list[RegimeLabel]:
    """GT1 when the winning BR exceeds 1; optionally keep only undisputed winners."""
    if not reports:
        raise ValueError("need at least one report")
    out = []
    for r in reports:
        if p_threshold is not None and (r.max_p_value is None or r.max_p_value > p_threshold):
            continue
        out.append(RegimeLabel(r.dataset, GT1 if r.best_br > 1 else LE1))
    return out


def leave_two_out_splits(labels) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """Hold out one dataset of each regime at a time, over all cross pairs."""
    values = [lab.value for lab in labels]
    if len(set(values)) != 2:
        raise ValueError("both regimes must be present")
    n = len(values)
    out = []
    for i, j in itertools.combinations(range(n), 2):
        if values[i] != values[j]:
            train = np.array([k for k in range(n) if k != i and k != j], dtype=np.int64)
            out.append((train, (i, j)))
    return out


def select_features(F_train, y_train, k: int) -> np.ndarray:
    """Indices of the ``k`` columns with the largest |Spearman rho| on the training rows.

    Only columns without missing training cells and with a defined
    coefficient compete; ties keep column order.
    """
    complete = ~np.isnan(F_train).any(axis=0)
    rho = np.full(F_train.shape[1], np.nan)
    rho[complete] = spearman_columns(F_train[:, complete], y_train)
    score = np.where(np.isnan(rho), -np.inf, np.abs(rho))
    order = np.argsort(-score, kind="stable")
    order = order[np.isfinite(score[order])]
    return order[:k]


@dataclass
class MetaExperimentReport:
    config_names: list[str]
    br_values: list[float]
    feature_counts: list[int]
    accuracy: np.ndarray  # [config, br, k]
    n_splits: int

    def best_cell(self):
        """(config, br, k, accuracy) of the most accurate cell; first in grid order on ties."""
        i, j, m = np.unravel_index(int(np.argmax(self.accuracy)), self.accuracy.shape)
        return (self.config_names[i], self.br_values[j], self.feature_counts[m],
                float(self.accuracy[i, j, m]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config", "br", "n_features", "accuracy"])
        for i, c in enumerate(self.config_names):
            for j, b in enumerate(self.br_values):
                for m, k in enumerate(self.feature_counts):
                    w.writerow([c, repr(float(b)), k, repr(float(self.accuracy[i, j, m]))])
        return buf.getvalue()

    def summary(self) -> str:
        c, b, k, acc = self.best_cell()
        return (f"splits: {self.n_splits}\n"
                f"best: {c} br={b:g} features={k} accuracy={100 * acc:.2f}%\n")


def meta_evaluate(matrix: MetaFeatureMatrix, labels, configs: list[ForestConfig],
                  br_values, feature_counts=range(1, 11), seed: int = 0,
                  n_jobs: int = 1) -> MetaExperimentReport:
    """Leave-two-out accuracy of the regime classifier for every (config, BR, k)."""
    order = {d: i for i, d in enumerate(matrix.datasets)}
    rows = np.array([order[lab.dataset] for lab in labels], dtype=np.int64)
    F = matrix.values[rows]
    y = np.array([1 if lab.value == GT1 else 0 for lab in labels], dtype=np.int64)
    if F.shape[0] < 4:
        raise ValueError("need at least four labelled datasets")
    splits = leave_two_out_splits(labels)
    brs = list(br_values)
    ks = list(feature_counts)

    def run_split(s):
        train, pair = splits[s]
        val = np.array(pair)
        chosen = select_features(F[train], y[train], max(ks))
        seed_s = cell_seed(seed, s, 0)
        hits = np.zeros((len(configs), len(brs), len(ks)))
        for m, k in enumerate(ks):
            cols = chosen[:k]
            Xtr = np.ascontiguousarray(F[np.ix_(train, cols)])
            Xva = F[np.ix_(val, cols)].copy()
            gaps = np.isnan(Xva)
            if gaps.any():
                Xva[gaps] = np.take(Xtr.mean(axis=0), np.nonzero(gaps)[1])
            Xt = np.ascontiguousarray(Xtr.T)
            for i, cfg in enumerate(configs):
                for j, br in enumerate(brs):
                    model = fit_arrays(Xtr, y[train], 2, cfg.with_br(br).with_seed(seed_s), Xt=Xt)
                    hits[i, j, m] = np.mean(model.predict(Xva) == y[val])
        return hits

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            per_split = list(pool.map(run_split, range(len(splits))))
    else:
        per_split = [run_split(s) for s in range(len(splits))]
    acc = np.mean(per_split, axis=0)
    return MetaExperimentReport([c.name for c in configs], brs, ks, acc, len(splits))
