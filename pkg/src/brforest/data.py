"""Tabular data ingestion, preprocessing, fold generation and synthetic data.

The preprocessing pipeline turns a raw CSV table into a purely numeric,
standardized :class:`Dataset`.  Steps run in a fixed order:

1. drop duplicate rows (exact equality on raw cells, label included)
2. drop rows whose class occurs only once
3. drop columns holding a single unique value
4. categorical missing values become their own category
5. numerical missing values are replaced by the column mean
6. one-hot encode categorical columns
7. z-score every column (population standard deviation)
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"

NUMERICAL = "numerical"
CATEGORICAL = "categorical"

MISSING_MARKERS = frozenset({"", "?", "na"})
MISSING_CATEGORY = "__missing__"


class DataError(ValueError):
    """Raised for malformed input files or degenerate datasets."""


@dataclass
class Column:
    name: str
    kind: str
    values: list  # float / str, None marks a missing cell


@dataclass
class RawTable:
    columns: list[Column]
    target_name: str
    target: list[str]

    def __post_init__(self):
        n = len(self.target)
        if n < 1:
            raise DataError("table has no rows")
        for col in self.columns:
            if len(col.values) != n:
                raise DataError(f"column {col.name!r} has {len(col.values)} cells, expected {n}")

    @property
    def n_rows(self) -> int:
        return len(self.target)


@dataclass
class Dataset:
    """Encoded feature matrix with integer class labels.

    ``feature_kinds[j]`` is ``"continuous"`` for columns derived from
    numerical attributes and ``"binary"`` for one-hot indicator columns.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_kinds: list[str]
    name: str = "dataset"
    feature_names: list[str] | None = None
    class_names: list[str] | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D array")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("labels must have one entry per row")
        if len(self.feature_kinds) != self.features.shape[1]:
            raise DataError("feature_kinds must have one entry per column")
        if self.feature_names is None:
            self.feature_names = [f"x{j}" for j in range(self.features.shape[1])]
        if self.class_names is None:
            n = int(self.labels.max()) + 1 if self.labels.size else 0
            self.class_names = [str(c) for c in range(n)]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_continuous(self) -> int:
        return sum(k == CONTINUOUS for k in self.feature_kinds)

    @property
    def n_binary(self) -> int:
        return sum(k == BINARY for k in self.feature_kinds)

    def subset(self, rows) -> Dataset:
        return Dataset(self.features[rows], self.labels[rows], list(self.feature_kinds),
                       self.name, list(self.feature_names), list(self.class_names))

    def check_invariants(self):
        """Raise :class:`DataError` if any preprocessing invariant is violated."""
        n, d = self.features.shape
        if n < 2 or d < 1 or self.n_classes < 2:
            raise DataError(f"{self.name}: need N>=2, D>=1, C>=2 (got {n}, {d}, {self.n_classes})")
        counts = np.bincount(self.labels, minlength=self.n_classes)
        if counts.min() < 2:
            raise DataError(f"{self.name}: class {int(counts.argmin())} has fewer than 2 members")
        if np.any(np.ptp(self.features, axis=0) == 0):
            raise DataError(f"{self.name}: constant column present")
        rows = np.column_stack([self.features, self.labels])
        if np.unique(rows, axis=0).shape[0] != n:
            raise DataError(f"{self.name}: duplicate rows present")

    def summary_line(self) -> str:
        return f"{self.name} {self.n_continuous} {self.n_binary} {self.n_samples} {self.n_classes}"


# ---------------------------------------------------------------------------
# loading


def _is_missing(cell: str, markers) -> bool:
    return cell.strip().lower() in markers


def _parse_float(cell: str):
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(path, target, categorical_hints=None, delimiter=",",
             missing_markers=MISSING_MARKERS) -> RawTable:
    """Read a headed CSV file into a :class:`RawTable`.

    A column is numerical when every non-missing cell parses as a finite
    number and the column is not listed in ``categorical_hints``.  Rows with
    a missing target are dropped.
    """
    hints = set(categorical_hints or ())
    markers = {m.lower() for m in missing_markers}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path} is not valid UTF-8") from exc

    rows = [r for r in rows if r]  # blank lines
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    if target not in header:
        raise DataError(f"{path}: target column {target!r} not found in header")
    for i, r in enumerate(body, start=1):
        if len(r) != len(header):
            raise DataError(f"ragged row {i}: {len(r)} fields, header has {len(header)}")

    t = header.index(target)
    body = [r for r in body if not _is_missing(r[t], markers)]
    if not body:
        raise DataError(f"{path}: every row has a missing target")

    columns = []
    for j, name in enumerate(header):
        if j == t:
            continue
        cells = [None if _is_missing(r[j], markers) else r[j].strip() for r in body]
        parsed = [None if c is None else _parse_float(c) for c in cells]
        numeric = name not in hints and all(p is not None for c, p in zip(cells, parsed) if c is not None)
        if numeric:
            columns.append(Column(name, NUMERICAL, parsed))
        else:
            columns.append(Column(name, CATEGORICAL, cells))
    return RawTable(columns, target, [r[t].strip() for r in body])


def raw_from_arrays(X, y, names=None, target_name="class") -> RawTable:
    """Wrap an in-memory numeric matrix as a :class:`RawTable`."""
    X = np.asarray(X, dtype=float)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    cols = [Column(n, NUMERICAL, [None if np.isnan(v) else float(v) for v in X[:, j]])
            for j, n in enumerate(names)]
    return RawTable(cols, target_name, [str(v) for v in y])


# ---------------------------------------------------------------------------
# preprocessing


def _drop_duplicate_rows(raw: RawTable) -> list[int]:
    seen = set()
    keep = []
    for i in range(raw.n_rows):
        key = tuple(c.values[i] for c in raw.columns) + (raw.target[i],)
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return keep


def _take(raw: RawTable, rows, columns=None) -> RawTable:
    cols = raw.columns if columns is None else columns
    return RawTable([Column(c.name, c.kind, [c.values[i] for i in rows]) for c in cols],
                    raw.target_name, [raw.target[i] for i in rows])


def _is_constant(col: Column) -> bool:
    if col.kind == NUMERICAL:
        return len({v for v in col.values if v is not None}) <= 1
    return len(set(col.values)) <= 1


def _standardize(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return (X - mean) / std


def _encode(raw: RawTable):
    blocks, kinds, names = [], [], []
    for col in raw.columns:
        if col.kind == NUMERICAL:
            vals = np.array([np.nan if v is None else v for v in col.values], dtype=float)
            mask = np.isnan(vals)
            if mask.any():
                vals[mask] = vals[~mask].mean()
            blocks.append(vals[:, None])
            kinds.append(CONTINUOUS)
            names.append(col.name)
        else:
            cells = [MISSING_CATEGORY if v is None else v for v in col.values]
            cats = sorted(set(cells))
            index = {c: k for k, c in enumerate(cats)}
            onehot = np.zeros((len(cells), len(cats)))
            onehot[np.arange(len(cells)), [index[c] for c in cells]] = 1.0
            blocks.append(onehot)
            kinds.extend([BINARY] * len(cats))
            names.extend(f"{col.name}={c}" for c in cats)
    return np.hstack(blocks), kinds, names


def preprocess(raw: RawTable, name="dataset") -> Dataset:
    """Apply the fixed preprocessing pipeline and return a :class:`Dataset`."""
    table = _take(raw, _drop_duplicate_rows(raw))

    while True:
        counts = {}
        for lab in table.target:
            counts[lab] = counts.get(lab, 0) + 1
        rows = [i for i, lab in enumerate(table.target) if counts[lab] > 1]
        if len({table.target[i] for i in rows}) < 2:
            raise DataError(f"{name}: dataset degenerate after preprocessing")
        table = _take(table, rows)
        if not any(not _is_constant(c) for c in table.columns):
            raise DataError(f"{name}: dataset degenerate after preprocessing")
        table = _take(table, range(table.n_rows), [c for c in table.columns if not _is_constant(c)])

        X, kinds, names = _encode(table)
        X = _standardize(X)
        classes = sorted(set(table.target))
        y = np.array([classes.index(v) for v in table.target], dtype=np.int64)

        # imputation can turn distinct raw rows into identical encoded ones
        _, first = np.unique(np.column_stack([X, y]), axis=0, return_index=True)
        if len(first) == len(y):
            return Dataset(X, y, kinds, name, names, classes)
        table = _take(table, sorted(first))


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldAssignment:
    fold_id: np.ndarray
    repeat_index: int

    def split(self, test_fold: int):
        """Return ``(train_indices, test_indices)`` with ``test_fold`` held out."""
        return np.flatnonzero(self.fold_id != test_fold), np.flatnonzero(self.fold_id == test_fold)


def stratified_two_fold(ds: Dataset, repeat_index: int, seed: int) -> FoldAssignment:
    """Stratified 2-fold assignment, deterministic in ``(seed, repeat_index)``.

    Members of each class are shuffled and dealt alternately into the two
    folds.  The alternation carries over from one class to the next, so the
    overall fold sizes also differ by at most one.
    """
    rng = np.random.default_rng([seed, repeat_index])
    fold = np.empty(ds.n_samples, dtype=np.int8)
    turn = 0
    for c in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == c)
        members = members[rng.permutation(members.size)]
        fold[members] = (turn + np.arange(members.size)) % 2
        turn = (turn + members.size) % 2
    return FoldAssignment(fold, repeat_index)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthSpec:
    n_samples: int = 300
    n_features: int = 2
    n_classes: int = 2
    n_clusters_per_class: int = 1
    class_sep: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_features < 1 or self.n_classes < 2 or self.n_clusters_per_class < 1:
            raise DataError("invalid synthetic spec")
        if self.n_samples < self.n_classes * self.n_clusters_per_class:
            raise DataError("n_samples must be at least n_classes * n_clusters_per_class")
        if self.class_sep < 0:
            raise DataError("class_sep must be non-negative")


def _hypercube_vertices(n_vertices, dim, rng):
    if dim < 63 and n_vertices > 2 ** dim:
        raise DataError(f"{n_vertices} clusters need more than the {2 ** dim} hypercube vertices")
    if dim <= 30:
        codes = rng.choice(2 ** dim, size=n_vertices, replace=False)
        bits = (codes[:, None] >> np.arange(dim)) & 1
        return 2.0 * bits - 1.0
    chosen = set()
    out = []
    while len(out) < n_vertices:
        v = tuple(rng.integers(0, 2, size=dim))
        if v not in chosen:
            chosen.add(v)
            out.append(v)
    return 2.0 * np.array(out, dtype=float) - 1.0


def synth_classification(spec: SynthSpec) -> Dataset:
    """Gaussian clusters on hypercube vertices, in the style of ``make_classification``.

    Each cluster sits on a distinct vertex of the hypercube with side
    ``2 * class_sep``; clusters are dealt round-robin to classes and every
    sample is its vertex plus unit Gaussian noise.
    """
    rng = np.random.default_rng(spec.seed)
    n_clusters = spec.n_classes * spec.n_clusters_per_class
    centroids = _hypercube_vertices(n_clusters, spec.n_features, rng) * spec.class_sep

    sizes = np.full(n_clusters, spec.n_samples // n_clusters)
    sizes[: spec.n_samples % n_clusters] += 1
    X = np.empty((spec.n_samples, spec.n_features))
    y = np.empty(spec.n_samples, dtype=np.int64)
    start = 0
    for k, m in enumerate(sizes):
        X[start:start + m] = centroids[k] + rng.standard_normal((m, spec.n_features))
        y[start:start + m] = k % spec.n_classes
        start += m

    order = rng.permutation(spec.n_samples)
    ds = Dataset(X[order], y[order], [CONTINUOUS] * spec.n_features,
                 name=f"synth_sep{spec.class_sep:g}_seed{spec.seed}")
    ds.centroids = centroids
    return ds


def _waveform_bases():
    i = np.arange(1, 22)
    tri = lambda peak: np.maximum(6 - np.abs(i - peak), 0).astype(float)
    return tri(7), tri(15), tri(11)


def breiman_waveform(n_samples=300, seed=0) -> Dataset:
    """Breiman's 21-attribute, 3-class waveform generator.

    Each class is a random convex mix of two of three shifted triangular
    waves, plus unit Gaussian noise on every attribute.
    """
    rng = np.random.default_rng(seed)
    h1, h2, h3 = _waveform_bases()
    pairs = [(h1, h2), (h1, h3), (h2, h3)]
    y = rng.integers(0, 3, size=n_samples)
    u = rng.uniform(size=(n_samples, 1))
    a = np.array([pairs[c][0] for c in y])
    b = np.array([pairs[c][1] for c in y])
    X = u * a + (1 - u) * b + rng.standard_normal((n_samples, 21))
    return Dataset(X, y, [CONTINUOUS] * 21, name="waveform")


def breiman_twonorm(n_samples=300, dim=20, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    a = 2 / math.sqrt(dim)
    y = rng.integers(0, 2, size=n_samples)
    X = rng.standard_normal((n_samples, dim)) + np.where(y[:, None] == 0, a, -a)
    return Dataset(X, y, [CONTINUOUS] * dim, name="twonorm")


def breiman_threenorm(n_samples=300, dim=20, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    a = 2 / math.sqrt(dim)
    y = rng.integers(0, 2, size=n_samples)
    alt = np.where(np.arange(dim) % 2 == 0, a, -a)
    pick = rng.integers(0, 2, size=n_samples)
    mean0 = np.where(pick[:, None] == 0, a, -a) * np.ones(dim)
    mean = np.where(y[:, None] == 0, mean0, alt)
    X = rng.standard_normal((n_samples, dim)) + mean
    return Dataset(X, y, [CONTINUOUS] * dim, name="threenorm")


def breiman_ringnorm(n_samples=300, dim=20, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    a = 1 / math.sqrt(dim)
    y = rng.integers(0, 2, size=n_samples)
    X = np.where(y[:, None] == 0,
                 2 * rng.standard_normal((n_samples, dim)),
                 rng.standard_normal((n_samples, dim)) + a)
    return Dataset(X, y, [CONTINUOUS] * dim, name="ringnorm")


# ---------------------------------------------------------------------------
# neighborhood scaling


def neighborhood_scale(ds: Dataset) -> Dataset:
    """z-score continuous columns and map binary columns onto {-1, +1}."""
    X = ds.features.copy()
    for j, kind in enumerate(ds.feature_kinds):
        col = X[:, j]
        if kind == CONTINUOUS:
            std = col.std()
            X[:, j] = (col - col.mean()) / (std if std > 0 else 1.0)
        else:
            lo, *rest = np.unique(col)
            if len(rest) != 1:
                raise DataError(f"binary column {ds.feature_names[j]!r} has {len(rest) + 1} distinct values")
            X[:, j] = np.where(col == lo, -1.0, 1.0)
    return Dataset(X, ds.labels, list(ds.feature_kinds), ds.name,
                   list(ds.feature_names), list(ds.class_names))


# ---------------------------------------------------------------------------
# persistence and bundled data

BUNDLED = {
    "iris": ("iris.csv", "class", "Iris"),
    "wine": ("wine.csv", "class", "Wine"),
    "sonar": ("sonar.csv", "class", "Sonar"),
}


def load_bundled(name: str) -> Dataset:
    """Load and preprocess one of the CSV files shipped with the package."""
    fname, target, title = BUNDLED[name]
    with resources.as_file(resources.files("brforest.datasets") / fname) as path:
        return preprocess(load_csv(path, target), name=title)


def bundled_path(fname: str):
    return resources.files("brforest.datasets") / fname


def save_dataset(ds: Dataset, directory) -> tuple[str, str]:
    """Write ``<name>.json`` (manifest) and ``<name>.csv`` (encoded data)."""
    os.makedirs(directory, exist_ok=True)
    stem = ds.name.replace(" ", "_")
    manifest = os.path.join(directory, f"{stem}.json")
    table = os.path.join(directory, f"{stem}.csv")
    with open(manifest, "w") as fh:
        json.dump({
            "name": ds.name,
            "n_samples": ds.n_samples,
            "n_features": ds.n_features,
            "n_classes": ds.n_classes,
            "feature_kinds": ds.feature_kinds,
            "feature_names": ds.feature_names,
            "class_names": ds.class_names,
            "data": os.path.basename(table),
        }, fh, indent=2)
        fh.write("\n")
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + ["label"])
        for row, lab in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])
    return manifest, table


def load_dataset(manifest_path) -> Dataset:
    with open(manifest_path) as fh:
        meta = json.load(fh)
    table = os.path.join(os.path.dirname(os.path.abspath(manifest_path)), meta["data"])
    with open(table, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[float(v) for v in r] for r in rows])
    return Dataset(arr[:, :-1], arr[:, -1].astype(np.int64), meta["feature_kinds"],
                   meta["name"], meta["feature_names"], meta["class_names"])
