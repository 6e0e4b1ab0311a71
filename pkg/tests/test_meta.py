from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brforest.data import BINARY, CONTINUOUS, Dataset, bundled_path, neighborhood_scale
from brforest.experiment import WinnerReport, read_winners_csv
from brforest.forest import named_configs
from brforest.meta import (GT1, LE1, KLStats, MetaFeatureMatrix, RegimeLabel, build_meta_matrix,
                           class_scaled_features, correlation_table, dataset_kl, interaction_features,
                           kl_names, kl_statistics, leave_two_out_splits, meta_evaluate,
                           regime_labels, select_features)

from conftest import make_dataset


def _oracle_kl(X, y, max_k=10):
    # exhaustive pairwise L1 distances, neighbours ordered by (distance, index)
    X = [list(map(float, row)) for row in X]
    n = len(X)
    counts = [[0] * (k + 1) for k in range(1, max_k + 1)]
    for i in range(n):
        cand = sorted((sum(abs(a - b) for a, b in zip(X[i], X[j])), j) for j in range(n) if j != i)
        nb = [j for _, j in cand[:max_k]]
        for k in range(1, max_k + 1):
            counts[k - 1][sum(y[j] == y[i] for j in nb[:k])] += 1
    return [[100.0 * c / n for c in row] for row in counts]


def _assert_matches_oracle(kl, oracle):
    for k in range(1, 11):
        for l in range(k + 1):
            assert kl[k, l] == pytest.approx(oracle[k - 1][l], abs=1e-9)


# -- k_l ----------------------------------------------------------------------


def test_kl_two_separated_clusters():
    X = np.r_[np.arange(10.0), 1000 + np.arange(10.0)]
    kl = kl_statistics(make_dataset(X, [0] * 10 + [1] * 10))
    for k in range(1, 10):
        assert kl[k, k] == 100.0
        assert all(kl[k, l] == 0.0 for l in range(k))
    assert kl[10, 9] == 100.0


def test_kl_alternating_line():
    X = np.arange(1.0, 21.0)
    kl = kl_statistics(make_dataset(X, np.arange(20) % 2))
    assert kl[1, 0] == 100.0


def test_kl_needs_more_rows_than_k():
    with pytest.raises(ValueError):
        kl_statistics(make_dataset(np.arange(10.0), [0, 1] * 5))


def test_kl_matches_oracle_random_2d():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    y = rng.integers(0, 2, 30)
    _assert_matches_oracle(kl_statistics(make_dataset(X, y)), _oracle_kl(X, y))


def test_kl_matches_oracle_fuzz():
    rng = np.random.default_rng(1234)
    for trial in range(200):
        n = int(rng.integers(11, 61))
        d = int(rng.integers(1, 6))
        c = int(rng.integers(2, 5))
        # half the fixtures use small integer grids so distance ties are common
        X = rng.integers(0, 4, (n, d)).astype(float) if trial % 2 else rng.normal(size=(n, d))
        y = rng.integers(0, c, n)
        kl = kl_statistics(make_dataset(X, y))
        _assert_matches_oracle(kl, _oracle_kl(X, y))
        np.testing.assert_allclose(kl.table.sum(axis=1), 100.0, atol=1e-9)
        assert np.all(kl.table >= 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_kl_permutation_and_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(11, 40)), int(rng.integers(1, 4))
    X = rng.normal(size=(n, d)) * rng.uniform(0.5, 5, d)
    y = rng.integers(0, 3, n)
    base = dataset_kl(make_dataset(X, y))
    perm = rng.permutation(n)
    shifted = X[perm] + rng.uniform(-100, 100, d)
    other = dataset_kl(make_dataset(shifted, y[perm]))
    # translation can perturb standardized values by an ulp, flipping exact
    # distance ties; continuous random data has none, so tables must agree
    np.testing.assert_allclose(other.table, base.table, atol=1e-9)


def test_dataset_kl_scales_binary_columns():
    rng = np.random.default_rng(3)
    X = np.c_[rng.normal(size=30), rng.integers(0, 2, 30)]
    ds = Dataset(X, rng.integers(0, 2, 30), [CONTINUOUS, BINARY])
    scaled = neighborhood_scale(ds)
    _assert_matches_oracle(dataset_kl(ds), _oracle_kl(scaled.features, ds.labels))


def test_kl_vector_and_names():
    names = kl_names()
    assert len(names) == 65 and names[:4] == ["1_0", "1_1", "2_0", "2_1"]
    kl = kl_statistics(make_dataset(np.arange(20.0), np.arange(20) % 2))
    assert kl.vector().size == 65
    assert kl.vector()[names.index("3_2")] == kl[3, 2]
    with pytest.raises(KeyError):
        kl[2, 3]


def test_class_scaling():
    table = np.zeros((10, 11))
    table[:, 0] = 50.0
    table[:, 1] = 50.0
    vals, names = class_scaled_features(KLStats("x", 2, table))
    assert vals[0] == 100.0 and names[0] == "1_0*C"


# -- interactions -------------------------------------------------------------


def test_interaction_count():
    vals, names = interaction_features(np.arange(1.0, 66.0), kl_names())
    assert len(names) == vals.size == 65 * 64 // 2 * 6 + 65 * 2 == 12_610
    assert len(set(names)) == len(names)


def test_interaction_values():
    vals, names = interaction_features([4.0, 2.0], ["f", "g"])
    got = dict(zip(names, vals))
    assert got == {"f/g": 2.0, "g/f": 0.5, "f-g": 2.0, "g-f": -2.0, "f*g": 8.0, "f+g": 6.0,
                   "f*f": 16.0, "f+f": 8.0, "g*g": 4.0, "g+g": 4.0}


def test_interaction_zero_division():
    vals, names = interaction_features([3.0, 0.0], ["f", "g"])
    got = dict(zip(names, vals))
    assert np.isnan(got["f/g"]) and got["g/f"] == 0.0


def test_interaction_matrix_matches_rows():
    rng = np.random.default_rng(0)
    M = rng.integers(0, 3, (4, 5)).astype(float)
    names = list("abcde")
    mat, _ = interaction_features(M, names)
    for i in range(4):
        np.testing.assert_array_equal(mat[i], interaction_features(M[i], names)[0])


def _kls(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        table = np.zeros((10, 11))
        for k in range(1, 11):
            table[k - 1, : k + 1] = rng.dirichlet(np.ones(k + 1)) * 100
        out.append(KLStats(f"d{i}", int(rng.integers(2, 5)), table))
    return out


def test_build_meta_matrix_columns():
    kls = _kls(4)
    assert len(build_meta_matrix(kls, interactions=False).names) == 65
    assert len(build_meta_matrix(kls, class_scaled=True, interactions=False).names) == 130
    full = build_meta_matrix(kls)
    assert full.values.shape == (4, 65 + 12_610)
    np.testing.assert_allclose(full.column("9_2/2_0"), [k[9, 2] / k[2, 0] for k in kls])


def test_meta_matrix_csv_roundtrip(tmp_path):
    m = build_meta_matrix(_kls(3), interactions=False)
    m.values[0, 0] = np.nan
    m.to_csv(tmp_path / "m.csv")
    back = MetaFeatureMatrix.from_csv(tmp_path / "m.csv")
    assert back.names == m.names and back.datasets == m.datasets
    np.testing.assert_array_equal(back.values, m.values)


# -- correlations -------------------------------------------------------------


def test_correlation_identity_feature():
    kls = _kls(6)
    m = build_meta_matrix(kls, interactions=False)
    target = m.column("5_3")
    table = correlation_table(m, {"best": target})
    assert table["best"][m.names.index("5_3")] == pytest.approx(1.0)


def test_correlation_matches_scipy_on_fuzzed_fixture():
    from scipy import stats
    m = build_meta_matrix(_kls(10, seed=9), interactions=False)
    y = np.random.default_rng(9).choice([0.2, 0.4, 1.0, 3.0, 5.0], 10)
    rho = correlation_table(m, {"best": y})["best"]
    for j in range(65):
        col = m.values[:, j]
        if np.unique(col).size < 2:
            assert np.isnan(rho[j])
        else:
            assert rho[j] == pytest.approx(stats.spearmanr(col, y).statistic, abs=1e-12)


def test_correlation_needs_three_datasets():
    with pytest.raises(ValueError):
        correlation_table(build_meta_matrix(_kls(2), interactions=False), {"best": [1, 2]})


# -- labels and splits --------------------------------------------------------


@pytest.fixture
def published():
    return read_winners_csv(bundled_path("published_winners.csv"))


def test_published_labels(published):
    labels = regime_labels(published)
    assert len(labels) == 36
    assert sum(l.value == GT1 for l in labels) == 20
    assert len(leave_two_out_splits(labels)) == 320


def test_published_undisputed_subset(published):
    labels = regime_labels(published, p_threshold=0.01)
    assert len(labels) == 24
    assert sorted([sum(l.value == v for l in labels) for v in (LE1, GT1)]) == [11, 13]
    assert len(leave_two_out_splits(labels)) == 143


def test_regime_boundary():
    (lab,) = regime_labels([WinnerReport("x", "RF(base)", 1.0, 0.9, 0.001)])
    assert lab.value == LE1


def test_splits_small_and_errors():
    labels = [RegimeLabel(n, v) for n, v in zip("abcd", [LE1, GT1, LE1, GT1])]
    splits = leave_two_out_splits(labels)
    assert [pair for _, pair in splits] == [(0, 1), (0, 3), (1, 2), (2, 3)]
    for train, (i, j) in splits:
        assert sorted(train.tolist() + [i, j]) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        leave_two_out_splits(labels[::2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([LE1, GT1]), min_size=2, max_size=20))
def test_split_count_is_product(values):
    labels = [RegimeLabel(str(i), v) for i, v in enumerate(values)]
    a, b = values.count(LE1), values.count(GT1)
    if a == 0 or b == 0:
        with pytest.raises(ValueError):
            leave_two_out_splits(labels)
    else:
        assert len(leave_two_out_splits(labels)) == a * b


# -- feature selection and meta evaluation ------------------------------------


def test_select_features_uses_training_rows_only():
    rng = np.random.default_rng(4)
    F = rng.normal(size=(12, 30))
    F[rng.random(F.shape) < 0.05] = np.nan
    y = rng.integers(0, 2, 12)
    train = np.arange(10)
    chosen = select_features(F[train], y[train], 5)
    F2 = F.copy()
    F2[10:] = rng.normal(size=(2, 30))
    assert np.array_equal(select_features(F2[train], y[train], 5), chosen)
    assert not np.isnan(F[train][:, chosen]).any()


def test_select_features_ranks_by_absolute_rho():
    y = np.array([0, 0, 1, 1, 0, 1], dtype=float)
    F = np.c_[np.random.default_rng(0).normal(size=6), -y, y + 0.1 * np.arange(6)]
    assert select_features(F, y, 2).tolist() == [1, 2]


def test_meta_evaluate_trivially_separable():
    # 30 training rows: BR 0.4 still draws 12, enough for every size-control setting
    n = 32
    labels = [RegimeLabel(f"d{i}", GT1 if i % 2 else LE1) for i in range(n)]
    values = np.random.default_rng(0).normal(size=(n, 6))
    values[:, 3] = [i % 2 for i in range(n)]  # equals the label
    m = MetaFeatureMatrix([l.dataset for l in labels], [f"f{j}" for j in range(6)], values)
    configs = [replace(c, n_trees=10) for c in named_configs()]
    rep = meta_evaluate(m, labels, configs, [0.4, 2.0], feature_counts=[1, 2], seed=1)
    assert rep.n_splits == 256
    np.testing.assert_array_equal(rep.accuracy[:, :, 0], 1.0)
    assert rep.best_cell()[2] == 1
    assert "splits: 256" in rep.summary()
    assert len(rep.to_csv().splitlines()) == 1 + 18 * 2 * 2
