import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brforest.tree import (DecisionTree, TreeConfig, best_split, fit_tree, fit_weighted, impurity,
                           predict_tree)

from conftest import make_dataset


# -- impurity -----------------------------------------------------------------


def test_impurity_examples():
    assert impurity([3, 0], "gini") == 0.0
    assert impurity([1, 1], "gini") == 0.5
    assert impurity([1, 3], "entropy") == pytest.approx(0.81128, abs=1e-5)
    assert impurity([2, 2], "entropy") == pytest.approx(1.0, abs=1e-15)


def test_impurity_empty_raises():
    with pytest.raises(ValueError):
        impurity([0, 0])


@pytest.mark.parametrize("quality", ["gini", "entropy"])
@pytest.mark.parametrize("n_classes", [2, 3, 4])
def test_impurity_zero_iff_pure_and_max_at_uniform(quality, n_classes):
    rng = np.random.default_rng(n_classes)
    uniform = impurity([5] * n_classes, quality)
    for _ in range(200):
        counts = rng.integers(0, 6, n_classes)
        if counts.sum() == 0:
            continue
        val = impurity(counts, quality)
        pure = np.count_nonzero(counts) == 1
        assert (val == 0.0) == pure
        assert val <= uniform + 1e-12


# -- best_split vs brute force --------------------------------------------------


def _oracle_impurity(counts, quality):
    total = sum(counts)
    ps = [c / total for c in counts if c > 0]
    if quality == "gini":
        return 1.0 - sum(p * p for p in ps)
    return -sum(p * math.log2(p) for p in ps)


def _oracle_best_split(X, y, rows, features, quality, ml, n_classes):
    mult = {}
    for r in rows:
        mult[r] = mult.get(r, 0) + 1
    total = sum(mult.values())

    def counts(members):
        c = [0] * n_classes
        for r in members:
            c[y[r]] += mult[r]
        return c

    if len({y[r] for r in mult}) < 2:
        return None
    best = None
    for f in sorted(set(features)):
        values = sorted({X[r][f] for r in mult})
        for a, b in zip(values, values[1:]):
            t = (a + b) / 2
            left = [r for r in mult if X[r][f] <= t]
            right = [r for r in mult if X[r][f] > t]
            cl, cr = counts(left), counts(right)
            wl, wr = sum(cl), sum(cr)
            if wl < ml or wr < ml:
                continue
            imp = (wl * _oracle_impurity(cl, quality) + wr * _oracle_impurity(cr, quality)) / total
            if best is None or imp < best[2] - 1e-12:
                best = (f, t, imp)
    return best


def test_best_split_two_rows():
    s = best_split(np.array([[1.0], [2.0]]), [0, 1], [0, 1], [0])
    assert (s.feature, s.threshold, s.weighted_child_impurity) == (0, 1.5, 0.0)


def test_best_split_identical_rows():
    X = np.ones((4, 2))
    assert best_split(X, [0, 1, 0, 1], [0, 1, 2, 3], [0, 1]) is None


def test_best_split_leaf_constraint_six_rows():
    X = np.arange(1.0, 7.0)[:, None]
    s = best_split(X, [0, 0, 0, 1, 1, 1], range(6), [0], min_samples_leaf=3)
    assert s.threshold == 3.5
    assert s.weighted_child_impurity == 0.0


def test_best_split_multiplicity_counts_toward_leaf_size():
    X = np.array([[1.0], [2.0], [3.0]])
    y = [0, 1, 1]
    assert best_split(X, y, [0, 1, 2], [0], min_samples_leaf=2) is None
    s = best_split(X, y, [0, 0, 1, 2], [0], min_samples_leaf=2)
    assert s is not None and s.threshold == 1.5


def test_best_split_tie_lowest_feature_then_threshold():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    s = best_split(X, [0, 1, 1, 0], range(4), [1, 0])
    assert s.feature == 0
    assert s.threshold == 0.5


def test_best_split_contradictory_labels():
    X = np.array([[1.0], [1.0], [2.0], [2.0]])
    s = best_split(X, [0, 1, 0, 1], range(4), [0])
    assert s.threshold == 1.5 and s.weighted_child_impurity == pytest.approx(0.5)
    assert best_split(X, [0, 0, 0, 0], range(4), [0]) is None


@pytest.mark.parametrize("quality", ["gini", "entropy"])
def test_best_split_matches_brute_force(quality):
    rng = np.random.default_rng(2024 if quality == "gini" else 7)
    for _ in range(500):
        n = int(rng.integers(2, 31))
        d = int(rng.integers(1, 5))
        c = int(rng.integers(2, 4))
        X = rng.integers(0, 6, (n, d)).astype(float) if rng.random() < 0.6 else rng.normal(size=(n, d))
        y = rng.integers(0, c, n)
        rows = rng.integers(0, n, int(rng.integers(2, 2 * n + 1)))
        feats = rng.choice(d, int(rng.integers(1, d + 1)), replace=False)
        ml = int(rng.integers(1, 4))
        got = best_split(X, y, rows, feats, quality, ml, n_classes=c)
        want = _oracle_best_split(X.tolist(), y.tolist(), rows.tolist(), feats.tolist(), quality, ml, c)
        if want is None:
            assert got is None
        else:
            assert got is not None
            assert (got.feature, got.threshold) == (want[0], want[1])
            assert got.weighted_child_impurity == pytest.approx(want[2], abs=1e-12)


# -- fit_tree -----------------------------------------------------------------


def test_pure_sample_is_single_leaf():
    ds = make_dataset(np.random.default_rng(0).normal(size=(10, 3)), [1] * 5 + [0] * 5)
    tree = fit_tree(ds, [0, 1, 2, 3, 4, 4], TreeConfig(feature_subset="all"), np.random.default_rng(0))
    assert tree.node_count == 1
    np.testing.assert_array_equal(tree.predict_proba(ds.features[:1]), [[0.0, 1.0]])


def test_max_depth_one_gives_stump():
    X = np.arange(8.0)[:, None]
    ds = make_dataset(X, [0, 0, 1, 1, 0, 0, 1, 1])
    tree = fit_tree(ds, range(8), TreeConfig(max_depth=1), np.random.default_rng(0))
    assert tree.node_count == 3 and tree.n_leaves == 2 and tree.depth() == 1


def test_xor():
    ds = make_dataset([[0, 0], [0, 1], [1, 0], [1, 1]], [0, 1, 1, 0])
    tree = fit_tree(ds, range(4), TreeConfig(feature_subset="all"), np.random.default_rng(1))
    assert tree.n_leaves >= 3
    assert tree.predict(ds.features).tolist() == [0, 1, 1, 0]


def test_predict_tree_single_leaf_and_stump():
    leaf = DecisionTree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                        np.array([[3.0, 1.0]]), TreeConfig(), 1)
    np.testing.assert_allclose(predict_tree(leaf, [0.3]), [0.75, 0.25])
    stump = DecisionTree(np.array([0, -1, -1]), np.array([1.5, 0, 0]), np.array([1, -1, -1]),
                         np.array([2, -1, -1]), np.array([[0, 0], [2.0, 0], [1.0, 3.0]]), TreeConfig(), 1)
    np.testing.assert_array_equal(predict_tree(stump, [1.0]), [1.0, 0.0])
    np.testing.assert_array_equal(predict_tree(stump, [1.5]), [1.0, 0.0])
    np.testing.assert_allclose(predict_tree(stump, [1.6]), [0.25, 0.75])


def test_predict_rejects_non_finite_and_wrong_width():
    ds = make_dataset([[0.0], [1.0]], [0, 1])
    tree = fit_tree(ds, [0, 1], TreeConfig(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        predict_tree(tree, [np.nan])
    with pytest.raises(ValueError):
        predict_tree(tree, [0.0, 1.0])


def _leaf_paths(tree):
    out = []
    stack = [(0, [0])]
    while stack:
        k, path = stack.pop()
        if tree.feature[k] < 0:
            out.append(path)
        else:
            stack.append((tree.left[k], path + [tree.left[k]]))
            stack.append((tree.right[k], path + [tree.right[k]]))
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([None, 1, 2, 4]), st.integers(2, 6), st.integers(1, 3),
       st.sampled_from(["gini", "entropy"]), st.sampled_from(["sqrt", "log2", "all"]))
def test_tree_structure_properties(seed, md, mn, ml, qs, nf):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(5, 40)), int(rng.integers(1, 6))
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 3, n)
    y[:3] = [0, 1, 2]
    ds = make_dataset(X, y)
    rows = rng.integers(0, n, n)
    cfg = TreeConfig(md, mn, ml, qs, nf)
    tree = fit_tree(ds, rows, cfg, rng)
    if md is not None:
        assert tree.depth() <= md
    weight = tree.value.sum(axis=1)
    leaves = tree.feature < 0
    assert np.all(weight[leaves] >= ml)
    for path in _leaf_paths(tree):
        assert all(weight[a] > weight[b] for a, b in zip(path, path[1:]))
    assert np.all(tree.left[~leaves] >= 0) and np.all(tree.right[~leaves] >= 0)
    proba = tree.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    leaf_of = tree.apply(X)
    assert np.all(tree.feature[leaf_of] < 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_unrestricted_tree_resubstitution_is_perfect(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(2, 40)), int(rng.integers(1, 5))
    X = np.unique(rng.integers(0, 5, (n, d)).astype(float), axis=0)
    y = rng.integers(0, 3, X.shape[0])
    ds = make_dataset(X, y)
    tree = fit_tree(ds, range(X.shape[0]), TreeConfig(feature_subset="all"), rng)
    assert np.array_equal(tree.predict(X), y)


def test_feature_subset_sizes():
    assert [TreeConfig(feature_subset="sqrt").n_candidate_features(d) for d in (1, 3, 4, 60)] == [1, 1, 2, 7]
    assert [TreeConfig(feature_subset="log2").n_candidate_features(d) for d in (1, 2, 13, 60)] == [1, 1, 3, 5]
    assert TreeConfig(feature_subset="all").n_candidate_features(13) == 13


@pytest.mark.parametrize("kwargs", [dict(max_depth=0), dict(min_samples_split=1), dict(min_samples_leaf=0),
                                    dict(split_quality="mse"), dict(feature_subset="half")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TreeConfig(**kwargs)


def test_fit_tree_rejects_bad_indices():
    ds = make_dataset([[0.0], [1.0]], [0, 1])
    with pytest.raises(ValueError):
        fit_tree(ds, [], TreeConfig(), np.random.default_rng(0))
    with pytest.raises(IndexError):
        fit_tree(ds, [2], TreeConfig(), np.random.default_rng(0))


def test_to_dict_is_json():
    ds = make_dataset([[0, 0], [0, 1], [1, 0], [1, 1]], [0, 1, 1, 0])
    tree = fit_weighted(ds.features, ds.labels, np.ones(4), 2, TreeConfig(feature_subset="all"),
                        np.random.default_rng(0))
    doc = json.loads(json.dumps(tree.to_dict()))
    assert "feature" in doc and "left" in doc
