"""Compiled CART growth and traversal.

Rows are addressed through an index array plus a per-row weight (the row's
multiplicity in the bootstrap multiset); every count used by the impurity,
``min_samples_split`` and ``min_samples_leaf`` rules is a weighted count.
"""

import numpy as np
from numba import njit

GINI = 0
ENTROPY = 1

# candidate splits closer than this are treated as ties
TIE_EPS = 1e-12


@njit(cache=True, nogil=True)
def node_impurity(counts, total, criterion):
    if criterion == GINI:
        s = 0.0
        for c in counts:
            s += c * c
        return 1.0 - s / (total * total)
    h = 0.0
    for c in counts:
        if c > 0.0:
            p = c / total
            h -= p * np.log2(p)
    return h


@njit(cache=True, nogil=True)
def find_split(Xt, y, w, rows, features, n_classes, criterion, min_leaf):
    """Best (feature, threshold) over ``features`` for the node holding ``rows``.

    ``Xt`` is the feature-major (transposed) data matrix.  Returns
    ``(feature, threshold, weighted_child_impurity)``; feature is -1 when no
    admissible split exists.  ``features`` must be sorted ascending so that
    near-ties resolve to the lowest feature, then the lowest threshold.
    """
    n = rows.shape[0]
    total_counts = np.zeros(n_classes)
    total = 0.0
    for i in range(n):
        r = rows[i]
        total_counts[y[r]] += w[r]
        total += w[r]
    total_sq = 0.0
    for c in range(n_classes):
        total_sq += total_counts[c] * total_counts[c]

    best_f = -1
    best_t = 0.0
    best_imp = np.inf
    left = np.zeros(n_classes)
    right = np.zeros(n_classes)
    vals = np.empty(n)
    lab = np.empty(n, dtype=np.int64)
    wt = np.empty(n)

    for f in features:
        xf = Xt[f]
        for i in range(n):
            vals[i] = xf[rows[i]]
        order = np.argsort(vals)
        if vals[order[0]] == vals[order[n - 1]]:
            continue
        for i in range(n):
            r = rows[order[i]]
            lab[i] = y[r]
            wt[i] = w[r]
        left[:] = 0.0
        w_left = 0.0
        # running sums of squared class weights, for the gini fast path
        sq_left = 0.0
        sq_right = total_sq
        for pos in range(n - 1):
            c = lab[pos]
            wr = wt[pos]
            lc = left[c]
            rc = total_counts[c] - lc
            sq_left += 2.0 * lc * wr + wr * wr
            sq_right += -2.0 * rc * wr + wr * wr
            left[c] = lc + wr
            w_left += wr
            a = vals[order[pos]]
            b = vals[order[pos + 1]]
            if a == b:
                continue
            w_right = total - w_left
            if w_left < min_leaf:
                continue
            if w_right < min_leaf:
                break
            if criterion == GINI:
                imp = (w_left - sq_left / w_left + w_right - sq_right / w_right) / total
            else:
                for k in range(n_classes):
                    right[k] = total_counts[k] - left[k]
                imp = (w_left * node_impurity(left, w_left, criterion)
                       + w_right * node_impurity(right, w_right, criterion)) / total
            if imp < best_imp - TIE_EPS:
                t = 0.5 * (a + b)
                if t >= b:
                    t = a
                best_f = f
                best_t = t
                best_imp = imp
    return best_f, best_t, best_imp


@njit(cache=True, nogil=True)
def _draw_features(rng, n_features, n_sub, scratch):
    for i in range(n_features):
        scratch[i] = i
    for i in range(n_sub):
        j = i + rng.integers(0, n_features - i)
        tmp = scratch[i]
        scratch[i] = scratch[j]
        scratch[j] = tmp
    return np.sort(scratch[:n_sub])


@njit(cache=True, nogil=True)
def grow_tree(X, Xt, y, w, rows, n_classes, criterion, max_depth, min_split, min_leaf, n_sub, rng):
    """Grow one tree depth-first; returns flat node arrays.

    ``max_depth < 0`` means unlimited.  Children of node ``k`` are stored in
    ``left[k]`` / ``right[k]``; leaves have ``feature == -1``.
    """
    n_features = X.shape[1]
    cap = 2 * rows.shape[0] + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_classes))
    scratch = np.empty(n_features, dtype=np.int64)

    # stack entries: (node id, start, stop, depth) into the shared row buffer
    buf = rows.copy()
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = buf.shape[0]
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        stop = stack[top, 2]
        depth = stack[top, 3]

        total = 0.0
        for i in range(start, stop):
            r = buf[i]
            value[node, y[r]] += w[r]
            total += w[r]
        n_present = 0
        for c in range(n_classes):
            if value[node, c] > 0.0:
                n_present += 1

        if n_present <= 1 or total < min_split or depth == max_depth:
            continue

        feats = _draw_features(rng, n_features, n_sub, scratch)
        node_rows = buf[start:stop]
        f, t, imp = find_split(Xt, y, w, node_rows, feats, n_classes, criterion, min_leaf)
        if f < 0:
            continue

        # partition buf[start:stop] in place, stable on both sides
        tmp = node_rows.copy()
        lo = start
        for i in range(tmp.shape[0]):
            if X[tmp[i], f] <= t:
                buf[lo] = tmp[i]
                lo += 1
        hi = lo
        for i in range(tmp.shape[0]):
            if X[tmp[i], f] > t:
                buf[hi] = tmp[i]
                hi += 1

        feature[node] = f
        threshold[node] = t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is numbered first
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = lo
        stack[top, 2] = stop
        stack[top, 3] = depth + 1
        stack[top + 1, 0] = n_nodes
        stack[top + 1, 1] = start
        stack[top + 1, 2] = lo
        stack[top + 1, 3] = depth + 1
        top += 2
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = k
    return out


@njit(cache=True, nogil=True)
def accumulate_proba(X, feature, threshold, left, right, value, out):
    """Add the tree's normalized leaf frequencies for every row into ``out``."""
    for i in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        s = 0.0
        for c in range(value.shape[1]):
            s += value[k, c]
        for c in range(value.shape[1]):
            out[i, c] += value[k, c] / s
