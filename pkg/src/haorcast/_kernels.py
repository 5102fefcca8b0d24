"""Compiled inner loops for tree growth and traversal.

Trees are stored flat: ``feature[i] == -1`` marks a leaf, otherwise rows with
``x[feature] <= threshold`` go to ``left[i]``. Split search scans the sorted
values of each candidate feature; candidate thresholds are midpoints between
consecutive distinct values. Features are visited in ascending index order
and thresholds ascending, and only a strictly better score replaces the
incumbent, so ties resolve to the lowest feature then the lowest threshold.
"""

import numpy as np
from numba import njit

LEAF = -1
_MIN_GAIN = 1e-12


@njit(cache=True)
def _midpoint(a, b):
    t = 0.5 * (a + b)
    if t >= b:  # adjacent floats
        t = a
    return t


@njit(cache=True)
def _partition(idx, start, end, X, f, thr, buf):
    """Stable in-place partition of idx[start:end]; returns the split point."""
    nl = 0
    nr = 0
    for i in range(start, end):
        r = idx[i]
        if X[r, f] <= thr:
            idx[start + nl] = r
            nl += 1
        else:
            buf[nr] = r
            nr += 1
    for j in range(nr):
        idx[start + nl + j] = buf[j]
    return start + nl


@njit(cache=True)
def grow_gini_tree(X, y, rows, allowed, mtry, max_depth, min_samples_split, feat_keys):
    """Grow one classification tree on the (bootstrap) sample ``rows``.

    ``feat_keys[node]`` holds random keys over ``allowed``; the ``mtry``
    smallest pick that node's candidate features. Returns the flat node
    arrays plus per-feature weighted impurity decrease.
    """
    n_root = rows.shape[0]
    cap = 2 * n_root + 1
    feature = np.full(cap, LEAF, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, LEAF, dtype=np.int32)
    right = np.full(cap, LEAF, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    importance = np.zeros(X.shape[1], dtype=np.float64)

    idx = rows.copy()
    buf = np.empty(n_root, dtype=rows.dtype)
    vals = np.empty(n_root, dtype=np.float64)
    labs = np.empty(n_root, dtype=np.int64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_root
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    n_allowed = allowed.shape[0]
    k = min(mtry, n_allowed)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        n = end - start

        pos = 0
        for i in range(start, end):
            pos += y[idx[i]]
        value[node] = pos / n
        if depth >= max_depth or n < min_samples_split or pos == 0 or pos == n:
            continue

        order = np.argsort(feat_keys[node, :n_allowed])
        cand = np.sort(allowed[order[:k]])

        neg = n - pos
        parent_score = (pos * pos + neg * neg) / n
        best_score = parent_score + _MIN_GAIN * n
        best_f = -1
        best_t = 0.0
        for c in range(k):
            f = cand[c]
            for i in range(n):
                r = idx[start + i]
                vals[i] = X[r, f]
                labs[i] = y[r]
            srt = np.argsort(vals[:n], kind="mergesort")
            l1 = 0
            for i in range(n - 1):
                l1 += labs[srt[i]]
                a = vals[srt[i]]
                b = vals[srt[i + 1]]
                if a < b:
                    nl = i + 1
                    nr = n - nl
                    l0 = nl - l1
                    r1 = pos - l1
                    r0 = nr - r1
                    score = (l1 * l1 + l0 * l0) / nl + (r1 * r1 + r0 * r0) / nr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        best_t = _midpoint(a, b)
        if best_f < 0:
            continue

        # weighted Gini decrease equals (score - parent_score) / n_root
        importance[best_f] += (best_score - parent_score) / n_root
        mid = _partition(idx, start, end, X, best_f, best_t, buf)
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = lc
        right[node] = rc
        st_node[sp] = rc
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], importance)


@njit(cache=True)
def grow_newton_tree(X, g, h, rows, features, max_depth, reg_lambda, gamma, min_child_weight):
    """Grow one second-order boosting tree on ``rows`` using ``features``.

    Leaf weight is -G / (H + lambda). Returns flat node arrays plus per-feature
    total split gain.
    """
    n_root = rows.shape[0]
    cap = 2 * n_root + 1
    feature = np.full(cap, LEAF, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, LEAF, dtype=np.int32)
    right = np.full(cap, LEAF, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    importance = np.zeros(X.shape[1], dtype=np.float64)

    idx = rows.copy()
    buf = np.empty(n_root, dtype=rows.dtype)
    vals = np.empty(n_root, dtype=np.float64)
    gs = np.empty(n_root, dtype=np.float64)
    hs = np.empty(n_root, dtype=np.float64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_root
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    n_feat = features.shape[0]

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        n = end - start

        G = 0.0
        H = 0.0
        for i in range(start, end):
            G += g[idx[i]]
            H += h[idx[i]]
        value[node] = -G / (H + reg_lambda)
        if depth >= max_depth or n < 2 or H < 2.0 * min_child_weight:
            continue

        parent = G * G / (H + reg_lambda)
        best_gain = _MIN_GAIN
        best_f = -1
        best_t = 0.0
        for c in range(n_feat):
            f = features[c]
            for i in range(n):
                r = idx[start + i]
                vals[i] = X[r, f]
            srt = np.argsort(vals[:n], kind="mergesort")
            for i in range(n):
                r = idx[start + srt[i]]
                gs[i] = g[r]
                hs[i] = h[r]
            GL = 0.0
            HL = 0.0
            for i in range(n - 1):
                GL += gs[i]
                HL += hs[i]
                a = vals[srt[i]]
                b = vals[srt[i + 1]]
                if a < b:
                    HR = H - HL
                    if HL < min_child_weight or HR < min_child_weight:
                        continue
                    GR = G - GL
                    gain = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                                  - parent) - gamma
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_t = _midpoint(a, b)
        if best_f < 0:
            continue

        importance[best_f] += best_gain
        mid = _partition(idx, start, end, X, best_f, best_t, buf)
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = lc
        right[node] = rc
        st_node[sp] = rc
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], importance)


@njit(cache=True)
def predict_trees(X, offsets, feature, threshold, left, right, value):
    """Leaf value of every tree for every row: shape (n_rows, n_trees).

    Child indices are local to each tree; ``offsets[t]`` is tree t's first node.
    """
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((n, n_trees), dtype=np.float64)
    for t in range(n_trees):
        base = offsets[t]
        for r in range(n):
            i = 0
            while feature[base + i] != -1:
                if X[r, feature[base + i]] <= threshold[base + i]:
                    i = left[base + i]
                else:
                    i = right[base + i]
            out[r, t] = value[base + i]
    return out


@njit(cache=True)
def predict_one_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for r in range(n):
        i = 0
        while feature[i] != -1:
            if X[r, feature[i]] <= threshold[i]:
                i = left[i]
            else:
                i = right[i]
        out[r] = value[i]
    return out
