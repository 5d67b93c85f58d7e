"""Hot numeric kernels with twin implementations.

Each kernel exists twice: a numba @njit version and a pure-numpy fallback.
The active path is chosen at import time by the TABLERANK_NUMBA environment
variable ("0", "false", "no" or "off" force the fallback) and degrades to the
fallback automatically when numba is not importable.

The tree kernels are written so both paths produce bit-identical trees:
stable sorts, sequential accumulation, identical arithmetic expressions, and
first-best tie-breaking throughout. Cosine kernels agree to rounding only,
since the fallback uses BLAS matmul.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENV = "TABLERANK_NUMBA"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def _env_allows_numba() -> bool:
    return os.environ.get(NUMBA_ENV, "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = HAS_NUMBA and _env_allows_numba()


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Pairwise cosine similarity
# ---------------------------------------------------------------------------


def pairwise_cosine_py(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine of every row pair; zero-norm rows contribute 0, output in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    an = np.where(na[:, None] > 0.0, a / np.where(na[:, None] > 0.0, na[:, None], 1.0), 0.0)
    bn = np.where(nb[:, None] > 0.0, b / np.where(nb[:, None] > 0.0, nb[:, None], 1.0), 0.0)
    out = an @ bn.T
    np.clip(out, -1.0, 1.0, out=out)
    return out


@njit(cache=True)
def _pairwise_cosine_nb(a, b):  # pragma: no cover - measured via dispatch tests
    n, d = a.shape
    m = b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    na = np.zeros(n, dtype=np.float64)
    nb_ = np.zeros(m, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += a[i, k] * a[i, k]
        na[i] = np.sqrt(s)
    for j in range(m):
        s = 0.0
        for k in range(d):
            s += b[j, k] * b[j, k]
        nb_[j] = np.sqrt(s)
    for i in range(n):
        if na[i] == 0.0:
            continue
        for j in range(m):
            if nb_[j] == 0.0:
                continue
            dot = 0.0
            for k in range(d):
                dot += a[i, k] * b[j, k]
            c = dot / (na[i] * nb_[j])
            if c > 1.0:
                c = 1.0
            elif c < -1.0:
                c = -1.0
            out[i, j] = c
    return out


def pairwise_cosine_nb(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _pairwise_cosine_nb(
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# Regression tree growth (variance reduction, midpoint thresholds)
# ---------------------------------------------------------------------------
#
# Contract shared by both paths:
#   X (n, p) float64, y (n,) float64, feat_cand (cap, mtry) int32 with
#   cap >= 2n + 1 rows of candidate feature ids per node id, min_leaf >= 1.
# Returns (feature, threshold, left, right, value, count, n_nodes, imp):
#   feature[i] == -1 marks a leaf; children ids are local to the tree and
#   assigned in discovery order (root 0, then children as splits are found).
#   imp (p,) accumulates the sum-of-squares reduction per split feature.
# A node becomes a leaf when no candidate split strictly reduces the
# sum-of-squares proxy, so pure nodes stop naturally.


def grow_tree_py(
    X: np.ndarray,
    y: np.ndarray,
    feat_cand: np.ndarray,
    min_leaf: int = 1,
):
    n, p = X.shape
    cap = feat_cand.shape[0]
    mtry = feat_cand.shape[1]
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    count = np.zeros(cap, dtype=np.int32)
    imp = np.zeros(p, dtype=np.float64)

    idx = np.arange(n, dtype=np.int64)
    stack = [(0, 0, n)]
    next_node = 1
    while stack:
        node_id, start, end = stack.pop()
        seg = idx[start:end]
        n_seg = end - start
        s_tot = 0.0
        for v in seg:
            s_tot += y[v]
        count[node_id] = n_seg
        value[node_id] = s_tot / n_seg
        if n_seg < 2 * min_leaf:
            continue
        parent_proxy = s_tot * s_tot / n_seg
        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        for ji in range(mtry):
            f = int(feat_cand[node_id, ji])
            xs = X[seg, f]
            order = np.argsort(xs, kind="stable")
            xs_s = xs[order]
            ys_s = y[seg][order]
            cum = np.cumsum(ys_s)
            nl = np.arange(1, n_seg, dtype=np.float64)
            nr = n_seg - nl
            sl = cum[:-1]
            sr = s_tot - sl
            gains = sl * sl / nl + sr * sr / nr - parent_proxy
            invalid = xs_s[:-1] == xs_s[1:]
            if min_leaf > 1:
                pos = np.arange(1, n_seg)
                invalid = invalid | (pos < min_leaf) | (n_seg - pos < min_leaf)
            gains = np.where(invalid, -np.inf, gains)
            i_best = int(np.argmax(gains))
            g = gains[i_best]
            if g > best_gain:
                best_gain = float(g)
                best_feat = f
                thr = (xs_s[i_best] + xs_s[i_best + 1]) / 2.0
                if thr == xs_s[i_best + 1]:
                    thr = xs_s[i_best]
                best_thr = float(thr)
        if best_feat < 0:
            continue
        mask = X[seg, best_feat] <= best_thr
        left_part = seg[mask]
        right_part = seg[~mask]
        nl_count = left_part.shape[0]
        idx[start : start + nl_count] = left_part
        idx[start + nl_count : end] = right_part
        feature[node_id] = best_feat
        threshold[node_id] = best_thr
        imp[best_feat] += best_gain
        left_id = next_node
        right_id = next_node + 1
        next_node += 2
        left[node_id] = left_id
        right[node_id] = right_id
        stack.append((right_id, start + nl_count, end))
        stack.append((left_id, start, start + nl_count))
    n_nodes = next_node
    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        count[:n_nodes],
        n_nodes,
        imp,
    )


@njit(cache=True)
def _grow_tree_nb(X, y, feat_cand, min_leaf):  # pragma: no cover
    n, p = X.shape
    cap = feat_cand.shape[0]
    mtry = feat_cand.shape[1]
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    count = np.zeros(cap, dtype=np.int32)
    imp = np.zeros(p, dtype=np.float64)

    idx = np.arange(n, dtype=np.int64)
    stack = np.zeros((cap, 3), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    sp = 1
    next_node = 1
    scratch = np.zeros(n, dtype=np.int64)
    while sp > 0:
        sp -= 1
        node_id = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        n_seg = end - start
        s_tot = 0.0
        for t in range(start, end):
            s_tot += y[idx[t]]
        count[node_id] = n_seg
        value[node_id] = s_tot / n_seg
        if n_seg < 2 * min_leaf:
            continue
        parent_proxy = s_tot * s_tot / n_seg
        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        for ji in range(mtry):
            f = feat_cand[node_id, ji]
            xs = np.empty(n_seg, dtype=np.float64)
            ys = np.empty(n_seg, dtype=np.float64)
            for t in range(n_seg):
                xs[t] = X[idx[start + t], f]
            order = np.argsort(xs, kind="mergesort")
            for t in range(n_seg):
                ys[t] = y[idx[start + order[t]]]
            xs_s = xs[order]
            run = 0.0
            loc_best_gain = -np.inf
            loc_best_i = -1
            for i in range(n_seg - 1):
                run += ys[i]
                if xs_s[i] == xs_s[i + 1]:
                    continue
                nl = i + 1
                nr = n_seg - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                sl = run
                sr = s_tot - sl
                g = sl * sl / nl + sr * sr / nr - parent_proxy
                if g > loc_best_gain:
                    loc_best_gain = g
                    loc_best_i = i
            if loc_best_i >= 0 and loc_best_gain > best_gain:
                best_gain = loc_best_gain
                best_feat = f
                thr = (xs_s[loc_best_i] + xs_s[loc_best_i + 1]) / 2.0
                if thr == xs_s[loc_best_i + 1]:
                    thr = xs_s[loc_best_i]
                best_thr = thr
        if best_feat < 0:
            continue
        nl_count = 0
        for t in range(start, end):
            v = idx[t]
            if X[v, best_feat] <= best_thr:
                scratch[nl_count] = v
                nl_count += 1
        nr_count = nl_count
        for t in range(start, end):
            v = idx[t]
            if X[v, best_feat] > best_thr:
                scratch[nr_count] = v
                nr_count += 1
        for t in range(n_seg):
            idx[start + t] = scratch[t]
        feature[node_id] = best_feat
        threshold[node_id] = best_thr
        imp[best_feat] += best_gain
        left_id = next_node
        right_id = next_node + 1
        next_node += 2
        left[node_id] = left_id
        right[node_id] = right_id
        stack[sp, 0] = right_id
        stack[sp, 1] = start + nl_count
        stack[sp, 2] = end
        sp += 1
        stack[sp, 0] = left_id
        stack[sp, 1] = start
        stack[sp, 2] = start + nl_count
        sp += 1
    n_nodes = next_node
    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        count[:n_nodes],
        n_nodes,
        imp,
    )


def grow_tree_nb(X, y, feat_cand, min_leaf: int = 1):
    return _grow_tree_nb(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(feat_cand, dtype=np.int32),
        min_leaf,
    )


# ---------------------------------------------------------------------------
# Forest prediction over flattened trees
# ---------------------------------------------------------------------------
#
# Trees are concatenated: tree t occupies [offsets[t], offsets[t+1]) in the
# node arrays, with child ids local to the tree. Per-sample accumulation runs
# in tree order in both paths, so outputs match bitwise.


def predict_forest_py(X, feature, threshold, left, right, value, offsets):
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    n_trees = offsets.shape[0] - 1
    acc = np.zeros(m, dtype=np.float64)
    rows = np.arange(m)
    for t in range(n_trees):
        off = offsets[t]
        node = np.zeros(m, dtype=np.int64)
        while True:
            f = feature[off + node]
            internal = f >= 0
            if not internal.any():
                break
            f_safe = np.where(internal, f, 0)
            go_left = X[rows, f_safe] <= threshold[off + node]
            node = np.where(
                internal,
                np.where(go_left, left[off + node], right[off + node]),
                node,
            )
        acc += value[off + node]
    return acc / n_trees


@njit(cache=True)
def _predict_forest_nb(X, feature, threshold, left, right, value, offsets):  # pragma: no cover
    m = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(m, dtype=np.float64)
    for i in range(m):
        acc = 0.0
        for t in range(n_trees):
            off = offsets[t]
            node = 0
            while feature[off + node] >= 0:
                if X[i, feature[off + node]] <= threshold[off + node]:
                    node = left[off + node]
                else:
                    node = right[off + node]
            acc += value[off + node]
        out[i] = acc / n_trees
    return out


def predict_forest_nb(X, feature, threshold, left, right, value, offsets):
    return _predict_forest_nb(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(feature, dtype=np.int32),
        np.ascontiguousarray(threshold, dtype=np.float64),
        np.ascontiguousarray(left, dtype=np.int32),
        np.ascontiguousarray(right, dtype=np.int32),
        np.ascontiguousarray(value, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.int64),
    )


if USE_NUMBA:
    pairwise_cosine = pairwise_cosine_nb
    grow_tree = grow_tree_nb
    predict_forest = predict_forest_nb
else:
    pairwise_cosine = pairwise_cosine_py
    grow_tree = grow_tree_py
    predict_forest = predict_forest_py
