"""Full-depth multi-output regression trees.

Splits are axis aligned. A real feature splits at the midpoint between
consecutive distinct values (``x <= threshold`` goes left); a categorical
feature splits one category against the rest (``x == category`` goes
left). The split maximising the reduction in total squared error summed
over all outputs wins; equal gains keep the lowest feature index and then
the lowest threshold or category, so the fit does not depend on row order.

Rows carry integer weights, so fitting on a bootstrap bag is the same as
fitting on the multiset of rows it contains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .exceptions import DomainError

__all__ = ["TreeModel", "fit_tree", "predict_tree", "pack_trees", "predict_packed"]


@dataclass(frozen=True)
class TreeModel:
    """Array representation of a fitted tree.

    Node ``k`` is a leaf when ``feature[k] == -1``. ``value`` holds the
    leaf means (standardised outputs in the ensemble) and ``count`` the
    weighted number of training rows that reached each node.
    ``known_categories[f, c]`` is True when category ``c`` of feature
    ``f`` appeared among the rows the tree was fit on.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    is_categorical: np.ndarray
    known_categories: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_outputs(self) -> int:
        return int(self.value.shape[1])

    @property
    def n_features(self) -> int:
        return int(self.is_categorical.size)

    def predict(self, X) -> np.ndarray:
        return predict_tree(self, X)


@nb.njit(cache=True)
def _build(X, Y, w, is_cat):
    n, n_feat = X.shape
    d = Y.shape[1]
    m = 0
    for i in range(n):
        if w[i] > 0:
            m += 1
    idx = np.empty(m, np.int64)
    k = 0
    for i in range(n):
        if w[i] > 0:
            idx[k] = i
            k += 1

    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, d))
    count = np.zeros(cap)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    top = 1
    n_nodes = 1

    s_tot = np.zeros(d)
    s_left = np.zeros(d)
    vals = np.empty(m)
    buf = np.empty(m, np.int64)

    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_start[top]
        e = st_end[top]
        size = e - s

        w_tot = 0.0
        sq_tot = 0.0
        for j in range(d):
            s_tot[j] = 0.0
        for r in range(s, e):
            i = idx[r]
            wi = w[i]
            w_tot += wi
            for j in range(d):
                s_tot[j] += wi * Y[i, j]
                sq_tot += wi * Y[i, j] * Y[i, j]
        for j in range(d):
            value[node, j] = s_tot[j] / w_tot
        count[node] = w_tot
        if w_tot < 2.0:
            continue

        parent_score = 0.0
        for j in range(d):
            parent_score += s_tot[j] * s_tot[j] / w_tot
        eps = 1e-12 * (sq_tot + 1.0)
        if sq_tot - parent_score <= eps:
            continue

        best_gain = eps
        best_f = -1
        best_thr = 0.0

        for f in range(n_feat):
            for r in range(size):
                vals[r] = X[idx[s + r], f]
            order = np.argsort(vals[:size], kind="mergesort")
            if is_cat[f]:
                # one-vs-rest over each category group, ascending code
                g = 0
                while g < size:
                    c = vals[order[g]]
                    w_l = 0.0
                    for j in range(d):
                        s_left[j] = 0.0
                    h = g
                    while h < size and vals[order[h]] == c:
                        i = idx[s + order[h]]
                        w_l += w[i]
                        for j in range(d):
                            s_left[j] += w[i] * Y[i, j]
                        h += 1
                    if g == 0 and h == size:
                        break
                    w_r = w_tot - w_l
                    score = 0.0
                    for j in range(d):
                        sr = s_tot[j] - s_left[j]
                        score += s_left[j] * s_left[j] / w_l + sr * sr / w_r
                    gain = score - parent_score
                    if gain > best_gain + eps:
                        best_gain = gain
                        best_f = f
                        best_thr = c
                    g = h
            else:
                w_l = 0.0
                for j in range(d):
                    s_left[j] = 0.0
                for r in range(size - 1):
                    i = idx[s + order[r]]
                    w_l += w[i]
                    for j in range(d):
                        s_left[j] += w[i] * Y[i, j]
                    a = vals[order[r]]
                    b = vals[order[r + 1]]
                    if b <= a:
                        continue
                    w_r = w_tot - w_l
                    score = 0.0
                    for j in range(d):
                        sr = s_tot[j] - s_left[j]
                        score += s_left[j] * s_left[j] / w_l + sr * sr / w_r
                    gain = score - parent_score
                    if gain > best_gain + eps:
                        best_gain = gain
                        best_f = f
                        thr = 0.5 * (a + b)
                        if thr >= b:
                            thr = a
                        best_thr = thr

        if best_f < 0:
            continue

        # stable partition of idx[s:e]: left rows first
        n_left = 0
        n_right = 0
        for r in range(s, e):
            i = idx[r]
            x = X[i, best_f]
            go_left = (x == best_thr) if is_cat[best_f] else (x <= best_thr)
            if go_left:
                idx[s + n_left] = i
                n_left += 1
            else:
                buf[n_right] = i
                n_right += 1
        for r in range(n_right):
            idx[s + n_left + r] = buf[r]

        feature[node] = best_f
        threshold[node] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        st_node[top] = rid
        st_start[top] = s + n_left
        st_end[top] = e
        top += 1
        st_node[top] = lid
        st_start[top] = s
        st_end[top] = s + n_left
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        count[:n_nodes],
    )


@nb.njit(cache=True)
def _route(feature, threshold, left, right, count, is_cat, known, root, x):
    k = root
    n_known = known.shape[1]
    while feature[k] >= 0:
        f = feature[k]
        v = x[f]
        if is_cat[f]:
            code = int(v)
            seen = code >= 0 and code < n_known and code == v and known[f, code]
            if v == threshold[k]:
                k = left[k]
            elif seen:
                k = right[k]
            elif count[left[k]] >= count[right[k]]:
                k = left[k]
            else:
                k = right[k]
        elif v <= threshold[k]:
            k = left[k]
        else:
            k = right[k]
    return k


@nb.njit(cache=True)
def _predict_packed(feature, threshold, left, right, value, count, roots, is_cat, known, X):
    n_trees = roots.size
    n = X.shape[0]
    d = value.shape[1]
    out = np.empty((n_trees, n, d))
    for b in range(n_trees):
        for i in range(n):
            leaf = _route(feature, threshold, left, right, count, is_cat, known[b], roots[b], X[i])
            for j in range(d):
                out[b, i, j] = value[leaf, j]
    return out


def _as_2d(X, n_features=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DomainError("inputs must be a vector or a 2-D array")
    if n_features is not None and X.shape[1] != n_features:
        raise DomainError(f"expected {n_features} input columns, got {X.shape[1]}")
    return np.ascontiguousarray(X)


def _category_table(X, w, is_cat):
    n_cat = 1
    for f in np.flatnonzero(is_cat):
        col = X[:, f]
        if np.any(col < 0) or np.any(col != np.floor(col)):
            raise DomainError(f"categorical column {f} must hold non-negative integer codes")
        if col.size:
            n_cat = max(n_cat, int(col.max()) + 1)
    known = np.zeros((is_cat.size, n_cat), dtype=bool)
    active = w > 0
    for f in np.flatnonzero(is_cat):
        known[f, X[active, f].astype(np.int64)] = True
    return known


def fit_tree(X, Y, weights=None, is_categorical=None) -> TreeModel:
    """Grow a full-depth tree on inputs ``X`` (n, p) and outputs ``Y`` (n, d).

    ``weights`` are non-negative integer multiplicities (bag counts);
    rows with weight 0 are ignored. A node becomes a leaf when it holds
    fewer than two rows, when its rows share identical inputs, or when no
    split lowers the summed squared error.
    """
    X = _as_2d(X)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise DomainError("X and Y must have the same number of rows")
    n, p = X.shape
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0):
            raise DomainError("weights must be a non-negative vector with one entry per row")
    if not np.any(w > 0):
        raise DomainError("cannot fit a tree on zero rows")
    if is_categorical is None:
        is_cat = np.zeros(p, dtype=bool)
    else:
        is_cat = np.asarray(is_categorical, dtype=bool)
        if is_cat.shape != (p,):
            raise DomainError("is_categorical needs one flag per input column")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DomainError("inputs and outputs must be finite")
    known = _category_table(X, w, is_cat)
    arrays = _build(X, np.ascontiguousarray(Y), w, is_cat)
    return TreeModel(*(a.copy() for a in arrays), is_categorical=is_cat, known_categories=known)


def pack_trees(trees):
    """Concatenate trees into flat arrays with absolute child indices."""
    offsets = np.cumsum([0] + [t.n_nodes for t in trees])
    roots = offsets[:-1].astype(np.int64)
    feature = np.concatenate([t.feature for t in trees])
    threshold = np.concatenate([t.threshold for t in trees])
    left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(trees, roots)])
    right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(trees, roots)])
    value = np.concatenate([t.value for t in trees])
    count = np.concatenate([t.count for t in trees])
    n_cat = max(t.known_categories.shape[1] for t in trees)
    known = np.zeros((len(trees), trees[0].n_features, n_cat), dtype=bool)
    for b, t in enumerate(trees):
        known[b, :, : t.known_categories.shape[1]] = t.known_categories
    return dict(
        feature=feature, threshold=threshold, left=left, right=right,
        value=value, count=count, roots=roots,
        is_cat=trees[0].is_categorical, known=known,
    )


def predict_packed(packed, X) -> np.ndarray:
    """Per-tree predictions, shape (n_trees, n, d)."""
    X = _as_2d(X, packed["is_cat"].size)
    return _predict_packed(
        packed["feature"], packed["threshold"], packed["left"], packed["right"],
        packed["value"], packed["count"], packed["roots"],
        packed["is_cat"], packed["known"], X,
    )


def predict_tree(model: TreeModel, X) -> np.ndarray:
    """Leaf means reached by each input row; shape (n, d), or (d,) for a vector."""
    single = np.ndim(X) == 1
    out = predict_packed(pack_trees([model]), X)[0]
    return out[0] if single else out
