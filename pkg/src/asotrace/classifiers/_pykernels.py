"""Pure-Python (numpy) tree kernels; output is bit-identical to ``_kernels.pyx``.

Both backends share the same node order (depth first, left child first), the
same xorshift64* stream for per-node feature sampling, and the same split
score arithmetic on integer class counts, so trees and importances agree
exactly.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
XORSHIFT_MULT = 0x2545F4914F6CDD1D
DEFAULT_STATE = 0x9E3779B97F4A7C15
MIN_GAIN = 1e-12  # relative improvement a split must beat


class XorShift64Star:
    def __init__(self, seed: int):
        self.state = (seed & MASK64) or DEFAULT_STATE

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XORSHIFT_MULT) & MASK64


def _best_split(xs: np.ndarray, ys: np.ndarray, c0: int, c1: int, min_leaf: int):
    """(score, threshold) of the best split on one feature, or None."""
    order = np.argsort(xs, kind="stable")
    v = xs[order]
    n = len(v)
    if v[0] == v[-1]:
        return None
    l1 = np.cumsum(ys[order][:-1], dtype=np.int64)
    nl = np.arange(1, n, dtype=np.int64)
    l0 = nl - l1
    r0 = c0 - l0
    r1 = c1 - l1
    nr = n - nl
    nlf = nl.astype(np.float64)
    nrf = nr.astype(np.float64)
    score = ((l0 * l0 + l1 * l1).astype(np.float64) / nlf
             + (r0 * r0 + r1 * r1).astype(np.float64) / nrf)
    valid = (v[:-1] != v[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    k = int(np.argmax(score))
    lo, hi = float(v[k]), float(v[k + 1])
    thr = (lo + hi) * 0.5
    if thr >= hi:
        thr = lo
    return float(score[k]), thr


def build_tree(X: np.ndarray, y: np.ndarray, samples: np.ndarray, max_features: int,
               max_depth: int, min_samples_leaf: int, seed: int):
    """Grow one Gini tree on ``X[samples]``.

    Returns ``(feature, threshold, left, right, value, n_node_samples,
    importance)``; leaves have feature -1, ``value`` is the class-1 share
    and ``importance`` holds the unnormalised weighted impurity decrease per
    feature.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    samples = np.array(samples, dtype=np.int64)
    n, p = len(samples), X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.float64)
    count = np.zeros(cap, dtype=np.int64)
    importance = np.zeros(p, dtype=np.float64)
    perm = np.arange(p, dtype=np.int64)
    rng = XorShift64Star(seed)
    mtry = min(max_features, p)
    min_leaf = max(min_samples_leaf, 1)

    stack = [(0, n, 0, -1, False)]
    nodes = 0
    while stack:
        start, end, depth, parent, is_left = stack.pop()
        node = nodes
        nodes += 1
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node
        idx = samples[start:end]
        nn = end - start
        c1 = int(y[idx].sum())
        c0 = nn - c1
        value[node] = c1 / nn
        count[node] = nn
        if (max_depth >= 0 and depth >= max_depth) or c1 == 0 or c0 == 0 or nn < 2 * min_leaf:
            continue
        parent_score = float(c0 * c0 + c1 * c1) / nn
        best = parent_score + MIN_GAIN * parent_score
        best_f, best_thr = -1, 0.0
        ys = y[idx]
        for i in range(mtry):
            j = i + rng.next() % (p - i)
            perm[i], perm[j] = perm[j], perm[i]
            f = int(perm[i])
            found = _best_split(X[idx, f], ys, c0, c1, min_leaf)
            if found is not None and found[0] > best:
                best, best_f, best_thr = found[0], f, found[1]
        if best_f < 0:
            continue
        feature[node] = best_f
        threshold[node] = best_thr
        importance[best_f] += best - parent_score
        go_left = X[idx, best_f] <= best_thr
        nl = int(go_left.sum())
        samples[start:end] = np.concatenate([idx[go_left], idx[~go_left]])
        stack.append((start + nl, end, depth + 1, node, False))
        stack.append((start, start + nl, depth + 1, node, True))

    return (feature[:nodes], threshold[:nodes], left[:nodes], right[:nodes], value[:nodes],
            count[:nodes], importance)


def predict_forest(X: np.ndarray, feature: np.ndarray, threshold: np.ndarray, left: np.ndarray,
                   right: np.ndarray, value: np.ndarray, roots: np.ndarray) -> np.ndarray:
    """Mean leaf value over trees whose nodes are concatenated; ``roots`` gives each tree's offset."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    total = np.zeros(n, dtype=np.float64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, int(root), dtype=np.int64)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            r = rows[inner]
            nd = node[inner]
            go_left = X[r, f[inner]] <= threshold[nd]
            node[inner] = np.where(go_left, left[nd], right[nd]) + root
        total += value[node]
    return total / len(roots)
