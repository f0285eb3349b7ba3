# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t
from libc.math cimport log2
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef uint64_t DEFAULT_STATE = 0x9E3779B97F4A7C15ULL
cdef double MIN_GAIN = 1e-12


cdef inline void _swap(double* v, int64_t* l, int64_t i, int64_t j) noexcept nogil:
    cdef double tv = v[i]
    cdef int64_t tl = l[i]
    v[i] = v[j]
    l[i] = l[j]
    v[j] = tv
    l[j] = tl


cdef inline double _median3(double* v, int64_t n) noexcept nogil:
    cdef double a = v[0], b = v[n // 2], c = v[n - 1]
    if a < b:
        if b < c:
            return b
        elif a < c:
            return c
        return a
    if b < c:
        if a < c:
            return a
        return c
    return b


cdef void _sift_down(double* v, int64_t* l, int64_t start, int64_t end) noexcept nogil:
    cdef int64_t child, maxind, root = start
    while True:
        child = root * 2 + 1
        maxind = root
        if child < end and v[maxind] < v[child]:
            maxind = child
        if child + 1 < end and v[maxind] < v[child + 1]:
            maxind = child + 1
        if maxind == root:
            return
        _swap(v, l, root, maxind)
        root = maxind


cdef void _heapsort(double* v, int64_t* l, int64_t n) noexcept nogil:
    cdef int64_t start = (n - 2) // 2, end = n
    while True:
        _sift_down(v, l, start, end)
        if start == 0:
            break
        start -= 1
    end = n - 1
    while end > 0:
        _swap(v, l, 0, end)
        _sift_down(v, l, 0, end)
        end -= 1


cdef void _introsort(double* v, int64_t* l, int64_t n, int maxd) noexcept nogil:
    """Sort values ``v`` ascending, carrying labels ``l`` along (three-way quicksort)."""
    cdef double pivot
    cdef int64_t i, lt, gt
    while n > 1:
        if maxd <= 0:
            _heapsort(v, l, n)
            return
        maxd -= 1
        pivot = _median3(v, n)
        i = 0
        lt = 0
        gt = n
        while i < gt:
            if v[i] < pivot:
                _swap(v, l, i, lt)
                i += 1
                lt += 1
            elif v[i] > pivot:
                gt -= 1
                _swap(v, l, i, gt)
            else:
                i += 1
        _introsort(v, l, lt, maxd)
        v += gt
        l += gt
        n -= gt


cdef inline uint64_t _next(uint64_t* state) noexcept nogil:
    cdef uint64_t x = state[0]
    x ^= x >> 12
    x ^= x << 25
    x ^= x >> 27
    state[0] = x
    return x * 0x2545F4914F6CDD1DULL


def build_tree(X, y, samples, int64_t max_features, int64_t max_depth, int64_t min_samples_leaf,
               seed):
    # feature-major copy: per-feature gathers touch one contiguous row
    cdef double[:, ::1] XT = np.ascontiguousarray(np.asarray(X, dtype=np.float64).T)
    cdef int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef int64_t[::1] sv = np.array(samples, dtype=np.int64)
    cdef int64_t n = sv.shape[0]
    cdef int64_t p = XT.shape[0]
    cdef int64_t cap = 2 * n + 1
    feature_a = np.full(cap, -1, dtype=np.int64)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    value_a = np.zeros(cap, dtype=np.float64)
    count_a = np.zeros(cap, dtype=np.int64)
    importance_a = np.zeros(p, dtype=np.float64)
    cdef int64_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int64_t[::1] left = left_a
    cdef int64_t[::1] right = right_a
    cdef double[::1] value = value_a
    cdef int64_t[::1] count = count_a
    cdef double[::1] importance = importance_a
    cdef int64_t[::1] perm = np.arange(p, dtype=np.int64)
    cdef int64_t[::1] scratch = np.empty(max(n, 1), dtype=np.int64)

    cdef uint64_t state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    if state == 0:
        state = DEFAULT_STATE
    cdef int64_t mtry = max_features if max_features < p else p
    cdef int64_t min_leaf = min_samples_leaf if min_samples_leaf > 1 else 1

    # explicit stack: start, end, depth, parent, is_left
    cdef int64_t[:, ::1] stack = np.empty((cap + 1, 5), dtype=np.int64)
    cdef int64_t top = 0
    cdef double* vals = <double*>malloc(max(n, 1) * sizeof(double))
    cdef int64_t* labs = <int64_t*>malloc(max(n, 1) * sizeof(int64_t))
    if vals == NULL or labs == NULL:
        free(vals)
        free(labs)
        raise MemoryError()

    cdef int64_t nodes = 0, node, start, end, depth, parent, is_left
    cdef int64_t nn, c0, c1, i, j, k, f, s, tmp, best_f, l0, l1, r0, r1, nl, nr, a, b
    cdef double parent_score, best, best_thr, score, lo, hi, thr
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    top = 1
    try:
        while top > 0:
            top -= 1
            start = stack[top, 0]
            end = stack[top, 1]
            depth = stack[top, 2]
            parent = stack[top, 3]
            is_left = stack[top, 4]
            node = nodes
            nodes += 1
            if parent >= 0:
                if is_left:
                    left[parent] = node
                else:
                    right[parent] = node
            nn = end - start
            c1 = 0
            for i in range(start, end):
                c1 += yv[sv[i]]
            c0 = nn - c1
            value[node] = <double>c1 / nn
            count[node] = nn
            if (max_depth >= 0 and depth >= max_depth) or c1 == 0 or c0 == 0 or nn < 2 * min_leaf:
                continue
            parent_score = <double>(c0 * c0 + c1 * c1) / nn
            best = parent_score + MIN_GAIN * parent_score
            best_f = -1
            best_thr = 0.0
            for i in range(mtry):
                j = i + <int64_t>(_next(&state) % <uint64_t>(p - i))
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
                f = perm[i]
                for k in range(nn):
                    s = sv[start + k]
                    vals[k] = XT[f, s]
                    labs[k] = yv[s]
                _introsort(vals, labs, nn, 2 * <int>log2(<double>nn))
                if vals[0] == vals[nn - 1]:
                    continue
                l0 = 0
                l1 = 0
                for k in range(nn - 1):
                    if labs[k]:
                        l1 += 1
                    else:
                        l0 += 1
                    nl = k + 1
                    nr = nn - nl
                    if nl < min_leaf or nr < min_leaf or vals[k] == vals[k + 1]:
                        continue
                    r0 = c0 - l0
                    r1 = c1 - l1
                    score = <double>(l0 * l0 + l1 * l1) / <double>nl + <double>(r0 * r0 + r1 * r1) / <double>nr
                    if score > best:
                        best = score
                        best_f = f
                        lo = vals[k]
                        hi = vals[k + 1]
                        thr = (lo + hi) * 0.5
                        if thr >= hi:
                            thr = lo
                        best_thr = thr
            if best_f < 0:
                continue
            feature[node] = best_f
            threshold[node] = best_thr
            importance[best_f] += best - parent_score
            # partition: left block keeps original order, right block too
            a = start
            b = 0
            for i in range(start, end):
                s = sv[i]
                if XT[best_f, s] <= best_thr:
                    sv[a] = s
                    a += 1
                else:
                    scratch[b] = s
                    b += 1
            for i in range(b):
                sv[a + i] = scratch[i]
            stack[top, 0] = a
            stack[top, 1] = end
            stack[top, 2] = depth + 1
            stack[top, 3] = node
            stack[top, 4] = 0
            top += 1
            stack[top, 0] = start
            stack[top, 1] = a
            stack[top, 2] = depth + 1
            stack[top, 3] = node
            stack[top, 4] = 1
            top += 1
    finally:
        free(vals)
        free(labs)

    return (feature_a[:nodes].copy(), threshold_a[:nodes].copy(), left_a[:nodes].copy(),
            right_a[:nodes].copy(), value_a[:nodes].copy(), count_a[:nodes].copy(), importance_a)


def predict_forest(X, feature, threshold, left, right, value, roots):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef int64_t[::1] fv = np.ascontiguousarray(feature, dtype=np.int64)
    cdef double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef int64_t[::1] lv = np.ascontiguousarray(left, dtype=np.int64)
    cdef int64_t[::1] rv = np.ascontiguousarray(right, dtype=np.int64)
    cdef double[::1] vv = np.ascontiguousarray(value, dtype=np.float64)
    cdef int64_t[::1] roots_v = np.ascontiguousarray(roots, dtype=np.int64)
    cdef int64_t n = Xv.shape[0]
    cdef int64_t t, i, node, root
    out_a = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_a
    for t in range(roots_v.shape[0]):
        root = roots_v[t]
        for i in range(n):
            node = root
            while fv[node] >= 0:
                if Xv[i, fv[node]] <= tv[node]:
                    node = lv[node] + root
                else:
                    node = rv[node] + root
            out[i] += vv[node]
    for i in range(n):
        out[i] /= roots_v.shape[0]
    return out_a
