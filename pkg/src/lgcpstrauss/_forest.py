"""Compiled CART builder shared by the classification and regression forests.

Trees grow to purity (classification) or to min_leaf (regression) with
axis-aligned splits chosen among a random feature subset per node; splits
minimize Gini impurity / sum of squared errors.  Nodes live in flat
arrays; feature == -1 marks a leaf and value holds the majority class or
the mean response.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def build_tree(X, y, n_classes, mtry, min_leaf, seed):
    """Grow one tree on a bootstrap resample; n_classes == 0 means regression.

    Returns (feature, threshold, left, right, value, inbag).
    """
    np.random.seed(seed)
    n, d = X.shape

    idx = np.empty(n, dtype=np.int64)
    inbag = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        j = int(np.random.random() * n)
        if j == n:
            j = n - 1
        idx[i] = j
        inbag[j] = 1

    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes)

    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_lo = np.empty(max_nodes, dtype=np.int64)
    stack_hi = np.empty(max_nodes, dtype=np.int64)
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    sp = 1
    node_count = 1

    perm = np.empty(d, dtype=np.int64)
    counts = np.zeros(max(n_classes, 1), dtype=np.int64)
    counts_left = np.zeros(max(n_classes, 1), dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        size = hi - lo

        if n_classes > 0:
            for c in range(n_classes):
                counts[c] = 0
            for i in range(lo, hi):
                counts[int(y[idx[i]])] += 1
            best_c = 0
            for c in range(1, n_classes):
                if counts[c] > counts[best_c]:
                    best_c = c
            value[node] = float(best_c)
            pure = counts[best_c] == size
        else:
            tot = 0.0
            for i in range(lo, hi):
                tot += y[idx[i]]
            mean = tot / size
            value[node] = mean
            ss = 0.0
            for i in range(lo, hi):
                dv = y[idx[i]] - mean
                ss += dv * dv
            pure = ss <= 1e-12 * size

        if pure or size < 2 * min_leaf or size < 2:
            continue

        for f in range(d):
            perm[f] = f
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        best_nl = 0
        examined = 0
        for t in range(d):
            if examined >= mtry and best_f >= 0:
                break
            r = t + int(np.random.random() * (d - t))
            if r == d:
                r = d - 1
            tmp = perm[t]
            perm[t] = perm[r]
            perm[r] = tmp
            f = perm[t]

            vals = np.empty(size)
            for i in range(size):
                vals[i] = X[idx[lo + i], f]
            order = np.argsort(vals)
            if vals[order[0]] == vals[order[size - 1]]:
                continue  # constant feature: does not count against mtry
            examined += 1

            if n_classes > 0:
                for c in range(n_classes):
                    counts_left[c] = 0
                for i in range(size - 1):
                    counts_left[int(y[idx[lo + order[i]]])] += 1
                    vi = vals[order[i]]
                    if vals[order[i + 1]] == vi:
                        continue
                    nl = i + 1
                    nr = size - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    sl = 0.0
                    sr = 0.0
                    for c in range(n_classes):
                        cl = counts_left[c]
                        cr = counts[c] - cl
                        sl += cl * cl
                        sr += cr * cr
                    score = sl / nl + sr / nr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        best_thr = 0.5 * (vi + vals[order[i + 1]])
                        best_nl = nl
            else:
                tot = 0.0
                for i in range(size):
                    tot += y[idx[lo + i]]
                run = 0.0
                for i in range(size - 1):
                    run += y[idx[lo + order[i]]]
                    vi = vals[order[i]]
                    if vals[order[i + 1]] == vi:
                        continue
                    nl = i + 1
                    nr = size - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    score = run * run / nl + (tot - run) * (tot - run) / nr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        best_thr = 0.5 * (vi + vals[order[i + 1]])
                        best_nl = nl

        if best_f < 0:
            continue

        # stable partition of idx[lo:hi]: left-goers fill buf from the top,
        # right-goers from the bottom, both in encounter order
        nl = 0
        nr = 0
        for i in range(lo, hi):
            if X[idx[i], best_f] <= best_thr:
                buf[n - 1 - nl] = idx[i]
                nl += 1
            else:
                buf[nr] = idx[i]
                nr += 1
        for i in range(nl):
            idx[lo + i] = buf[n - 1 - i]
        for i in range(nr):
            idx[lo + nl + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        lchild = node_count
        rchild = node_count + 1
        node_count += 2
        left[node] = lchild
        right[node] = rchild
        stack_node[sp] = lchild
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        sp += 1
        stack_node[sp] = rchild
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        sp += 1

    return (
        feature[:node_count].copy(),
        threshold[:node_count].copy(),
        left[:node_count].copy(),
        right[:node_count].copy(),
        value[:node_count].copy(),
        inbag,
    )


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out
