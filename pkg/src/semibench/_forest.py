"""Compiled kernels for the reference decision forest.

Trees are grown breadth-first from per-feature presorted row lists. After
each level the lists are stably partitioned into the children's groups, so
every node scans contiguous, already sorted segments and no node ever sorts.
Bootstrap duplicates are folded into integer weights.

Randomness comes from a splitmix64 stream keyed by the tree seed: value
``i`` is ``mix(seed + (i + 1) * GOLDEN)``.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _next(state):
    state[1] += _ONE
    z = state[0] + state[1] * _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _below(state, n):
    # floor(u * n) with u uniform on [0, 1) at 53-bit resolution
    u = np.float64(_next(state) >> _S11) * _INV53
    k = np.int64(u * n)
    if k >= n:
        k = n - 1
    return k


@njit(cache=True)
def grow_tree(X, y, order, sorted_vals, seed, bootstrap, max_depth, min_leaf, mtry):
    """Grow one tree.

    ``order[f]`` lists all training rows sorted by feature ``f`` (stable) and
    ``sorted_vals[f]`` the matching values. Returns per-node arrays
    (feature, threshold, left, right, n_benign, n_malicious); ``feature == -1``
    marks a leaf.
    """
    n, d = X.shape
    state = np.zeros(2, dtype=np.uint64)
    state[0] = np.uint64(seed)

    w = np.zeros(n, dtype=np.int64)
    if bootstrap:
        for _ in range(n):
            w[_below(state, n)] += 1
    else:
        w[:] = 1
    wy = w * y

    m = 0
    for i in range(n):
        m += w[i] > 0

    # Each feature's row list is kept grouped by frontier node, sorted by
    # value inside a group. All lists share the same group boundaries.
    cur = np.empty((d, m), dtype=np.int64)
    curv = np.empty((d, m))
    for f in range(d):
        p = 0
        for q in range(n):
            i = order[f, q]
            cur[f, p] = i
            curv[f, p] = sorted_vals[f, q]
            p += w[i] > 0
    nxt = np.empty((d, m), dtype=np.int64)
    nxtv = np.empty((d, m))
    goes_left = np.zeros(n, dtype=np.int64)

    cap = 2 * m + 1
    feat = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    c0 = np.zeros(cap, dtype=np.int64)
    c1 = np.zeros(cap, dtype=np.int64)
    seg = np.zeros(cap, dtype=np.int64)   # group start within the level's lists
    rows = np.zeros(cap, dtype=np.int64)  # distinct rows in the node
    rows[0] = m
    for i in range(n):
        c1[0] += wy[i]
        c0[0] += w[i] - wy[i]

    n_nodes = 1
    start = 0
    end = 1
    depth = 0
    perm = np.empty(d, dtype=np.int64)

    while start < end:
        width = end - start
        splittable = np.zeros(width, dtype=np.bool_)
        cand = np.zeros((width, d), dtype=np.bool_)
        any_split = False
        for j in range(width):
            nd = start + j
            tot = c0[nd] + c1[nd]
            if c0[nd] > 0 and c1[nd] > 0 and tot >= 2 * min_leaf and (max_depth < 0 or depth < max_depth):
                splittable[j] = True
                any_split = True
                for f in range(d):
                    perm[f] = f
                for t in range(mtry):
                    r = t + _below(state, d - t)
                    tmp = perm[t]
                    perm[t] = perm[r]
                    perm[r] = tmp
                    cand[j, perm[t]] = True
        if not any_split:
            break

        bestf = np.full(width, -1, dtype=np.int64)
        bestthr = np.zeros(width)
        for j in range(width):
            if not splittable[j]:
                continue
            nd = start + j
            s0 = seg[nd]
            s1 = s0 + rows[nd]
            tot0 = c0[nd]
            tot1 = c1[nd]
            best = -1.0
            # pass 0: sampled features; pass 1: the rest, only if every
            # sampled feature was constant within the node
            for pas in range(2):
                if pas == 1 and bestf[j] >= 0:
                    break
                for f in range(d):
                    if cand[j, f] == (pas == 1):
                        continue
                    lw = 0
                    l1 = 0
                    cf = cur[f]
                    vf = curv[f]
                    last = vf[s0]
                    for p in range(s0, s1):
                        v = vf[p]
                        if v > last and lw >= min_leaf:
                            rw = tot0 + tot1 - lw
                            if rw >= min_leaf:
                                l0 = lw - l1
                                r1 = tot1 - l1
                                r0 = rw - r1
                                score = (l0 * l0 + l1 * l1) / lw + (r0 * r0 + r1 * r1) / rw
                                if score > best:
                                    best = score
                                    bestf[j] = f
                                    mid = 0.5 * (last + v)
                                    if not (mid < v):
                                        mid = last
                                    bestthr[j] = mid
                        i = cf[p]
                        lw += w[i]
                        l1 += wy[i]
                        last = v

        # children in frontier order; route their rows
        first_child = n_nodes
        wp = 0
        for j in range(width):
            nd = start + j
            if bestf[j] < 0:
                continue
            f = bestf[j]
            t = bestthr[j]
            feat[nd] = f
            thr[nd] = t
            lc = n_nodes
            left[nd] = lc
            right[nd] = lc + 1
            n_nodes += 2
            nl = 0
            c0f = cur[0]
            for p in range(seg[nd], seg[nd] + rows[nd]):
                i = c0f[p]
                g = np.int64(X[i, f] <= t)
                goes_left[i] = g
                nl += g
                c1[lc] += g * wy[i]
                c0[lc] += g * (w[i] - wy[i])
                c1[lc + 1] += (1 - g) * wy[i]
                c0[lc + 1] += (1 - g) * (w[i] - wy[i])
            rows[lc] = nl
            rows[lc + 1] = rows[nd] - nl
            seg[lc] = wp
            seg[lc + 1] = wp + nl
            wp += rows[nd]
        if n_nodes == first_child:
            break

        # stable partition of every list into the new groups
        for f in range(d):
            cf = cur[f]
            vf = curv[f]
            nf = nxt[f]
            nvf = nxtv[f]
            for j in range(width):
                nd = start + j
                if bestf[j] < 0:
                    continue
                lp = seg[left[nd]]
                rp = seg[right[nd]]
                for p in range(seg[nd], seg[nd] + rows[nd]):
                    i = cf[p]
                    g = goes_left[i]
                    dst = rp + g * (lp - rp)
                    nf[dst] = i
                    nvf[dst] = vf[p]
                    lp += g
                    rp += 1 - g
        cur, nxt = nxt, cur
        curv, nxtv = nxtv, curv
        start = first_child
        end = n_nodes
        depth += 1

    return (feat[:n_nodes].copy(), thr[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), c0[:n_nodes].copy(), c1[:n_nodes].copy())


@njit(cache=True)
def count_votes(X, roots, feat, thr, left, right, vote):
    """Number of trees voting malicious for every row of ``X``."""
    n = X.shape[0]
    out = np.zeros(n, dtype=np.int64)
    # tree-major so one tree's nodes stay cache resident
    for t in range(roots.shape[0]):
        root = roots[t]
        for i in range(n):
            nd = root
            while feat[nd] >= 0:
                if X[i, feat[nd]] <= thr[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            out[i] += vote[nd]
    return out
