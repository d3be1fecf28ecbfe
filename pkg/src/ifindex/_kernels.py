"""Compiled hot paths: leaf construction, leaf search and tree traversal.

Everything here operates on flat arrays (node arenas and one contiguous
record array for all leaves) so the Python layer can share trees across
threads; every kernel releases the GIL.

Child references are encoded as ``ref >= 0`` for an internal node and
``ref < 0`` for leaf number ``-ref - 1``. ``ABSENT`` marks a missing
quadtree/octree child.

A ``leaves`` tuple is ``(pts, ids, start, pdim, sdim, slope, base, max_err,
learned)``; plain leaves ignore the model fields.
"""

import numpy as np
from numba import njit

BINARY = 0
LINEAR = 1
EXPONENTIAL = 2

ABSENT = np.iinfo(np.int64).min

# stats slots
NODES = 0
LEAVES = 1
COMPARED = 2

_MIX = np.int64(-7046029254386353131)  # 0x9E3779B97F4A7C15 as int64

_jit = njit(cache=True, nogil=True)


@_jit
def _bump(stats, slot):
    # stats=None compiles to a no-op specialization for timed loops
    if stats is not None:
        stats[slot] += 1


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@_jit
def predict_pos(slope, base, v, k):
    """round-half-up(slope * v + base) clamped to [0, k - 1]."""
    p = slope * v + base + 0.5
    if not p >= 1.0:  # also catches NaN
        return 0
    if p >= k:
        return k - 1
    return int(np.floor(p))


@_jit
def fit_sorted(vals):
    k = vals.shape[0]
    lo = np.float64(vals[0])
    hi = np.float64(vals[k - 1])
    if hi > lo:
        slope = (k - 1) / (hi - lo)
        return slope, 0.0 - slope * lo
    return 0.0, 0.0


@_jit
def errors_sorted(vals, slope, base):
    k = vals.shape[0]
    worst = 0
    total = 0.0
    for i in range(k):
        e = abs(predict_pos(slope, base, np.float64(vals[i]), k) - i)
        if e > worst:
            worst = e
        total += e
    return worst, total / k


@_jit
def dim_profile(pts):
    """Per-dimension (slope, base, max_err, mean_err) of a point block."""
    d = pts.shape[1]
    slopes = np.empty(d)
    bases = np.empty(d)
    maxe = np.empty(d, np.int64)
    meane = np.empty(d)
    for k in range(d):
        vals = np.sort(pts[:, k])
        a, b = fit_sorted(vals)
        mx, mn = errors_sorted(vals, a, b)
        slopes[k] = a
        bases[k] = b
        maxe[k] = mx
        meane[k] = mn
    return slopes, bases, maxe, meane


@_jit
def pick_dim(maxe, meane, strategy):
    best = 0
    for k in range(1, maxe.shape[0]):
        if strategy == BINARY:
            if maxe[k] < maxe[best]:
                best = k
        elif meane[k] < meane[best]:
            best = k
    return best


@_jit
def lex_order(pts, pdim):
    """Stable permutation sorting rows by [pdim, then the other dims ascending]."""
    n, d = pts.shape
    idx = np.arange(n)
    # least significant key first
    for k in range(d - 1, -1, -1):
        if k == pdim:
            continue
        idx = idx[np.argsort(pts[idx, k], kind="mergesort")]
    idx = idx[np.argsort(pts[idx, pdim], kind="mergesort")]
    return idx


@_jit
def build_if_leaves(pts, ids, start, strategy):
    """Sort every leaf segment in place and return its header fields."""
    nleaf = start.shape[0] - 1
    d = pts.shape[1]
    pdim = np.zeros(nleaf, np.int64)
    sdim = np.zeros(nleaf, np.int64)
    slope = np.zeros(nleaf)
    base = np.zeros(nleaf)
    max_err = np.zeros(nleaf, np.int64)
    mean_err = np.zeros(nleaf)
    for j in range(nleaf):
        s = start[j]
        e = start[j + 1]
        seg = pts[s:e]
        a, b, mx, mn = dim_profile(seg)
        p = pick_dim(mx, mn, strategy)
        order = lex_order(seg, p)
        seg_sorted = seg[order].copy()
        ids_sorted = ids[s:e][order].copy()
        pts[s:e] = seg_sorted
        ids[s:e] = ids_sorted
        pdim[j] = p
        sdim[j] = 1 if p == 0 else 0
        if d == 1:
            sdim[j] = p
        slope[j] = a[p]
        base[j] = b[p]
        max_err[j] = mx[p]
        mean_err[j] = mn[p]
    return pdim, sdim, slope, base, max_err, mean_err


# ---------------------------------------------------------------------------
# leaf search
# ---------------------------------------------------------------------------

@_jit
def _lower_bound(pts, s, lo, hi, dim, v, stats):
    while lo < hi:
        mid = (lo + hi) >> 1
        _bump(stats, COMPARED)
        if pts[s + mid, dim] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


@_jit
def leaf_lower_bound(pts, s, k, dim, slope, base, max_err, v, strategy, stats):
    """First position in the leaf whose ``dim`` value is >= v (k if none)."""
    pos = predict_pos(slope, base, np.float64(v), k)
    if strategy == BINARY:
        lo = pos - max_err
        if lo < 0:
            lo = 0
        hi = pos + max_err + 1
        if hi > k:
            hi = k
        return _lower_bound(pts, s, lo, hi, dim, v, stats)
    _bump(stats, COMPARED)
    below = pts[s + pos, dim] < v
    if strategy == LINEAR:
        if below:
            i = pos + 1
            while i < k:
                _bump(stats, COMPARED)
                if pts[s + i, dim] >= v:
                    break
                i += 1
            return i
        i = pos
        while i > 0:
            _bump(stats, COMPARED)
            if pts[s + i - 1, dim] < v:
                break
            i -= 1
        return i
    # exponential: grow the bracket 1, 2, 4, ... then bisect inside it
    step = 1
    if below:
        lo = pos
        while pos + step < k:
            _bump(stats, COMPARED)
            if pts[s + pos + step, dim] >= v:
                break
            lo = pos + step
            step *= 2
        hi = pos + step
        if hi > k:
            hi = k
        return _lower_bound(pts, s, lo + 1, hi, dim, v, stats)
    hi = pos
    while pos - step >= 0:
        _bump(stats, COMPARED)
        if pts[s + pos - step, dim] < v:
            break
        hi = pos - step
        step *= 2
    lo = pos - step + 1
    if lo < 0:
        lo = 0
    return _lower_bound(pts, s, lo, hi, dim, v, stats)


@_jit
def _emit(out, n, idv, acc, collect):
    acc[0] += 1
    acc[1] += (idv + 1) * _MIX
    if collect:
        out[n] = idv
        n += 1
    return n


@_jit
def _row_equals(pts, i, q):
    ok = True
    for k in range(q.shape[0]):
        ok &= pts[i, k] == q[k]
    return ok


@_jit
def _row_inside(pts, i, qlo, qhi):
    # branch-free: scans over sorted runs mispredict badly with early exits
    ok = True
    for k in range(qlo.shape[0]):
        x = pts[i, k]
        ok &= (x >= qlo[k]) & (x <= qhi[k])
    return ok


@_jit
def _emit_if(hit, out, n, idv, acc, collect):
    h = np.int64(hit)
    acc[0] += h
    acc[1] += h * (idv + 1) * _MIX
    if collect and hit:
        out[n] = idv
        n += 1
    return n


@_jit
def leaf_point(leaves, j, q, strategy, out, n, acc, collect, stats):
    pts, ids, start, pdim, sdim, slope, base, max_err, learned = leaves
    s = start[j]
    k = start[j + 1] - s
    _bump(stats, LEAVES)
    if not learned:
        for i in range(s, s + k):
            _bump(stats, COMPARED)
            n = _emit_if(_row_equals(pts, i, q), out, n, ids[i], acc, collect)
        return n
    p = pdim[j]
    sd = sdim[j]
    v = q[p]
    i = leaf_lower_bound(pts, s, k, p, slope[j], base[j], max_err[j], v, strategy, stats)
    if i == k or pts[s + i, p] != v:
        return n
    # equal-pdim run is ordered on the secondary dimension next
    while i < k and pts[s + i, p] == v and pts[s + i, sd] < q[sd]:
        _bump(stats, COMPARED)
        i += 1
    while i < k and pts[s + i, p] == v and pts[s + i, sd] == q[sd]:
        _bump(stats, COMPARED)
        if _row_equals(pts, s + i, q):
            n = _emit(out, n, ids[s + i], acc, collect)
        i += 1
    return n


@_jit
def leaf_range(leaves, j, qlo, qhi, strategy, out, n, acc, collect, stats):
    pts, ids, start, pdim, sdim, slope, base, max_err, learned = leaves
    s = start[j]
    k = start[j + 1] - s
    _bump(stats, LEAVES)
    if not learned:
        for i in range(s, s + k):
            _bump(stats, COMPARED)
            n = _emit_if(_row_inside(pts, i, qlo, qhi), out, n, ids[i], acc, collect)
        return n
    p = pdim[j]
    i = leaf_lower_bound(pts, s, k, p, slope[j], base[j], max_err[j], qlo[p], strategy, stats)
    upper = qhi[p]
    while i < k:
        _bump(stats, COMPARED)
        if pts[s + i, p] > upper:
            break
        n = _emit_if(_row_inside(pts, s + i, qlo, qhi), out, n, ids[s + i], acc, collect)
        i += 1
    return n


# ---------------------------------------------------------------------------
# traversal
#
# ``stack`` is preallocated by the caller (see IndexTree.stack_bound); growing
# it inside the loop would rebind a refcounted array on every iteration.
# ---------------------------------------------------------------------------

@_jit
def _in_bounds(lo, hi, q):
    for k in range(q.shape[0]):
        if q[k] < lo[k] or q[k] > hi[k]:
            return False
    return True


@_jit
def _overlaps(lo, hi, qlo, qhi):
    for k in range(qlo.shape[0]):
        if hi[k] < qlo[k] or lo[k] > qhi[k]:
            return False
    return True


# row-indexed variants: slicing a row per entry costs a refcounted view


@_jit
def _entry_contains(lo, hi, e, q):
    for k in range(q.shape[0]):
        if q[k] < lo[e, k] or q[k] > hi[e, k]:
            return False
    return True


@_jit
def _entry_overlaps(lo, hi, e, qlo, qhi):
    for k in range(qlo.shape[0]):
        if hi[e, k] < qlo[k] or lo[e, k] > qhi[k]:
            return False
    return True


@_jit
def rtree_point(nodes, root, leaves, q, strategy, out, n, acc, collect, stats, stack):
    node_start, entry_lo, entry_hi, entry_child, blo, bhi = nodes
    if not _in_bounds(blo, bhi, q):
        return n
    if root < 0:
        return leaf_point(leaves, -root - 1, q, strategy, out, n, acc, collect, stats)
    stack[0] = root
    top = 1
    while top > 0:
        top -= 1
        m = stack[top]
        _bump(stats, NODES)
        for e in range(node_start[m], node_start[m + 1]):
            if _entry_contains(entry_lo, entry_hi, e, q):
                c = entry_child[e]
                if c < 0:
                    n = leaf_point(leaves, -c - 1, q, strategy, out, n, acc, collect, stats)
                else:
                    stack[top] = c
                    top += 1
    return n


@_jit
def rtree_range(nodes, root, leaves, qlo, qhi, strategy, out, n, acc, collect, stats, stack):
    node_start, entry_lo, entry_hi, entry_child, blo, bhi = nodes
    if not _overlaps(blo, bhi, qlo, qhi):
        return n
    if root < 0:
        return leaf_range(leaves, -root - 1, qlo, qhi, strategy, out, n, acc, collect, stats)
    stack[0] = root
    top = 1
    while top > 0:
        top -= 1
        m = stack[top]
        _bump(stats, NODES)
        for e in range(node_start[m], node_start[m + 1]):
            if _entry_overlaps(entry_lo, entry_hi, e, qlo, qhi):
                c = entry_child[e]
                if c < 0:
                    n = leaf_range(leaves, -c - 1, qlo, qhi, strategy, out, n, acc, collect, stats)
                else:
                    stack[top] = c
                    top += 1
    return n


@_jit
def kd_point(nodes, root, leaves, q, strategy, out, n, acc, collect, stats, stack):
    split_dim, split_val, left, right, blo, bhi = nodes
    if not _in_bounds(blo, bhi, q):
        return n
    c = root
    # ties go left at build time, so a point query follows a single path
    while c >= 0:
        _bump(stats, NODES)
        if q[split_dim[c]] <= split_val[c]:
            c = left[c]
        else:
            c = right[c]
    return leaf_point(leaves, -c - 1, q, strategy, out, n, acc, collect, stats)


@_jit
def kd_range(nodes, root, leaves, qlo, qhi, strategy, out, n, acc, collect, stats, stack):
    split_dim, split_val, left, right, blo, bhi = nodes
    if not _overlaps(blo, bhi, qlo, qhi):
        return n
    stack[0] = root
    top = 1
    while top > 0:
        top -= 1
        c = stack[top]
        if c < 0:
            n = leaf_range(leaves, -c - 1, qlo, qhi, strategy, out, n, acc, collect, stats)
            continue
        _bump(stats, NODES)
        sd = split_dim[c]
        sv = split_val[c]
        if qhi[sd] > sv:
            stack[top] = right[c]
            top += 1
        if qlo[sd] <= sv:
            stack[top] = left[c]
            top += 1
    return n


@_jit
def quad_point(nodes, root, leaves, q, strategy, out, n, acc, collect, stats, stack):
    region_lo, region_hi, children, blo, bhi = nodes
    if not _in_bounds(blo, bhi, q):
        return n
    c = root
    d = q.shape[0]
    while c >= 0:
        _bump(stats, NODES)
        code = 0
        for k in range(d):
            if np.float64(q[k]) > 0.5 * (region_lo[c, k] + region_hi[c, k]):
                code |= 1 << k
        c = children[c, code]
        if c == ABSENT:
            return n
    return leaf_point(leaves, -c - 1, q, strategy, out, n, acc, collect, stats)


@_jit
def quad_range(nodes, root, leaves, qlo, qhi, strategy, out, n, acc, collect, stats, stack):
    region_lo, region_hi, children, blo, bhi = nodes
    if not _overlaps(blo, bhi, qlo, qhi):
        return n
    d = qlo.shape[0]
    nchild = children.shape[1]
    stack[0] = root
    top = 1
    while top > 0:
        top -= 1
        c = stack[top]
        if c < 0:
            n = leaf_range(leaves, -c - 1, qlo, qhi, strategy, out, n, acc, collect, stats)
            continue
        _bump(stats, NODES)
        for code in range(nchild - 1, -1, -1):
            ch = children[c, code]
            if ch == ABSENT:
                continue
            hit = True
            for k in range(d):
                mid = 0.5 * (region_lo[c, k] + region_hi[c, k])
                if code & (1 << k):
                    # upper orthant holds coords > mid
                    if not np.float64(qhi[k]) > mid:
                        hit = False
                        break
                elif np.float64(qlo[k]) > mid:
                    hit = False
                    break
            if hit:
                stack[top] = ch
                top += 1
    return n


# ---------------------------------------------------------------------------
# batch drivers
#
# acc_out[i] receives (match count, order-free id checksum) for query i.
# With collect=True a second pass writes the matching ids into an exactly
# sized CSR buffer; kernels never grow (and so never rebind) their output.
# ---------------------------------------------------------------------------

@_jit
def rtree_point_many(nodes, root, leaves, queries, strategy, acc_out, stats, collect, stack_size):
    nq = queries.shape[0]
    stack = np.empty(stack_size, np.int64)
    offsets = np.zeros(nq + 1, np.int64)
    out = np.empty(0, np.int64)
    for i in range(nq):
        rtree_point(nodes, root, leaves, queries[i], strategy, out, 0, acc_out[i], False, stats, stack)
    if not collect:
        return offsets, out
    for i in range(nq):
        offsets[i + 1] = offsets[i] + acc_out[i, 0]
    out = np.empty(offsets[nq], np.int64)
    scratch = np.zeros(2, np.int64)
    for i in range(nq):
        rtree_point(nodes, root, leaves, queries[i], strategy, out, offsets[i], scratch, True, None, stack)
    return offsets, out


@_jit
def rtree_range_many(nodes, root, leaves, qlo, qhi, strategy, acc_out, stats, collect, stack_size):
    nq = qlo.shape[0]
    stack = np.empty(stack_size, np.int64)
    offsets = np.zeros(nq + 1, np.int64)
    out = np.empty(0, np.int64)
    for i in range(nq):
        rtree_range(nodes, root, leaves, qlo[i], qhi[i], strategy, out, 0, acc_out[i], False, stats, stack)
    if not collect:
        return offsets, out
    for i in range(nq):
        offsets[i + 1] = offsets[i] + acc_out[i, 0]
    out = np.empty(offsets[nq], np.int64)
    scratch = np.zeros(2, np.int64)
    for i in range(nq):
        rtree_range(nodes, root, leaves, qlo[i], qhi[i], strategy, out, offsets[i], scratch, True, None, stack)
    return offsets, out


@_jit
def kd_point_many(nodes, root, leaves, queries, strategy, acc_out, stats, collect, stack_size):
    nq = queries.shape[0]
    stack = np.empty(stack_size, np.int64)
    offsets = np.zeros(nq + 1, np.int64)
    out = np.empty(0, np.int64)
    for i in range(nq):
        kd_point(nodes, root, leaves, queries[i], strategy, out, 0, acc_out[i], False, stats, stack)
    if not collect:
        return offsets, out
    for i in range(nq):
        offsets[i + 1] = offsets[i] + acc_out[i, 0]
    out = np.empty(offsets[nq], np.int64)
    scratch = np.zeros(2, np.int64)
    for i in range(nq):
        kd_point(nodes, root, leaves, queries[i], strategy, out, offsets[i], scratch, True, None, stack)
    return offsets, out


@_jit
def kd_range_many(nodes, root, leaves, qlo, qhi, strategy, acc_out, stats, collect, stack_size):
    nq = qlo.shape[0]
    stack = np.empty(stack_size, np.int64)
    offsets = np.zeros(nq + 1, np.int64)
    out = np.empty(0, np.int64)
    for i in range(nq):
        kd_range(nodes, root, leaves, qlo[i], qhi[i], strategy, out, 0, acc_out[i], False, stats, stack)
    if not collect:
        return offsets, out
    for i in range(nq):
        offsets[i + 1] = offsets[i] + acc_out[i, 0]
    out = np.empty(offsets[nq], np.int64)
    scratch = np.zeros(2, np.int64)
    for i in range(nq):
        kd_range(nodes, root, leaves, qlo[i], qhi[i], strategy, out, offsets[i], scratch, True, None, stack)
    return offsets, out


@_jit
def quad_point_many(nodes, root, leaves, queries, strategy, acc_out, stats, collect, stack_size):
    nq = queries.shape[0]
    stack = np.empty(stack_size, np.int64)
    offsets = np.zeros(nq + 1, np.int64)
    out = np.empty(0, np.int64)
    for i in range(nq):
        quad_point(nodes, root, leaves, queries[i], strategy, out, 0, acc_out[i], False, stats, stack)
    if not collect:
        return offsets, out
    for i in range(nq):
        offsets[i + 1] = offsets[i] + acc_out[i, 0]
    out = np.empty(offsets[nq], np.int64)
    scratch = np.zeros(2, np.int64)
    for i in range(nq):
        quad_point(nodes, root, leaves, queries[i], strategy, out, offsets[i], scratch, True, None, stack)
    return offsets, out


@_jit
def quad_range_many(nodes, root, leaves, qlo, qhi, strategy, acc_out, stats, collect, stack_size):
    nq = qlo.shape[0]
    stack = np.empty(stack_size, np.int64)
    offsets = np.zeros(nq + 1, np.int64)
    out = np.empty(0, np.int64)
    for i in range(nq):
        quad_range(nodes, root, leaves, qlo[i], qhi[i], strategy, out, 0, acc_out[i], False, stats, stack)
    if not collect:
        return offsets, out
    for i in range(nq):
        offsets[i + 1] = offsets[i] + acc_out[i, 0]
    out = np.empty(offsets[nq], np.int64)
    scratch = np.zeros(2, np.int64)
    for i in range(nq):
        quad_range(nodes, root, leaves, qlo[i], qhi[i], strategy, out, offsets[i], scratch, True, None, stack)
    return offsets, out


POINT_MANY = {"rtree": rtree_point_many, "kdtree": kd_point_many, "quadtree": quad_point_many}
RANGE_MANY = {"rtree": rtree_range_many, "kdtree": kd_range_many, "quadtree": quad_range_many}


# ---------------------------------------------------------------------------
# partitioners
# ---------------------------------------------------------------------------

@_jit
def kd_partition(pts, cap):
    """Median-split ``pts`` recursively; returns (perm, leaf_start, node arrays, root)."""
    n, d = pts.shape
    perm = np.arange(n)
    max_nodes = max(1, n)
    split_dim = np.empty(max_nodes, np.int64)
    split_val = np.empty(max_nodes, np.float32)
    left = np.empty(max_nodes, np.int64)
    right = np.empty(max_nodes, np.int64)
    leaf_start = np.empty(n + 1, np.int64)
    nnodes = 0
    nleaf = 0
    levels = 0
    # stack rows: start, end, depth, parent, side (0 left, 1 right, -1 root)
    stack = np.empty((128, 5), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = -1
    top = 1
    root = -1
    while top > 0:
        top -= 1
        s = stack[top, 0]
        e = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        side = stack[top, 4]
        cnt = e - s
        chosen = -1
        sv = np.float32(0.0)
        if cnt > cap:
            for t in range(d):
                k = (depth + t) % d
                vals = np.empty(cnt, np.float32)
                for i in range(cnt):
                    vals[i] = pts[perm[s + i], k]
                mx = vals.max()
                mn = vals.min()
                if mx == mn:
                    continue
                med = np.partition(vals, (cnt - 1) // 2)[(cnt - 1) // 2]
                if med == mx:
                    # more than half the run sits on the maximum: split just below it
                    med = mn
                    for i in range(cnt):
                        if vals[i] < mx and vals[i] > med:
                            med = vals[i]
                chosen = k
                sv = med
                break
        if chosen < 0:
            ref = -nleaf - 1
            leaf_start[nleaf] = s
            nleaf += 1
        else:
            # in-place partition: coords <= sv first
            i = s
            jx = e - 1
            while i <= jx:
                if pts[perm[i], chosen] <= sv:
                    i += 1
                else:
                    tmp = perm[i]
                    perm[i] = perm[jx]
                    perm[jx] = tmp
                    jx -= 1
            m = nnodes
            nnodes += 1
            levels = max(levels, depth + 1)
            split_dim[m] = chosen
            split_val[m] = sv
            ref = m
            if top + 2 > stack.shape[0]:
                grown = np.empty((stack.shape[0] * 2, 5), np.int64)
                grown[:top] = stack[:top]
                stack = grown
            # right pushed first so the left subtree is laid out first
            stack[top, 0] = i
            stack[top, 1] = e
            stack[top, 2] = depth + 1
            stack[top, 3] = m
            stack[top, 4] = 1
            top += 1
            stack[top, 0] = s
            stack[top, 1] = i
            stack[top, 2] = depth + 1
            stack[top, 3] = m
            stack[top, 4] = 0
            top += 1
        if parent < 0:
            root = ref
        elif side == 0:
            left[parent] = ref
        else:
            right[parent] = ref
    leaf_start[nleaf] = n
    return (perm, leaf_start[: nleaf + 1].copy(), split_dim[:nnodes].copy(),
            split_val[:nnodes].copy(), left[:nnodes].copy(), right[:nnodes].copy(), root, levels)


@_jit
def quad_partition(pts, cap, max_depth, root_lo, root_hi):
    """Midpoint-split ``pts`` into 2^d orthants; returns (perm, leaf_start, regions, children, root)."""
    n, d = pts.shape
    nchild = 1 << d
    perm = np.arange(n)
    cap_nodes = 16
    region_lo = np.empty((cap_nodes, d))
    region_hi = np.empty((cap_nodes, d))
    children = np.full((cap_nodes, nchild), ABSENT, np.int64)
    leaf_start = np.empty(n + 1, np.int64)
    nnodes = 0
    nleaf = 0
    levels = 0
    # stack rows: start, end, depth, parent, orthant; regions in a parallel stack
    stack = np.empty((128, 5), np.int64)
    slo = np.empty((128, d))
    shi = np.empty((128, d))
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = -1
    slo[0] = root_lo
    shi[0] = root_hi
    top = 1
    root = -1
    codes = np.empty(n, np.int64)
    buf = np.empty(n, np.int64)
    while top > 0:
        top -= 1
        s = stack[top, 0]
        e = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        orth = stack[top, 4]
        lo = slo[top].copy()
        hi = shi[top].copy()  # rows are overwritten by child pushes below
        cnt = e - s
        if cnt <= cap or depth >= max_depth:
            ref = -nleaf - 1
            leaf_start[nleaf] = s
            nleaf += 1
        else:
            mid = 0.5 * (lo + hi)
            counts = np.zeros(nchild + 1, np.int64)
            for i in range(s, e):
                c = 0
                for k in range(d):
                    if np.float64(pts[perm[i], k]) > mid[k]:
                        c |= 1 << k
                codes[i] = c
                counts[c + 1] += 1
            for c in range(nchild):
                counts[c + 1] += counts[c]
            fill = counts[:nchild].copy()
            for i in range(s, e):
                c = codes[i]
                buf[s + fill[c]] = perm[i]
                fill[c] += 1
            perm[s:e] = buf[s:e]
            if nnodes == region_lo.shape[0]:
                grow = region_lo.shape[0] * 2
                rl = np.empty((grow, d))
                rh = np.empty((grow, d))
                ch = np.full((grow, nchild), ABSENT, np.int64)
                rl[:nnodes] = region_lo[:nnodes]
                rh[:nnodes] = region_hi[:nnodes]
                ch[:nnodes] = children[:nnodes]
                region_lo = rl
                region_hi = rh
                children = ch
            m = nnodes
            nnodes += 1
            levels = max(levels, depth + 1)
            region_lo[m] = lo
            region_hi[m] = hi
            ref = m
            if top + nchild > stack.shape[0]:
                grow = stack.shape[0] * 2 + nchild
                st = np.empty((grow, 5), np.int64)
                sl = np.empty((grow, d))
                sh = np.empty((grow, d))
                st[:top] = stack[:top]
                sl[:top] = slo[:top]
                sh[:top] = shi[:top]
                stack = st
                slo = sl
                shi = sh
            for c in range(nchild - 1, -1, -1):
                cs = s + counts[c]
                ce = s + counts[c + 1]
                if ce == cs:
                    continue
                stack[top, 0] = cs
                stack[top, 1] = ce
                stack[top, 2] = depth + 1
                stack[top, 3] = m
                stack[top, 4] = c
                for k in range(d):
                    if c & (1 << k):
                        slo[top, k] = mid[k]
                        shi[top, k] = hi[k]
                    else:
                        slo[top, k] = lo[k]
                        shi[top, k] = mid[k]
                top += 1
        if parent < 0:
            root = ref
        else:
            children[parent, orth] = ref
    leaf_start[nleaf] = n
    return (perm, leaf_start[: nleaf + 1].copy(), region_lo[:nnodes].copy(),
            region_hi[:nnodes].copy(), children[:nnodes].copy(), root, levels)


@_jit
def segment_envelopes(pts, start):
    """Per-segment (lo, hi) envelopes of consecutive row blocks."""
    nseg = start.shape[0] - 1
    d = pts.shape[1]
    lo = np.empty((nseg, d), np.float32)
    hi = np.empty((nseg, d), np.float32)
    for j in range(nseg):
        for k in range(d):
            a = pts[start[j], k]
            b = a
            for i in range(start[j] + 1, start[j + 1]):
                x = pts[i, k]
                if x < a:
                    a = x
                if x > b:
                    b = x
            lo[j, k] = a
            hi[j, k] = b
    return lo, hi
