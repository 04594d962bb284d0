# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernels: level-wise split search and partitioning, tree traversal, TreeSHAP.

Arithmetic order matches ``_kernels_py`` so both backends grow identical trees.
"""

import numpy as np

from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

ctypedef long long i64


def find_best_splits(
    const double[:, ::1] Xs,
    const i64[:, ::1] order,
    const i64[::1] bounds,
    const unsigned char[:, ::1] allowed,
    const double[::1] g,
    const double[::1] h,
    const double[::1] c,
    const double[::1] G,
    const double[::1] H,
    const double[::1] C,
    double lam,
    double min_count,
    double min_h,
):
    """Best split per node. Node ``k`` owns positions ``bounds[k]:bounds[k+1]``
    of every feature row of ``order``/``Xs``, sorted by value within the segment."""
    cdef Py_ssize_t n_nodes = bounds.shape[0] - 1
    cdef Py_ssize_t p = order.shape[0]
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.full(n_nodes, np.nan)
    cdef double[::1] bg = best_gain
    cdef i64[::1] bf = best_feat
    cdef double[::1] bt = best_thr
    cdef Py_ssize_t f, i, k, r, b0, b1
    cdef double v, last, gl, gr, hl, hr, cl, cr, gain, thr, ps

    with nogil:
        for k in range(n_nodes):
            b0 = bounds[k]
            b1 = bounds[k + 1]
            ps = 0.0
            if H[k] + lam > 0:
                ps = G[k] * G[k] / (H[k] + lam)
            for f in range(p):
                if not allowed[k, f]:
                    continue
                gl = 0.0
                hl = 0.0
                cl = 0.0
                last = 0.0
                for i in range(b0, b1):
                    r = order[f, i]
                    v = Xs[f, i]
                    if i > b0 and v > last:
                        cr = C[k] - cl
                        if cl >= min_count and cr >= min_count:
                            hr = H[k] - hl
                            if hl >= min_h and hr >= min_h and hl + lam > 0 and hr + lam > 0:
                                gr = G[k] - gl
                                gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - ps
                                if gain > bg[k]:
                                    bg[k] = gain
                                    bf[k] = f
                                    thr = 0.5 * (last + v)
                                    if thr >= v:
                                        thr = last
                                    bt[k] = thr
                    gl += g[r]
                    hl += h[r]
                    cl += c[r]
                    last = v
    return best_gain, best_feat, best_thr


def partition(
    const double[:, ::1] Xs,
    const i64[:, ::1] order,
    const i64[::1] bounds,
    const i64[::1] child,
    const unsigned char[::1] right,
    const i64[::1] new_bounds,
    double[:, ::1] Xs_out,
    i64[:, ::1] order_out,
):
    """Stable split of each splitting node's segment into left then right child
    segments (``child[k]`` is the left child's slot, -1 for nodes that stop)."""
    cdef Py_ssize_t n_nodes = bounds.shape[0] - 1
    cdef Py_ssize_t p = order.shape[0]
    cdef Py_ssize_t f, i, k, r, lo, hi
    with nogil:
        for f in range(p):
            for k in range(n_nodes):
                if child[k] < 0:
                    continue
                lo = new_bounds[child[k]]
                hi = new_bounds[child[k] + 1]
                for i in range(bounds[k], bounds[k + 1]):
                    r = order[f, i]
                    if right[r]:
                        order_out[f, hi] = r
                        Xs_out[f, hi] = Xs[f, i]
                        hi += 1
                    else:
                        order_out[f, lo] = r
                        Xs_out[f, lo] = Xs[f, i]
                        lo += 1


def apply_tree(
    const double[:, ::1] X,
    const i64[::1] feature,
    const double[::1] threshold,
    const i64[::1] left,
    const i64[::1] right,
):
    cdef Py_ssize_t n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef i64[::1] leaf = out
    cdef Py_ssize_t i, node
    with nogil:
        for i in range(n):
            node = 0
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            leaf[i] = node
    return out


cdef struct PathElem:
    i64 feature
    double zero_fraction
    double one_fraction
    double pweight


cdef inline void extend_path(PathElem* path, Py_ssize_t depth, double zf, double of, i64 fi) noexcept nogil:
    cdef Py_ssize_t i
    path[depth].feature = fi
    path[depth].zero_fraction = zf
    path[depth].one_fraction = of
    path[depth].pweight = 1.0 if depth == 0 else 0.0
    i = depth - 1
    while i >= 0:
        path[i + 1].pweight += of * path[i].pweight * (i + 1) / <double>(depth + 1)
        path[i].pweight = zf * path[i].pweight * (depth - i) / <double>(depth + 1)
        i -= 1


cdef inline void unwind_path(PathElem* path, Py_ssize_t depth, Py_ssize_t pi) noexcept nogil:
    cdef double of = path[pi].one_fraction
    cdef double zf = path[pi].zero_fraction
    cdef double nop = path[depth].pweight
    cdef double tmp
    cdef Py_ssize_t i = depth - 1
    while i >= 0:
        if of != 0:
            tmp = path[i].pweight
            path[i].pweight = nop * (depth + 1) / ((i + 1) * of)
            nop = tmp - path[i].pweight * zf * (depth - i) / <double>(depth + 1)
        else:
            path[i].pweight = (path[i].pweight * (depth + 1)) / (zf * (depth - i))
        i -= 1
    for i in range(pi, depth):
        path[i].feature = path[i + 1].feature
        path[i].zero_fraction = path[i + 1].zero_fraction
        path[i].one_fraction = path[i + 1].one_fraction


cdef inline double unwound_path_sum(PathElem* path, Py_ssize_t depth, Py_ssize_t pi) noexcept nogil:
    cdef double of = path[pi].one_fraction
    cdef double zf = path[pi].zero_fraction
    cdef double nop = path[depth].pweight
    cdef double total = 0.0
    cdef double tmp
    cdef Py_ssize_t i = depth - 1
    if of != 0:
        while i >= 0:
            tmp = nop / ((i + 1) * of)
            total += tmp
            nop = path[i].pweight - tmp * zf * (depth - i)
            i -= 1
    else:
        while i >= 0:
            total += path[i].pweight / (zf * (depth - i))
            i -= 1
    return total * (depth + 1)


cdef void shap_recurse(
    const i64* feature, const double* threshold, const i64* left, const i64* right,
    const double* value, const double* cover, const double* x, double* phi,
    Py_ssize_t node, Py_ssize_t depth, PathElem* parent_path,
    double pzf, double pof, i64 pfi, double scale,
) noexcept nogil:
    cdef PathElem* path = parent_path + depth + 1
    cdef Py_ssize_t i, pi, hot, cold
    cdef double w, izf, iof
    cdef i64 split
    memcpy(path, parent_path, (depth + 1) * sizeof(PathElem))
    extend_path(path, depth, pzf, pof, pfi)
    if left[node] < 0:
        for i in range(1, depth + 1):
            w = unwound_path_sum(path, depth, i)
            phi[path[i].feature] += scale * (w * (path[i].one_fraction - path[i].zero_fraction) * value[node])
        return
    split = feature[node]
    if x[split] <= threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]
    w = cover[node]
    izf = 1.0
    iof = 1.0
    pi = 0
    while pi <= depth:
        if path[pi].feature == split:
            break
        pi += 1
    if pi != depth + 1:
        izf = path[pi].zero_fraction
        iof = path[pi].one_fraction
        unwind_path(path, depth, pi)
        depth -= 1
    shap_recurse(feature, threshold, left, right, value, cover, x, phi,
                 hot, depth + 1, path, (cover[hot] / w) * izf, iof, split, scale)
    shap_recurse(feature, threshold, left, right, value, cover, x, phi,
                 cold, depth + 1, path, (cover[cold] / w) * izf, 0.0, split, scale)


def tree_shap(
    const double[:, ::1] X,
    const i64[::1] feature,
    const double[::1] threshold,
    const i64[::1] left,
    const i64[::1] right,
    const double[::1] value,
    const double[::1] cover,
    Py_ssize_t max_depth,
    double[:, ::1] phi,
    double scale,
):
    """Accumulate ``scale`` times the path-dependent SHAP values into ``phi``."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t size = (max_depth + 2) * (max_depth + 3) // 2 + 4
    cdef Py_ssize_t i
    cdef PathElem* buf
    if phi.shape[0] != n or phi.shape[1] != p:
        raise ValueError("phi has the wrong shape")
    buf = <PathElem*> malloc(size * sizeof(PathElem))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                shap_recurse(&feature[0], &threshold[0], &left[0], &right[0], &value[0], &cover[0],
                             &X[i, 0], &phi[i, 0], 0, 0, buf, 1.0, 1.0, -1, scale)
    finally:
        free(buf)
