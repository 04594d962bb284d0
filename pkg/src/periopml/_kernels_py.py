"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and the same floating-point operation order.
"""

from __future__ import annotations

import numpy as np


def find_best_splits(Xs, order, bounds, allowed, g, h, c, G, H, C, lam, min_count, min_h):
    n_nodes = len(bounds) - 1
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.full(n_nodes, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(n_nodes):
            b0, b1 = bounds[k], bounds[k + 1]
            if b1 - b0 < 2:
                continue
            ps = G[k] * G[k] / (H[k] + lam) if H[k] + lam > 0 else 0.0
            for f in np.flatnonzero(allowed[k]):
                r = order[f, b0:b1]
                vs = Xs[f, b0:b1]
                gl = np.cumsum(g[r])[:-1]
                hl = np.cumsum(h[r])[:-1]
                cl = np.cumsum(c[r])[:-1]
                cr = C[k] - cl
                hr = H[k] - hl
                gr = G[k] - gl
                ok = (vs[:-1] < vs[1:]) & (cl >= min_count) & (cr >= min_count)
                ok &= (hl >= min_h) & (hr >= min_h) & (hl + lam > 0) & (hr + lam > 0)
                if not ok.any():
                    continue
                gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - ps
                gain = np.where(ok, gain, -np.inf)
                j = int(np.argmax(gain))
                if gain[j] > best_gain[k]:
                    best_gain[k] = gain[j]
                    best_feat[k] = f
                    lo, hi = vs[j], vs[j + 1]
                    thr = 0.5 * (lo + hi)
                    best_thr[k] = lo if thr >= hi else thr
    return best_gain, best_feat, best_thr


def partition(Xs, order, bounds, child, right, new_bounds, Xs_out, order_out):
    for k in range(len(bounds) - 1):
        if child[k] < 0:
            continue
        b0, b1 = bounds[k], bounds[k + 1]
        seg = order[:, b0:b1]
        # stable: left rows keep their order, then right rows keep theirs
        perm = np.argsort(right[seg], axis=1, kind="stable")
        lo = new_bounds[child[k]]
        order_out[:, lo:lo + (b1 - b0)] = np.take_along_axis(seg, perm, axis=1)
        Xs_out[:, lo:lo + (b1 - b0)] = np.take_along_axis(Xs[:, b0:b1], perm, axis=1)


def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(left[node] >= 0)
    while active.size:
        cur = node[active]
        go_left = X[active, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = active[left[node[active]] >= 0]
    return node


def _extend(path, depth, zf, of, fi):
    path[depth] = [fi, zf, of, 1.0 if depth == 0 else 0.0]
    for i in range(depth - 1, -1, -1):
        path[i + 1][3] += of * path[i][3] * (i + 1) / float(depth + 1)
        path[i][3] = zf * path[i][3] * (depth - i) / float(depth + 1)


def _unwind(path, depth, pi):
    of = path[pi][2]
    zf = path[pi][1]
    nop = path[depth][3]
    for i in range(depth - 1, -1, -1):
        if of != 0:
            tmp = path[i][3]
            path[i][3] = nop * (depth + 1) / ((i + 1) * of)
            nop = tmp - path[i][3] * zf * (depth - i) / float(depth + 1)
        else:
            path[i][3] = (path[i][3] * (depth + 1)) / (zf * (depth - i))
    for i in range(pi, depth):
        path[i][0:3] = path[i + 1][0:3]


def _unwound_sum(path, depth, pi):
    of = path[pi][2]
    zf = path[pi][1]
    nop = path[depth][3]
    total = 0.0
    if of != 0:
        for i in range(depth - 1, -1, -1):
            tmp = nop / ((i + 1) * of)
            total += tmp
            nop = path[i][3] - tmp * zf * (depth - i)
    else:
        for i in range(depth - 1, -1, -1):
            total += path[i][3] / (zf * (depth - i))
    return total * (depth + 1)


def _shap_row(tree, x, phi, scale):
    feature, threshold, left, right, value, cover = tree

    def recurse(node, depth, parent, pzf, pof, pfi):
        path = [list(e) for e in parent[:depth]] + [[0, 0.0, 0.0, 0.0]]
        _extend(path, depth, pzf, pof, pfi)
        if left[node] < 0:
            for i in range(1, depth + 1):
                w = _unwound_sum(path, depth, i)
                phi[path[i][0]] += scale * (w * (path[i][2] - path[i][1]) * value[node])
            return
        split = feature[node]
        if x[split] <= threshold[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        w = cover[node]
        izf = iof = 1.0
        pi = next((k for k in range(depth + 1) if path[k][0] == split), None)
        if pi is not None:
            izf, iof = path[pi][1], path[pi][2]
            _unwind(path, depth, pi)
            depth -= 1
        recurse(hot, depth + 1, path, (cover[hot] / w) * izf, iof, split)
        recurse(cold, depth + 1, path, (cover[cold] / w) * izf, 0.0, split)

    recurse(0, 0, [], 1.0, 1.0, -1)


def tree_shap(X, feature, threshold, left, right, value, cover, max_depth, phi, scale):
    """Accumulate ``scale`` times the path-dependent SHAP values into ``phi``."""
    if phi.shape != X.shape:
        raise ValueError("phi has the wrong shape")
    tree = (feature.tolist(), threshold.tolist(), left.tolist(), right.tolist(), value.tolist(), cover.tolist())
    for i in range(X.shape[0]):
        row = phi[i].tolist()
        _shap_row(tree, X[i].tolist(), row, scale)
        phi[i] = row
