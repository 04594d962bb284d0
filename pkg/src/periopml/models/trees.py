"""Level-wise tree growth shared by CART, random forest, AdaBoost and gradient boosting.

All four families score candidate splits with one function of per-row
gradient ``g`` and hessian ``h``::

    gain = GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)

With ``g = w*y``, ``h = w`` and ``lam = 0`` this is twice the weighted Gini
decrease, so the impurity trees and the Newton boosters share one kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import kernels
from .base import LOG_ODDS, TrainedModel
from .params import AdaBoostParams, ForestParams, GradBoostParams, TreeParams

Stat = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.left[k] >= 0:
                d[self.left[k]] = d[self.right[k]] = d[k] + 1
        return int(d.max())

    def apply(self, X: np.ndarray, backend=None) -> np.ndarray:
        kern = backend or kernels
        return kern.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray, backend=None) -> np.ndarray:
        return self.value[self.apply(X, backend)]

    def expected_value(self) -> float:
        leaves = self.left < 0
        return float(np.sum(self.value[leaves] * self.cover[leaves]) / self.cover[0])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        thr = np.array([np.nan if t is None else t for t in d["threshold"]], dtype=np.float64)
        i64 = lambda k: np.asarray(d[k], dtype=np.int64)  # noqa: E731
        f64 = lambda k: np.asarray(d[k], dtype=np.float64)  # noqa: E731
        return cls(i64("feature"), thr, i64("left"), i64("right"), f64("value"), f64("cover"))


def presort(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature stable ascending row order and the matching sorted values, both (p, n)."""
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))
    values = np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))
    return order, values


def grow_tree(
    X: np.ndarray,
    sorted_: tuple[np.ndarray, np.ndarray],
    g: np.ndarray,
    h: np.ndarray,
    count: np.ndarray,
    *,
    max_depth: int | None,
    leaf_value: Stat,
    accept: Callable[[np.ndarray], np.ndarray],
    splittable: Stat,
    lam: float = 0.0,
    min_count: float = 1.0,
    min_h: float = 0.0,
    feature_sampler: Callable[[int], np.ndarray] | None = None,
    backend=None,
) -> Tree:
    """Grow one tree breadth-first. Rows with ``count == 0`` take no part."""
    kern = backend or kernels
    n, p = X.shape
    order, Xs = sorted_
    live = count > 0
    node_of = np.where(live, 0, -1).astype(np.int64)
    if not live.all():
        # drop unused rows; every feature row keeps the same number of entries
        keep = live[order]
        order = np.ascontiguousarray(order[keep].reshape(p, -1))
        Xs = np.ascontiguousarray(Xs[keep].reshape(p, -1))
    # node k of the current level owns columns bounds[k]:bounds[k+1] of order/Xs
    bounds = np.array([0, order.shape[1]], dtype=np.int64)
    feature, threshold, left, right = [-1], [np.nan], [-1], [-1]
    stats: dict[int, tuple[float, float, float]] = {}
    level = [0]
    depth = 0
    lam, min_count, min_h = float(lam), float(min_count), float(min_h)
    while level:
        m = len(level)
        act = node_of >= 0
        idx = node_of[act]
        G = np.bincount(idx, weights=g[act], minlength=m)
        H = np.bincount(idx, weights=h[act], minlength=m)
        C = np.bincount(idx, weights=count[act], minlength=m)
        for k, gid in enumerate(level):
            stats[gid] = (G[k], H[k], C[k])
        can = splittable(G, H, C) & (C >= 2 * min_count)
        if max_depth is not None and depth >= max_depth:
            can[:] = False
        if not can.any():
            break
        allowed = np.ones((m, p), dtype=np.uint8) if feature_sampler is None else feature_sampler(m)
        allowed[~can] = 0
        gain, feat, thr = kern.find_best_splits(
            Xs, order, bounds, np.ascontiguousarray(allowed), g, h, count, G, H, C, lam, min_count, min_h,
        )
        if feature_sampler is not None:
            # like common forest implementations, a node whose sampled features
            # are all constant falls back to the features it did not draw
            retry = can & (feat < 0)
            if retry.any():
                rest = np.where(retry[:, None], 1 - allowed, 0).astype(np.uint8)
                g2, f2, t2 = kern.find_best_splits(
                    Xs, order, bounds, rest, g, h, count, G, H, C, lam, min_count, min_h,
                )
                gain, feat, thr = np.where(retry, g2, gain), np.where(retry, f2, feat), np.where(retry, t2, thr)
        ok = can & (feat >= 0) & accept(gain)
        if not ok.any():
            break
        child = np.full(m, -1, dtype=np.int64)
        new_level: list[int] = []
        for j, k in enumerate(np.flatnonzero(ok)):
            gid = level[k]
            lid = len(feature)
            feature[gid], threshold[gid], left[gid], right[gid] = int(feat[k]), float(thr[k]), lid, lid + 1
            feature += [-1, -1]
            threshold += [np.nan, np.nan]
            left += [-1, -1]
            right += [-1, -1]
            child[k] = 2 * j
            new_level += [lid, lid + 1]
        rows = order[0]
        k_rows = np.repeat(np.arange(m), np.diff(bounds))
        moving = ok[k_rows]
        rows, k_rows = rows[moving], k_rows[moving]
        goes_right = X[rows, feat[k_rows]] > thr[k_rows]
        slot = child[k_rows] + goes_right
        node_of[:] = -1
        node_of[rows] = slot
        if max_depth is None or depth + 1 < max_depth:
            new_bounds = np.zeros(2 * int(ok.sum()) + 1, dtype=np.int64)
            np.cumsum(np.bincount(slot, minlength=len(new_bounds) - 1), out=new_bounds[1:])
            right_of = np.zeros(n, dtype=np.uint8)
            right_of[rows] = goes_right
            Xs2 = np.empty((p, rows.size))
            order2 = np.empty((p, rows.size), dtype=np.int64)
            kern.partition(Xs, order, bounds, child, right_of, new_bounds, Xs2, order2)
            Xs, order, bounds = Xs2, order2, new_bounds
        level = new_level
        depth += 1
    total = len(feature)
    S = np.array([stats[k] for k in range(total)], dtype=np.float64).reshape(total, 3)
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(leaf_value(S[:, 0], S[:, 1], S[:, 2]), dtype=np.float64),
        S[:, 2].copy(),
    )


def _impure(G, H, C):
    return (G > 0) & (G < H)


def _any_gain(gain):
    return np.isfinite(gain)


def _fraction(G, H, C):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(H > 0, G / np.where(H > 0, H, 1.0), 0.0)


def grow_cart(X, sorted_, y, weight, count, *, max_depth, min_samples_leaf, feature_sampler=None, backend=None) -> Tree:
    """Impurity tree. Leaf value is the weighted positive fraction."""
    return grow_tree(
        X, sorted_, weight * y, weight.copy(), count,
        max_depth=max_depth, leaf_value=_fraction, accept=_any_gain, splittable=_impure,
        min_count=min_samples_leaf, feature_sampler=feature_sampler, backend=backend,
    )


class _TreeEnsemble(TrainedModel):
    """Prediction is ``base + scale * sum(tree outputs)``."""

    def __init__(self, params, columns, roles, trees: list[Tree], base: float = 0.0, scale: float = 1.0):
        super().__init__(params, columns, roles)
        self.trees = trees
        self.base = float(base)
        self.scale = float(scale)

    def _decision(self, X):
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)
        return self.base + self.scale * out

    @property
    def complexity(self) -> int:
        return int(sum(t.n_nodes for t in self.trees))

    def _state(self):
        return {"base": self.base, "scale": self.scale, "trees": [t.to_dict() for t in self.trees], **self._extra_state()}

    def _extra_state(self) -> dict:
        return {}

    @classmethod
    def _from_state(cls, params, columns, roles, state):
        m = cls(params, columns, roles, [Tree.from_dict(t) for t in state["trees"]], state["base"], state["scale"])
        m._load_extra(state)
        return m

    def _load_extra(self, state) -> None:
        pass


class TreeModel(_TreeEnsemble):
    family = "tree"


class ForestModel(_TreeEnsemble):
    family = "random_forest"


class AdaBoostModel(_TreeEnsemble):
    family = "ada_boost"
    output_space = LOG_ODDS

    skipped_rounds = 0

    def _extra_state(self):
        return {"skipped_rounds": int(self.skipped_rounds)}

    def _load_extra(self, state):
        self.skipped_rounds = int(state.get("skipped_rounds", 0))


class GradBoostModel(_TreeEnsemble):
    family = "grad_boost"
    output_space = LOG_ODDS

    train_loss: list[float] = []

    def _extra_state(self):
        return {"train_loss": list(self.train_loss)}

    def _load_extra(self, state):
        self.train_loss = list(state.get("train_loss", []))


def fit_tree(X, y, params: TreeParams, columns, roles, backend=None) -> TreeModel:
    ones = np.ones(X.shape[0])
    tree = grow_cart(X, presort(X), y, ones, ones, max_depth=params.max_depth,
                     min_samples_leaf=params.min_samples_leaf, backend=backend)
    return TreeModel(params, columns, roles, [tree])


def fit_forest(X, y, params: ForestParams, columns, roles, seed: int, backend=None) -> ForestModel:
    n, p = X.shape
    sorted_ = presort(X)
    k = params.features_per_split or int(np.ceil(np.sqrt(p)))
    k = min(k, p)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        if params.bootstrap:
            count = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
        else:
            count = np.ones(n)

        def sampler(m, rng=rng):
            allowed = np.zeros((m, p), dtype=np.uint8)
            for r in range(m):
                allowed[r, rng.choice(p, size=k, replace=False)] = 1
            return allowed

        trees.append(grow_cart(X, sorted_, y, count, count, max_depth=params.max_depth,
                               min_samples_leaf=params.min_samples_leaf,
                               feature_sampler=None if k == p else sampler, backend=backend))
    return ForestModel(params, columns, roles, trees, 0.0, 1.0 / len(trees))


def fit_ada_boost(X, y, params: AdaBoostParams, columns, roles, backend=None) -> AdaBoostModel:
    """Discrete two-class AdaBoost; the ensemble score is read as log-odds."""
    n = X.shape[0]
    sorted_ = presort(X)
    ones = np.ones(n)
    w = np.full(n, 1.0 / n)
    sign = 2.0 * y - 1.0
    trees: list[Tree] = []
    skipped = 0
    for r in range(params.n_rounds):
        vote = lambda G, H, C: np.where(_fraction(G, H, C) > 0.5, 1.0, -1.0)  # noqa: E731
        t = grow_tree(X, sorted_, w * y, w.copy(), ones, max_depth=params.stump_depth,
                      leaf_value=vote, accept=_any_gain, splittable=_impure, backend=backend)
        pred = t.predict(X, backend)
        err = float(np.sum(w[pred != sign]) / np.sum(w))
        if err >= 0.5:
            # weights would not change, so every remaining round fails the same way
            skipped = params.n_rounds - r
            break
        alpha = np.log((1.0 - max(err, 1e-10)) / max(err, 1e-10))
        t.value = t.value * alpha
        trees.append(t)
        if err == 0.0:
            break
        w = w * np.exp(alpha * (pred != sign))
        w = w / w.sum()
    m = AdaBoostModel(params, columns, roles, trees)
    m.skipped_rounds = skipped
    return m


def fit_grad_boost(X, y, params: GradBoostParams, columns, roles, backend=None) -> GradBoostModel:
    """Second-order boosting on the logistic loss."""
    n = X.shape[0]
    sorted_ = presort(X)
    ones = np.ones(n)
    prior = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    base = float(np.log(prior / (1 - prior)))
    F = np.full(n, base)
    lam, lr, gamma = params.l2_lambda, params.learning_rate, params.gamma_min_gain
    leaf = lambda G, H, C: -lr * G / (H + lam)  # noqa: E731
    accept = lambda gain: 0.5 * gain - gamma > 0  # noqa: E731
    always = lambda G, H, C: np.ones(G.shape, dtype=bool)  # noqa: E731
    trees: list[Tree] = []
    losses: list[float] = []
    for _ in range(params.n_rounds):
        p = 1.0 / (1.0 + np.exp(-F))
        g = p - y
        h = np.maximum(p * (1.0 - p), 1e-16)
        t = grow_tree(X, sorted_, g, h, ones, max_depth=params.max_depth, leaf_value=leaf, accept=accept,
                      splittable=always, lam=lam, min_h=params.min_child_hessian, backend=backend)
        F = F + t.predict(X, backend)
        trees.append(t)
        losses.append(float(np.mean(np.logaddexp(0.0, F) - y * F)))
    m = GradBoostModel(params, columns, roles, trees, base, 1.0)
    m.train_loss = losses
    return m
