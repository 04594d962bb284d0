"""Shapley attributions for every model family, rankings, and the beeswarm summary.

Tree families use exact path-dependent TreeSHAP over node covers. Logistic
regression uses the closed form against a background mean. Naive Bayes and
the MLP use permutation sampling with background imputation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .models import LOG_ODDS, PROBABILITY, TrainedModel
from .models.base import as_matrix
from .models.linear import LogisticModel
from .models.trees import _TreeEnsemble
from .svg import Canvas, diverging

BACKGROUND_CAP = 1000
DEFAULT_SAMPLES = 256


@dataclass(frozen=True, eq=False)
class ShapMatrix:
    phi: np.ndarray
    base_value: float
    output_space: str
    columns: tuple[str, ...]

    def reconstruct(self) -> np.ndarray:
        """Model output implied by local accuracy."""
        return self.phi.sum(axis=1) + self.base_value

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["base_value", *self.columns])
            for row in self.phi:
                w.writerow([repr(self.base_value), *(repr(float(v)) for v in row)])


@dataclass(frozen=True)
class FeatureImpact:
    name: str
    index: int
    rank: int
    mean_abs: float
    directionality: float


def _check_covers(t) -> None:
    if t.cover is None or t.cover.size != t.feature.size or not t.cover[0] > 0:
        raise ValueError("tree lacks node cover counts")
    inner = np.flatnonzero(t.left >= 0)
    if np.any(t.cover[inner] != t.cover[t.left[inner]] + t.cover[t.right[inner]]):
        raise ValueError("tree cover counts are inconsistent (parent != left + right)")


def tree_shap(model: TrainedModel, X, backend=None) -> ShapMatrix:
    """Exact path-dependent TreeSHAP, summed over the ensemble with its stage scale."""
    if not isinstance(model, _TreeEnsemble):
        raise ValueError(f"tree_shap needs a tree-based model, got {model.family}")
    kern = backend or kernels
    arr = model._check(X)
    phi = np.zeros(arr.shape)
    base = model.base
    for t in model.trees:
        _check_covers(t)
        kern.tree_shap(arr, t.feature, t.threshold, t.left, t.right, t.value, t.cover, t.depth, phi, model.scale)
        base += model.scale * t.expected_value()
    return ShapMatrix(phi, float(base), model.output_space, model.columns)


def linear_shap(model: LogisticModel, X, background) -> ShapMatrix:
    arr = model._check(X)
    bg = model._check(background)
    if bg.shape[0] == 0:
        raise ValueError("background set is empty")
    mu = bg.mean(axis=0)
    phi = model.coef * (arr - mu)
    return ShapMatrix(phi, float(model.coef @ mu + model.intercept), LOG_ODDS, model.columns)


def sampling_shap(predict: Callable[[np.ndarray], np.ndarray], x: np.ndarray, background,
                  n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                  base_value: float | None = None) -> np.ndarray:
    """Permutation-sampling Shapley estimate for one row.

    Each sample pairs a random feature order with a background row and
    walks from the background row to ``x`` one feature at a time. Antithetic
    (reversed) orders are used in pairs. The residual against
    ``f(x) - base_value`` is spread in proportion to ``|phi|`` so the result is
    exactly additive.
    """
    bg, _, _ = as_matrix(background)
    x = np.asarray(x, dtype=np.float64)
    p = x.size
    if n_samples < p:
        raise ValueError(f"n_samples ({n_samples}) must be at least the number of features ({p})")
    rng = np.random.default_rng(seed)
    half = (n_samples + 1) // 2
    perms = np.array([rng.permutation(p) for _ in range(half)])
    perms = np.concatenate([perms, perms[:, ::-1]])[:n_samples]
    nb = bg.shape[0]
    # sweep the background without replacement before reusing rows
    zi = np.concatenate([rng.permutation(nb) for _ in range(-(-half // nb))])[:half]
    zs = bg[zi]
    zs = np.concatenate([zs, zs])[:n_samples]
    phi = np.zeros(p)
    chunk = max(1, 4096 // (p + 1))
    for s0 in range(0, n_samples, chunk):
        P, Z = perms[s0:s0 + chunk], zs[s0:s0 + chunk]
        m = P.shape[0]
        pos = np.argsort(P, axis=1)  # position of each feature within its order
        steps = np.arange(p + 1)[None, :, None]
        walk = np.where(pos[:, None, :] < steps, x[None, None, :], Z[:, None, :])
        out = predict(walk.reshape(-1, p)).reshape(m, p + 1)
        delta = np.diff(out, axis=1)
        np.add.at(phi, P.ravel(), delta.ravel())
    phi /= n_samples
    fx = float(predict(x[None, :])[0])
    base = float(np.mean(predict(bg))) if base_value is None else base_value
    resid = fx - base - phi.sum()
    w = np.abs(phi)
    phi = phi + resid * (w / w.sum() if w.sum() > 0 else np.full(p, 1.0 / p))
    return phi


def background_sample(X, seed: int = 0, cap: int = BACKGROUND_CAP):
    """Seeded subsample of at most ``cap`` rows."""
    n = len(X)
    if n <= cap:
        return X
    idx = np.sort(np.random.default_rng(seed).choice(n, size=cap, replace=False))
    return X[idx] if isinstance(X, np.ndarray) else X.take(idx)


def explain_model(model: TrainedModel, X, background, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> ShapMatrix:
    """Attributions in the model's native output space."""
    if isinstance(model, _TreeEnsemble):
        return tree_shap(model, X)
    if isinstance(model, LogisticModel):
        return linear_shap(model, X, background)
    arr = model._check(X)
    bg = model._check(background)
    base = float(np.mean(model._decision(bg)))
    n_samples = max(n_samples, arr.shape[1])
    phi = np.array([sampling_shap(model._decision, arr[i], bg, n_samples, seed + i, base) for i in range(arr.shape[0])])
    phi = phi.reshape(arr.shape)
    return ShapMatrix(phi, base, model.output_space, model.columns)


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2:
        return 0.0
    ra, rb = rankdata(a) - (a.size + 1) / 2.0, rankdata(b) - (b.size + 1) / 2.0
    den = np.sqrt((ra @ ra) * (rb @ rb))
    return float(np.clip(ra @ rb / den, -1.0, 1.0)) if den > 0 else 0.0


def rank_impacts(shap: ShapMatrix, X, k: int = 10) -> list[FeatureImpact]:
    """Top-``k`` features by mean |phi| (ties by column index) with Spearman directionality."""
    arr, _, _ = as_matrix(X)
    if arr.shape != shap.phi.shape:
        raise ValueError("feature matrix and attributions differ in shape")
    mean_abs = np.abs(shap.phi).mean(axis=0) if arr.shape[0] else np.zeros(arr.shape[1])
    order = sorted(range(arr.shape[1]), key=lambda j: (-mean_abs[j], j))[:max(0, k)]
    return [FeatureImpact(shap.columns[j], j, r + 1, float(mean_abs[j]), _spearman(arr[:, j], shap.phi[:, j]))
            for r, j in enumerate(order)]


def beeswarm_svg(shap: ShapMatrix, X, path, k: int = 10, title: str = "") -> list[FeatureImpact]:
    """One row per top-k feature; dot x = phi, colour = min-max scaled feature value.
    Dots are stacked vertically within phi bins, so the layout is deterministic."""
    arr, _, _ = as_matrix(X)
    impacts = rank_impacts(shap, arr, k)
    W, row_h, left, right, top = 760, 46, 190, 30, 40
    H = top + row_h * max(1, len(impacts)) + 50
    cv = Canvas(W, H, title)
    cv.rect(0, 0, W, H, fill="white")
    if title:
        cv.text(W / 2, 22, title, text_anchor="middle", font_size=13)
    lim = float(np.max(np.abs(shap.phi))) if shap.phi.size else 1.0
    lim = lim if lim > 0 else 1.0
    sx = lambda v: left + (v + lim) / (2 * lim) * (W - left - right)  # noqa: E731
    y_axis = top + row_h * max(1, len(impacts))
    cv.line(sx(0.0), top - 5, sx(0.0), y_axis, stroke="#999", stroke_width=1)
    cv.line(left, y_axis, W - right, y_axis, stroke="#333", stroke_width=1)
    for v in (-lim, 0.0, lim):
        cv.text(sx(v), y_axis + 16, f"{v:.3g}", text_anchor="middle", font_size=10)
    cv.text((left + W - right) / 2, y_axis + 34, f"SHAP value ({shap.output_space})", text_anchor="middle")
    bins = 80
    for r, imp in enumerate(impacts):
        cy = top + row_h * r + row_h / 2
        cv.text(left - 8, cy + 4, imp.name, text_anchor="end")
        col = shap.phi[:, imp.index]
        vals = arr[:, imp.index]
        span = vals.max() - vals.min() if vals.size else 0.0
        tv = (vals - vals.min()) / span if span > 0 else np.full(vals.size, 0.5)
        b = np.clip(((col + lim) / (2 * lim) * bins).astype(int), 0, bins - 1)
        seen: dict[int, int] = {}
        for i in np.argsort(col, kind="stable"):
            c = seen.get(b[i], 0)
            seen[b[i]] = c + 1
            off = ((c + 1) // 2) * (1 if c % 2 else -1) * 2.2
            if abs(off) > row_h / 2 - 3:
                off = np.sign(off) * (row_h / 2 - 3)
            cv.circle(sx(col[i]), cy + off, 2.0, fill=diverging(tv[i]), fill_opacity=0.8)
    cv.text(W - right, top - 12, "colour: low (blue) to high (red) feature value", text_anchor="end", font_size=9)
    cv.save(path)
    return impacts


__all__ = ["ShapMatrix", "FeatureImpact", "tree_shap", "linear_shap", "sampling_shap", "explain_model",
           "rank_impacts", "beeswarm_svg", "background_sample", "PROBABILITY", "LOG_ODDS"]
