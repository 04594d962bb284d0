"""Splits, metrics, bootstrap intervals, grid search and model selection."""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import rankdata

from .models import INTERPRETABILITY_RANK, Hyperparams, fit

METRICS = ("auroc", "accuracy", "f1", "precision", "sensitivity", "specificity", "average_precision")
RANK_METRICS = ("auroc", "average_precision")
AUROC_TIE_TOL = 0.005
DEFAULT_TEST_FRAC = 0.2
DEFAULT_B = 100

_MASK64 = (1 << 64) - 1


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def row_keys(ids: np.ndarray, seed: int) -> np.ndarray:
    """Pseudo-random sort key per row id; depends only on (seed, id)."""
    s = _splitmix64(np.array([seed & _MASK64], dtype=np.uint64))[0]
    with np.errstate(over="ignore"):
        return _splitmix64(np.asarray(ids, dtype=np.uint64) ^ s)


def _labels(y) -> np.ndarray:
    return np.asarray(getattr(y, "y", y)).astype(np.int64)


def _ids(n: int, ids) -> np.ndarray:
    ids = np.arange(n) if ids is None else np.asarray(ids)
    if ids.shape != (n,) or len(np.unique(ids)) != n:
        raise ValueError("row ids must be unique, one per label")
    return ids


def _class_order(y: np.ndarray, c: int, keys: np.ndarray, ids: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(y == c)
    return idx[np.lexsort((ids[idx], keys[idx]))]


# --- splits -----------------------------------------------------------------------

def train_test_split(y, test_frac: float = DEFAULT_TEST_FRAC, seed: int = 0, ids=None) -> tuple[np.ndarray, np.ndarray]:
    """Exactly stratified hold-out split. Membership depends on row ids, not positions."""
    if not 0.0 < test_frac < 1.0:
        raise ValueError("test_frac must lie strictly between 0 and 1")
    y = _labels(y)
    ids = _ids(len(y), ids)
    keys = row_keys(ids, seed)
    test = []
    for c in (0, 1):
        order = _class_order(y, c, keys, ids)
        if order.size < 2:
            raise ValueError(f"class {c} has {order.size} member(s); cannot stratify")
        k = min(max(int(math.floor(order.size * test_frac + 0.5)), 1), order.size - 1)
        test.append(order[:k])
    test_idx = np.sort(np.concatenate(test))
    mask = np.zeros(len(y), bool)
    mask[test_idx] = True
    return np.flatnonzero(~mask), test_idx


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[np.ndarray, ...]
    seed: int

    def splits(self):
        for i in range(self.k):
            train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
            yield train, self.folds[i]

    def on_rows(self, rows: np.ndarray) -> "FoldPlan":
        """Re-express fold indices as positions in a larger matrix."""
        rows = np.asarray(rows)
        return FoldPlan(self.k, tuple(rows[f] for f in self.folds), self.seed)


def stratified_kfold(y, k: int = 5, seed: int = 0, ids=None) -> FoldPlan:
    """Round-robin each class over the folds by seeded row key.

    A class with fewer than ``k`` members is spread one per fold; only an empty
    class or fewer than ``k`` rows overall is an error.
    """
    if k < 2:
        raise ValueError("k must be >= 2 for cross-validation")
    y = _labels(y)
    ids = _ids(len(y), ids)
    keys = row_keys(ids, seed)
    if len(y) < k:
        raise ValueError(f"{len(y)} rows cannot fill k={k} folds")
    fold_of = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in (1, 0):
        order = _class_order(y, c, keys, ids)
        if order.size == 0:
            raise ValueError(f"class {c} is empty; cannot stratify")
        fold_of[order] = (np.arange(order.size) + offset) % k
        offset = (offset + order.size) % k
    return FoldPlan(k, tuple(np.flatnonzero(fold_of == i) for i in range(k)), seed)


# --- metrics ----------------------------------------------------------------------

@dataclass(frozen=True)
class MetricSet:
    auroc: float
    accuracy: float
    f1: float
    precision: float
    sensitivity: float
    specificity: float
    average_precision: float

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


def auroc(scores, y) -> float:
    """P(score+ > score-) + P(tie)/2 via midranks; NaN for a single class."""
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(y)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        return float("nan")
    r = rankdata(s, method="average")
    u = float(r[y == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


def average_precision(scores, y) -> float:
    """Sum over distinct thresholds of (recall step) x precision."""
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(y)
    n1 = int(y.sum())
    if n1 == 0 or n1 == len(y):
        return float("nan")
    order = np.argsort(-s, kind="stable")
    s, yy = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(yy)[last]
    pp = last + 1
    recall = tp / n1
    precision = tp / pp
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else float("nan")


def compute_metrics(scores, y, threshold: float = 0.5) -> MetricSet:
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(y)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pred = s >= threshold
    tp = float(np.sum(pred & (y == 1)))
    fp = float(np.sum(pred & (y == 0)))
    fn = float(np.sum(~pred & (y == 1)))
    tn = float(np.sum(~pred & (y == 0)))
    prec = _ratio(tp, tp + fp)
    sens = _ratio(tp, tp + fn)
    f1 = 2 * prec * sens / (prec + sens) if (prec + sens) > 0 else (0.0 if tp + fp + fn > 0 else float("nan"))
    return MetricSet(
        auroc=auroc(s, y),
        accuracy=_ratio(tp + tn, len(y)),
        f1=f1,
        precision=prec,
        sensitivity=sens,
        specificity=_ratio(tn, tn + fp),
        average_precision=average_precision(s, y),
    )


@dataclass(frozen=True)
class MetricCI:
    point: MetricSet
    lo95: MetricSet
    hi95: MetricSet
    B: int
    skipped_rank: int = 0

    def row(self, metric: str) -> tuple[float, float, float]:
        return getattr(self.point, metric), getattr(self.lo95, metric), getattr(self.hi95, metric)

    def to_dict(self) -> dict[str, Any]:
        return {"B": self.B, "skipped_rank_resamples": self.skipped_rank,
                **{m: dict(zip(("point", "lo95", "hi95"), self.row(m))) for m in METRICS}}


def bootstrap_ci(scores, y, B: int = DEFAULT_B, seed: int = 0, threshold: float = 0.5, jobs: int = 1) -> MetricCI:
    """Percentile intervals from ``B`` paired resamples of the evaluation rows.

    All resample indices are drawn up front, so results do not depend on ``jobs``.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(y)
    n = len(y)
    if n < 2:
        raise ValueError("bootstrap needs at least two rows")
    idx = np.random.default_rng(seed).integers(0, n, size=(B, n))

    def one(b):
        return compute_metrics(s[idx[b]], y[idx[b]], threshold)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            reps = list(pool.map(one, range(B)))
    else:
        reps = [one(b) for b in range(B)]
    vals = np.array([[getattr(r, m) for m in METRICS] for r in reps], dtype=np.float64)
    skipped = int(sum(np.isnan(r.auroc) for r in reps))
    lo, hi = [], []
    with np.errstate(all="ignore"):
        for j in range(len(METRICS)):
            col = vals[:, j]
            if np.all(np.isnan(col)):
                lo.append(float("nan"))
                hi.append(float("nan"))
            else:
                lo.append(float(np.nanpercentile(col, 2.5)))
                hi.append(float(np.nanpercentile(col, 97.5)))
    return MetricCI(compute_metrics(s, y, threshold), MetricSet(*lo), MetricSet(*hi), B, skipped)


# --- grid search and selection ----------------------------------------------------

@dataclass
class GridResult:
    best: Hyperparams
    best_index: int
    scores: list[float]
    failures: dict[int, str] = field(default_factory=dict)


def _take(X, rows):
    return X[rows] if isinstance(X, np.ndarray) else X.take(rows)


def grid_search(family: str, grid: Sequence[Hyperparams], X, y, plan: FoldPlan, seed: int = 0) -> GridResult:
    """Mean held-out-fold AUROC per grid point; first maximum wins."""
    if not grid:
        raise ValueError("grid is empty")
    y = _labels(y)
    scores: list[float] = []
    failures: dict[int, str] = {}
    for gi, hp in enumerate(grid):
        fold_auc = []
        try:
            for fi, (tr, va) in enumerate(plan.splits()):
                m = fit(family, _take(X, tr), y[tr], hp, seed=seed + fi)
                fold_auc.append(auroc(m.predict_proba(_take(X, va)), y[va]))
        except Exception as exc:  # one bad grid point must not sink the search
            failures[gi] = f"{type(exc).__name__}: {exc}"
            scores.append(float("nan"))
            continue
        if np.all(np.isnan(fold_auc)):
            failures[gi] = "validation AUROC undefined on every fold"
            scores.append(float("nan"))
        else:
            scores.append(float(np.nanmean(fold_auc)))
    ok = [i for i in range(len(grid)) if i not in failures]
    if not ok:
        detail = "; ".join(f"[{i}] {grid[i].label()}: {msg}" for i, msg in failures.items())
        raise RuntimeError(f"every grid point failed for {family}: {detail}")
    best = max(ok, key=lambda i: (scores[i], -i))
    return GridResult(grid[best], best, scores, failures)


@dataclass
class Candidate:
    family: str
    variant: str
    ci: MetricCI
    fit_cost: float
    hp: Hyperparams | None = None
    payload: Any = None

    @property
    def auroc(self) -> float:
        a = self.ci.point.auroc
        return -math.inf if math.isnan(a) else a


def select_best(candidates: Sequence[Candidate], tol: float = AUROC_TIE_TOL) -> Candidate:
    """Highest test AUROC; candidates within ``tol`` of it are tied and resolved
    by lower fit cost, then by interpretability rank, then by input order."""
    if not candidates:
        raise ValueError("no candidates to select from")
    top = max(c.auroc for c in candidates)
    tied = [(i, c) for i, c in enumerate(candidates) if c.auroc >= top - tol]
    i, best = min(tied, key=lambda ic: (ic[1].fit_cost, INTERPRETABILITY_RANK.get(ic[1].family, 99), ic[0]))
    return best
