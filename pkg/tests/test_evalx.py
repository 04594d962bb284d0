import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import binary_task
from oracles import pairwise_auroc
from periopml.evalx import (
    Candidate,
    METRICS,
    auroc,
    bootstrap_ci,
    compute_metrics,
    grid_search,
    select_best,
    stratified_kfold,
    train_test_split,
)
from periopml.models import make_params


def test_split_exact_stratification():
    y = np.array([1] * 40 + [0] * 60)
    tr, te = train_test_split(y, 0.2, seed=3)
    assert len(te) == 20 and y[te].sum() == 8
    assert np.array_equal(np.sort(np.r_[tr, te]), np.arange(100))
    again = train_test_split(y, 0.2, seed=3)
    assert np.array_equal(te, again[1])
    with pytest.raises(ValueError):
        train_test_split(np.array([1, 0, 0, 0, 0]), 0.2)
    with pytest.raises(ValueError):
        train_test_split(y, 1.0)


@given(st.integers(4, 300), st.floats(0.05, 0.95), st.integers(0, 10**6), st.floats(0.1, 0.5))
def test_split_positive_rate_bound(n, frac_pos, seed, test_frac):
    n1 = min(max(int(n * frac_pos), 2), n - 2)
    y = np.r_[np.ones(n1, int), np.zeros(n - n1, int)]
    tr, te = train_test_split(y, test_frac, seed)
    assert abs(y[te].mean() - y.mean()) <= 1.0 / len(te) + 1e-12
    assert len(np.intersect1d(tr, te)) == 0 and len(tr) + len(te) == n


def test_kfold_examples():
    y = np.array([1] * 4 + [0] * 6)
    plan = stratified_kfold(y, 5, seed=0)
    pos = [int(y[f].sum()) for f in plan.folds]
    assert set(pos) <= {0, 1} and sum(pos) == 4
    assert sorted(np.concatenate(plan.folds).tolist()) == list(range(10))
    with pytest.raises(ValueError):
        stratified_kfold(y, 1)
    with pytest.raises(ValueError):
        stratified_kfold(np.array([0, 0, 0, 0, 0, 0]), 3)
    with pytest.raises(ValueError):
        stratified_kfold(np.array([1, 0]), 3)


def test_kfold_permutation_equivariance():
    r = np.random.default_rng(0)
    y = r.integers(0, 2, 20)
    y[:6] = [0, 0, 0, 1, 1, 1]
    ids = np.arange(100, 120)
    a = stratified_kfold(y, 3, seed=5, ids=ids)
    perm = r.permutation(20)
    b = stratified_kfold(y[perm], 3, seed=5, ids=ids[perm])
    fold_a = {int(ids[i]): k for k, f in enumerate(a.folds) for i in f}
    fold_b = {int(ids[perm][i]): k for k, f in enumerate(b.folds) for i in f}
    assert fold_a == fold_b


def test_auroc_examples():
    assert auroc([0.9, 0.8, 0.7, 0.2], [1, 0, 1, 0]) == 0.75
    m = compute_metrics([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert m.auroc == 1.0 and m.average_precision == 1.0
    assert math.isnan(auroc([0.1, 0.2], [1, 1]))


@given(st.integers(0, 10**6))
def test_auroc_equals_pairwise_counting(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 201))
    y = r.integers(0, 2, n)
    y[0], y[-1] = 0, 1
    s = r.integers(0, 8, n) / 8.0  # heavy ties
    assert auroc(s, y) == pairwise_auroc(s, y)


@given(st.integers(0, 10**6))
def test_auroc_monotone_invariance(seed):
    r = np.random.default_rng(seed)
    y = r.integers(0, 2, 50)
    y[:2] = [0, 1]
    s = r.random(50)
    assert auroc(s, y) == auroc(np.exp(3 * s) - 7, y)


def test_confusion_example():
    y = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
    s = np.array([0.9, 0.8, 0.1, 0.7, 0, 0, 0, 0, 0, 0])
    m = compute_metrics(s, y)
    assert m.precision == pytest.approx(2 / 3)
    assert m.sensitivity == pytest.approx(2 / 3)
    assert m.specificity == pytest.approx(6 / 7)
    assert m.accuracy == pytest.approx(0.8)
    assert m.f1 == pytest.approx(2 / 3)


@given(st.integers(0, 10**6))
def test_complement_swaps_sensitivity_specificity(seed):
    r = np.random.default_rng(seed)
    y = r.integers(0, 2, 40)
    y[:2] = [0, 1]
    s = r.random(40)
    s[s == 0.5] = 0.25  # the threshold point itself is not symmetric
    a, b = compute_metrics(s, y), compute_metrics(1 - s, 1 - y)
    assert a.sensitivity == pytest.approx(b.specificity)
    assert a.specificity == pytest.approx(b.sensitivity)


def test_bootstrap_degenerate_and_deterministic():
    s = np.full(30, 0.7)
    y = np.ones(30, int)
    ci = bootstrap_ci(s, y, B=100, seed=1)
    for m in METRICS:
        pt, lo, hi = ci.row(m)
        if not math.isnan(pt):
            assert lo == pt == hi
    r = np.random.default_rng(0)
    s, y = r.random(200), r.integers(0, 2, 200)
    a = bootstrap_ci(s, y, seed=4)
    assert a.to_dict() == bootstrap_ci(s, y, seed=4).to_dict() == bootstrap_ci(s, y, seed=4, jobs=3).to_dict()
    assert a.B == 100
    for m in METRICS:
        pt, lo, hi = a.row(m)
        assert lo <= hi


def test_bootstrap_single_class_resamples_skipped():
    ci = bootstrap_ci([0.2, 0.9], [0, 1], B=50, seed=0)
    assert ci.skipped_rank > 0
    assert not math.isnan(ci.lo95.auroc)
    with pytest.raises(ValueError):
        bootstrap_ci([0.5], [1])


def test_grid_search_contract():
    X, y = binary_task(200, p=4)
    plan = stratified_kfold(y, 3, seed=0)
    hp = make_params("tree", max_depth=2)
    res = grid_search("tree", [hp], X, y, plan)
    assert res.best == hp and res.best_index == 0
    with pytest.raises(ValueError):
        grid_search("tree", [], X, y, plan)
    # crippled booster vs. one with real capacity
    weak = make_params("grad_boost", n_rounds=1, max_depth=1, learning_rate=0.01)
    strong = make_params("grad_boost", n_rounds=30, max_depth=2)
    assert grid_search("grad_boost", [weak, strong], X, y, plan).best_index == 1
    Xn = X.copy()
    Xn[:, 0] = np.nan
    with pytest.raises(RuntimeError, match="every grid point failed"):
        grid_search("logistic", [make_params("logistic")], Xn, y, plan)


def test_grid_search_never_reads_test_rows():
    X, y = binary_task(300, p=4, seed=2)
    tr, te = train_test_split(y, 0.2, seed=0)
    Xp = X.copy()
    Xp[te] = np.nan
    plan = stratified_kfold(y[tr], 5, seed=0).on_rows(tr)
    res = grid_search("logistic", [make_params("logistic")], Xp, y, plan)
    assert not res.failures and np.isfinite(res.scores[0])


def _cand(family, auc, cost):
    from periopml.evalx import MetricCI, MetricSet
    ms = MetricSet(auc, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5)
    return Candidate(family, "PeriOp", MetricCI(ms, ms, ms, 100), cost)


def test_select_best_examples():
    one = _cand("mlp", 0.7, 1.0)
    assert select_best([one]) is one
    lr, gb = _cand("logistic", 0.800, 5.0), _cand("grad_boost", 0.803, 5.0)
    assert select_best([gb, lr]) is lr
    mlp, lr2 = _cand("mlp", 0.90, 9.0), _cand("logistic", 0.80, 1.0)
    assert select_best([lr2, mlp]) is mlp
    cheap = _cand("grad_boost", 0.801, 0.5)
    assert select_best([lr, cheap]) is cheap
    with pytest.raises(ValueError):
        select_best([])
