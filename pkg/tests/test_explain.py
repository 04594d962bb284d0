import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import binary_task
from oracles import linear_shapley, tree_base, tree_shapley
from periopml.explain import (
    ShapMatrix,
    background_sample,
    beeswarm_svg,
    explain_model,
    linear_shap,
    rank_impacts,
    sampling_shap,
    tree_shap,
)
from periopml.models import FAMILIES, LOG_ODDS, PROBABILITY, fit, make_params
from periopml.models.trees import Tree, TreeModel, _TreeEnsemble
from test_models import QUICK, quick


def random_tree_model(seed, p=None):
    r = np.random.default_rng(seed)
    p = p or int(r.integers(2, 9))
    n = int(r.integers(30, 80))
    X = r.integers(0, 4, (n, p)).astype(float)
    y = (r.random(n) < 0.3 + 0.4 * (X[:, 0] > 1)).astype(int)
    y[:2] = [0, 1]
    m = fit("tree", X, y, make_params("tree", max_depth=int(r.integers(1, 4))))
    return m, X


def test_tree_shap_matches_subset_oracle():
    checked = 0
    for seed in range(50):
        m, X = random_tree_model(seed)
        t = m.trees[0]
        assert t.depth <= 3 and X.shape[1] <= 8
        sm = tree_shap(m, X[:4])
        assert sm.base_value == pytest.approx(tree_base(t), abs=1e-12)
        for i in range(4):
            assert np.max(np.abs(sm.phi[i] - tree_shapley(t, X[i]))) < 1e-8
            checked += 1
    assert checked == 200


def test_stump_attributes_only_split_feature():
    X, y = binary_task(100, p=4)
    m = fit("tree", X, y, make_params("tree", max_depth=1))
    j = m.trees[0].feature[0]
    sm = tree_shap(m, X)
    others = [k for k in range(4) if k != j]
    assert np.all(sm.phi[:, others] == 0.0)
    assert np.allclose(sm.phi[:, j], m.predict_proba(X) - sm.base_value, atol=1e-12)


def test_null_player_exact_zero():
    X, y = binary_task(200, p=5)
    m = quick("grad_boost", X, y)
    used = {int(f) for t in m.trees for f in t.feature[t.left >= 0]}
    X2 = np.c_[X, np.random.default_rng(0).random(200)]
    m2 = quick("grad_boost", X2[:, :5], y)
    sm = tree_shap(m2, X2[:, :5])
    unused = [j for j in range(5) if j not in used]
    for j in unused:
        assert np.all(sm.phi[:, j] == 0.0)


def test_ensemble_linearity():
    X, y = binary_task(120, p=4)
    t = quick("tree", X, y).trees[0]
    single = TreeModel(make_params("tree"), tuple(f"x{j}" for j in range(4)), ("scaled-numeric",) * 4, [t])
    double = TreeModel(make_params("tree"), single.columns, single.roles, [t, t], 0.0, 0.5)
    a, b = tree_shap(single, X), tree_shap(double, X)
    assert np.allclose(a.phi, b.phi, atol=1e-15) and a.base_value == pytest.approx(b.base_value)


def test_duplicate_feature_symmetry():
    # a stump may split on either copy; the oracle's mass on the pair equals the one-copy attribution
    r = np.random.default_rng(2)
    x = r.integers(0, 2, 40).astype(float)
    X = np.c_[x, x, r.random(40)]
    y = x.astype(int)
    m = fit("tree", X, y, make_params("tree", max_depth=1))
    ref = fit("tree", X[:, [0, 2]], y, make_params("tree", max_depth=1))
    for i in range(5):
        pair = tree_shapley(m.trees[0], X[i])
        one = tree_shapley(ref.trees[0], X[i, [0, 2]])
        assert pair[0] + pair[1] == pytest.approx(one[0], abs=1e-12)


def test_linear_shap_definitions():
    X, y = binary_task(100, p=3)
    m = fit("logistic", X, y)
    mu = X.mean(axis=0)
    sm = linear_shap(m, mu[None, :], X)
    assert np.allclose(sm.phi, 0.0, atol=1e-15)
    m.coef = np.array([2.0, 0.0, 0.0])
    sm = linear_shap(m, (mu + [0.5, 0, 0])[None, :], X)
    assert sm.phi[0, 0] == pytest.approx(1.0)
    assert sm.output_space == LOG_ODDS


def test_linear_shap_matches_exhaustive_oracle():
    X, y = binary_task(150, p=10, seed=1)
    m = fit("logistic", X, y)
    sm = linear_shap(m, X[:5], X)
    for i in range(5):
        assert np.allclose(sm.phi[i], linear_shapley(m.coef, m.intercept, X[i], X.mean(axis=0)), atol=1e-12)


def test_sampling_shap_examples():
    r = np.random.default_rng(0)
    bg = r.random((40, 4))
    x = r.random(4)
    assert np.all(sampling_shap(lambda Z: np.full(len(Z), 3.0), x, bg, 64) == 0.0)
    w = np.array([1.0, -2.0, 0.5, 0.0])
    f = lambda Z: Z @ w + 0.3  # noqa: E731
    phi = sampling_shap(f, x, bg, 400, seed=1)
    assert np.max(np.abs(phi - w * (x - bg.mean(axis=0)))) < 0.02
    assert np.array_equal(phi, sampling_shap(f, x, bg, 400, seed=1))
    with pytest.raises(ValueError):
        sampling_shap(f, x, bg, 3)


@pytest.mark.parametrize("family", FAMILIES)
def test_local_accuracy_every_family(family):
    X, y = binary_task(300, p=5, seed=7)
    m = quick(family, X, y)
    rows = X[np.random.default_rng(1).choice(300, 200, replace=False)]
    sm = explain_model(m, rows, background_sample(X, 0, 100), n_samples=16)
    assert sm.output_space == m.output_space
    assert np.max(np.abs(sm.reconstruct() - m.decision(rows))) < 1e-6


def test_output_space_tags():
    X, y = binary_task(100)
    assert tree_shap(quick("random_forest", X, y), X).output_space == PROBABILITY
    assert tree_shap(quick("grad_boost", X, y), X).output_space == LOG_ODDS
    with pytest.raises(ValueError):
        tree_shap(quick("logistic", X, y), X)


def test_missing_covers_rejected():
    X, y = binary_task(100)
    m = quick("tree", X, y)
    t = m.trees[0]
    t.cover = t.cover.copy()
    t.cover[0] += 1
    with pytest.raises(ValueError, match="cover"):
        tree_shap(m, X)


def test_rank_impacts_contract():
    X, y = binary_task(300, p=6, seed=8)
    X[:, 5] = 0.25  # never used
    m = quick("grad_boost", X, y)
    sm = tree_shap(m, X)
    full = rank_impacts(sm, X, k=6)
    assert sorted(i.index for i in full) == list(range(6))
    assert [i.rank for i in full] == list(range(1, 7))
    assert full[-1].index == 5 and full[-1].mean_abs == 0.0
    assert len(rank_impacts(sm, X, k=99)) == 6
    top = rank_impacts(sm, X, k=2)
    assert {i.index for i in top} == {0, 1}
    d = {i.index: i.directionality for i in full}
    assert d[0] > 0.5 and d[1] < -0.5
    assert all(-1 <= i.directionality <= 1 for i in full)


def test_rank_ties_by_index():
    sm = ShapMatrix(np.array([[1.0, -1.0, 0.0], [1.0, -1.0, 0.0]]), 0.0, PROBABILITY, ("a", "b", "c"))
    assert [i.name for i in rank_impacts(sm, np.zeros((2, 3)))] == ["a", "b", "c"]


def test_beeswarm_svg_deterministic(tmp_path):
    X, y = binary_task(80, p=4)
    sm = tree_shap(quick("tree", X, y), X)
    beeswarm_svg(sm, X, tmp_path / "a.svg", 3, "t")
    beeswarm_svg(sm, X, tmp_path / "b.svg", 3, "t")
    a = (tmp_path / "a.svg").read_text()
    assert a == (tmp_path / "b.svg").read_text()
    assert a.startswith("<svg") or a.startswith("<?xml")
    sm.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "base_value,x0,x1,x2,x3"


@given(st.integers(0, 10_000))
def test_tree_local_accuracy_property(seed):
    m, X = random_tree_model(seed)
    sm = tree_shap(m, X)
    assert np.max(np.abs(sm.reconstruct() - m.decision(X))) < 1e-9
