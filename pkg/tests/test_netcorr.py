import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import two_pass_pearson
from periopml.data_model import INTRAOP_NUMERICS
from periopml.explain import FeatureImpact
from periopml.netcorr import (
    CorrMatrix,
    build_network,
    categorize,
    disruption_report,
    heatmap_svg,
    network_svg,
    pearson_matrix,
)


@pytest.mark.parametrize("r,strength,sign", [
    (0.6, "high", 1), (-0.35, "moderate", -1), (0.05, "negligible", 1),
    (0.5, "moderate", 1), (0.5000001, "high", 1), (0.3, "low", 1), (0.3000001, "moderate", 1),
    (0.1, "low", 1), (0.0999, "negligible", 1), (-0.5, "moderate", -1), (-1.0, "high", -1),
])
def test_cohen_bands(r, strength, sign):
    b = categorize(r)
    assert (b.strength, b.sign) == (strength, sign)


@given(st.floats(-1, 1))
def test_categorize_odd(r):
    a, b = categorize(r), categorize(-r)
    assert a.strength == b.strength and a.sign == -b.sign


def test_categorize_range():
    with pytest.raises(ValueError):
        categorize(1.01)


def test_pearson_examples():
    x = np.array([1.0, 2, 3, 4])
    m = pearson_matrix({"x": x, "a": 2 * x + 1, "b": -x, "c": np.array([2.0, 1, 4, 3])}, ["x", "a", "b", "c"])
    assert m["x", "a"] == pytest.approx(1.0, abs=1e-15)
    assert m["x", "b"] == pytest.approx(-1.0, abs=1e-15)
    assert m["x", "c"] == pytest.approx(0.6, abs=1e-15)
    assert m["x", "c"] == pytest.approx(two_pass_pearson(x, [2, 1, 4, 3]), abs=1e-15)


def test_pearson_errors_and_missing():
    with pytest.raises(ValueError, match="'k'"):
        pearson_matrix({"k": np.ones(5), "x": np.arange(5.0)}, ["k", "x"])
    x = np.array([1.0, 2, np.nan, 4, 5])
    y = np.array([1.0, 3, 2, 5, np.nan])
    m = pearson_matrix({"x": x, "y": y}, ["x", "y"])
    assert m.n[0, 1] == 3
    assert m["x", "y"] == pytest.approx(two_pass_pearson([1, 2, 4], [1, 3, 5]))
    with pytest.raises(ValueError, match="fewer than 3"):
        pearson_matrix({"x": x[:3], "y": y[:3]}, ["x", "y"])


@given(st.integers(0, 10**6), st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariance(seed, a, b):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=50), r.normal(size=50)
    m1 = pearson_matrix({"x": x, "y": y}, ["x", "y"])
    m2 = pearson_matrix({"x": a * x + b, "y": y}, ["x", "y"])
    assert abs(m1["x", "y"] - m2["x", "y"]) < 1e-12


def test_network_examples():
    v = ("a", "b", "c")
    assert build_network(CorrMatrix(v, np.eye(3), np.ones((3, 3), int))).edges == ()
    r = np.eye(3)
    r[0, 2] = r[2, 0] = 0.2
    net = build_network(CorrMatrix(v, r, np.ones((3, 3), int)))
    assert len(net.edges) == 1
    e = net.edges[0]
    assert (e.a, e.b, e.band.strength, e.sign, e.style) == ("a", "c", "low", 1, "solid")


def test_network_on_synthetic_cohort(small_cohort):
    net = build_network(pearson_matrix(small_cohort))
    for other in ("avg_nibp", "sd_nibp"):
        e = net.edge("phenylephrine_mcg", other)
        assert e is not None and e.style == "solid"


@given(st.permutations(list(INTRAOP_NUMERICS)))
def test_network_permutation_equivariant(small_cohort, order):
    a = build_network(pearson_matrix(small_cohort))
    b = build_network(pearson_matrix(small_cohort, order))
    ea = {e.key(): (e.band, round(e.r, 12)) for e in a.edges}
    eb = {e.key(): (e.band, round(e.r, 12)) for e in b.edges}
    assert ea == eb


def _imp(name, d):
    return FeatureImpact(name, 0, 1, 1.0, d)


def _net(r):
    m = np.array([[1.0, r], [r, 1.0]])
    return build_network(CorrMatrix(("avg_nibp", "sd_nibp"), m, np.ones((2, 2), int)))


def test_disruption_rule():
    pos = _net(0.55)
    assert disruption_report(pos, [_imp("avg_nibp", -0.6), _imp("sd_nibp", 0.7)]).flagged("sd_nibp", "avg_nibp")
    assert not disruption_report(pos, [_imp("avg_nibp", 0.6), _imp("sd_nibp", 0.7)]).pairs
    assert not disruption_report(pos, [_imp("avg_nibp", -0.05), _imp("sd_nibp", 0.7)]).pairs
    neg = _net(-0.4)
    assert disruption_report(neg, [_imp("avg_nibp", 0.6), _imp("sd_nibp", 0.7)]).pairs
    absent = _net(0.01)
    assert not disruption_report(absent, [_imp("avg_nibp", -0.6), _imp("sd_nibp", 0.7)]).pairs


def test_svgs_written(tmp_path, small_cohort):
    m = pearson_matrix(small_cohort)
    heatmap_svg(m, tmp_path / "h.svg", "t")
    network_svg(build_network(m), tmp_path / "n.svg", "t")
    for f in ("h.svg", "n.svg"):
        assert "<svg" in (tmp_path / f).read_text()
