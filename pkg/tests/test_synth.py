import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import two_pass_pearson
from periopml.data_model import (
    ALL_SURGERIES,
    COMORBIDITIES,
    INTRAOP_NUMERICS,
    SURGERY_TYPES,
    DatasetVariant,
    FeatureSet,
    Outcome,
)
from periopml.ingest import binarize_outcome, encode
from periopml.models import fit, make_params
from periopml.synth import (
    BLOCK_SIZE,
    GenProfile,
    Mechanism,
    bayes_optimal_auc,
    default_corr,
    default_profile,
    implied_prevalence,
    repair_psd,
    sample_cohort,
)

IX = {n: i for i, n in enumerate(INTRAOP_NUMERICS)}


def test_all_surgeries_age_marginal():
    prof = default_profile(ALL_SURGERIES)
    assert (prof.numeric["age"].mean, prof.numeric["age"].sd) == (73.3, 6.0)


def test_los_prevalence_target():
    prof = default_profile(ALL_SURGERIES)
    target = 1908 / (3053 + 1908)
    assert abs(target - 0.385) < 1e-3
    assert implied_prevalence(prof, Outcome.LOS) == pytest.approx(target, abs=1e-6)


def test_gynecology_is_all_female():
    prof = default_profile("Gynecology")
    assert prof.categorical["sex"]["Female"] == 1.0
    c = sample_cohort(prof.with_(n=200))
    assert set(c.features["sex"]) == {"Female"}


def test_unknown_surgery_rejected():
    with pytest.raises(ValueError):
        default_profile("Dermatology")


@pytest.mark.parametrize("surgery", (ALL_SURGERIES,) + SURGERY_TYPES)
def test_profile_invariants(surgery):
    prof = default_profile(surgery)
    C = prof.corr_targets
    assert np.allclose(C, C.T) and np.allclose(np.diag(C), 1.0)
    assert np.linalg.eigvalsh(C).min() >= 0
    assert C[IX["phenylephrine_mcg"], IX["avg_nibp"]] == 0.6
    assert C[IX["phenylephrine_mcg"], IX["sd_nibp"]] == 0.6
    for out in prof.mechanisms:
        assert 0.0 < implied_prevalence(prof, out, n_mc=20_000) < 1.0


def test_profile_json_round_trip():
    prof = default_profile("Urology", n=123, seed=9)
    again = GenProfile.from_json(prof.to_json())
    assert again.to_dict() == prof.to_dict()
    assert sample_cohort(again).equals(sample_cohort(prof))


def test_sampling_is_deterministic():
    prof = default_profile(ALL_SURGERIES, n=500, seed=3)
    assert sample_cohort(prof).equals(sample_cohort(prof))
    assert not sample_cohort(prof).equals(sample_cohort(prof.with_(seed=4)))


def test_blocks_are_independent_substreams():
    prof = default_profile("Neurosurgery", seed=5)
    big = sample_cohort(prof.with_(n=BLOCK_SIZE + 300))
    head = sample_cohort(prof.with_(n=BLOCK_SIZE))
    assert big.take(np.arange(BLOCK_SIZE)).equals(head)


def test_mean_age_at_ten_thousand():
    c = sample_cohort(default_profile(ALL_SURGERIES, n=10_000, seed=1))
    assert abs(c.features["age"].mean() - 73.3) <= 0.2


def test_marginal_calibration():
    n = 20_000
    prof = default_profile(ALL_SURGERIES, n=n, seed=2)
    c = sample_cohort(prof)
    for name, m in prof.numeric.items():
        x = c.features[name]
        assert abs(x.mean() - m.mean) <= 4 * m.sd / np.sqrt(n), name
    for name in COMORBIDITIES:
        p = prof.binary[name]
        assert abs(c.features[name].mean() - p) <= 4 * np.sqrt(p * (1 - p) / n), name


def test_latent_correlation_with_two_pass_oracle():
    prof = default_profile(ALL_SURGERIES, n=100_000, seed=4)
    _, Z = sample_cohort(prof, return_latent=True)
    a, b = IX["phenylephrine_mcg"], IX["sd_nibp"]
    r = two_pass_pearson(Z[:, a].tolist(), Z[:, b].tolist())
    assert abs(r - 0.6) <= 0.02


def test_repair_psd_idempotent_on_psd():
    C = default_corr(ALL_SURGERIES)
    assert np.linalg.eigvalsh(C).min() > 0
    assert np.max(np.abs(repair_psd(C) - C)) <= 1e-12


def test_repair_psd_fixes_indefinite():
    C = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    assert np.linalg.eigvalsh(C).min() < 0
    R = repair_psd(C)
    assert np.linalg.eigvalsh(R).min() >= 0
    assert np.allclose(np.diag(R), 1.0)
    with pytest.raises(ValueError):
        repair_psd(np.array([[1.0, 0.2], [0.3, 1.0]]))


def test_bayes_auc_zero_mechanism():
    prof = default_profile(ALL_SURGERIES)
    flat = prof.with_(mechanisms={Outcome.LOS: Mechanism({}, 0.0)})
    assert abs(bayes_optimal_auc(flat, Outcome.LOS, n_mc=40_000) - 0.5) < 0.01


def test_bayes_auc_stable_and_rank_invariant():
    prof = default_profile(ALL_SURGERIES)
    a = bayes_optimal_auc(prof, Outcome.LOS, n_mc=100_000, seed=1)
    b = bayes_optimal_auc(prof, Outcome.LOS, n_mc=100_000, seed=2)
    assert abs(a - b) < 0.01
    assert bayes_optimal_auc(prof, "LOS", n_mc=100_000, seed=1, transform=lambda s: np.exp(s) * 3 + 1) == a
    assert 0.88 < a < 0.92


def test_planted_signs_recovered():
    prof = default_profile(ALL_SURGERIES, n=100_000, seed=6)
    c = sample_cohort(prof)
    lv = binarize_outcome(c, Outcome.LOS)
    X, _ = encode(c, c, DatasetVariant(FeatureSet.PERI_OP_COGNITIVE))
    m = fit("logistic", X.X, lv.y, make_params("logistic", l2_lambda=1e-6))
    mech = prof.mechanisms[Outcome.LOS]
    planted = dict(mech.coef)
    planted[mech.disruption.rise] = planted.get(mech.disruption.rise, 0) + mech.disruption.beta
    planted[mech.disruption.fall] = planted.get(mech.disruption.fall, 0) - mech.disruption.beta
    checked = 0
    for name, beta in planted.items():
        if abs(beta) >= 0.5:
            assert np.sign(m.coef[X.names.index(name)]) == np.sign(beta), name
            checked += 1
    assert checked >= 5


@given(st.integers(0, 2**31 - 1), st.integers(1, 50))
def test_sample_size_and_pain_range(seed, n):
    c = sample_cohort(default_profile("Orthopedics", n=n, seed=seed))
    assert c.n == n
    pain = c.outcomes["avg_pain"]
    assert np.all((pain >= 0) & (pain <= 10))
