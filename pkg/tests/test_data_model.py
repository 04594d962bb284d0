import numpy as np
import pytest

from periopml.data_model import (
    ALL_SURGERIES,
    BINARY,
    CATEGORICAL,
    CLOCK_LATENT,
    CLOCK_LATENT_NAMES,
    COMORBIDITIES,
    DEMOGRAPHIC,
    INTRAOP_NUMERICS,
    INTRAOPERATIVE,
    NUMERIC,
    PHYSICAL_STATUS,
    ClockLatent,
    Cohort,
    DatasetVariant,
    FeatureRegistry,
    FeatureSet,
    FeatureSpec,
    Outcome,
    canonical_surgery,
    default_registry,
    select_surgery,
)


def test_registry_intraoperative_numerics():
    reg = default_registry()
    intra = reg.by_category(INTRAOPERATIVE)
    assert [s.name for s in intra] == list(INTRAOP_NUMERICS)
    assert len(intra) == 8
    assert all(s.kind == NUMERIC for s in intra)


def test_registry_clock_latents_and_surgeries():
    reg = default_registry()
    clock = reg.by_category(CLOCK_LATENT)
    assert len(clock) == 10
    assert [s.name for s in clock][:6] == [
        "clock_size", "rotated_ellipse", "rotated_vertical_ellipse",
        "upward_displaced_hands", "ovate_obovate_shape", "obtuse_hand_angle",
    ]
    assert [s.name for s in clock][6:] == ["z7", "z8", "z9", "z10"]
    assert len(reg.surgery_types) == 6


def test_registry_demographics_and_physical_status():
    reg = default_registry()
    demo = {s.name for s in reg.by_category(DEMOGRAPHIC)}
    assert demo == {"age", "sex", "race", "ethnicity", "education_years", "adi"}
    phys = {s.name for s in reg.by_category(PHYSICAL_STATUS)}
    assert phys == {"asa", "frailty", *COMORBIDITIES}
    assert len(COMORBIDITIES) == 6
    assert all(reg[c].kind == BINARY for c in COMORBIDITIES)
    assert reg["race"].kind == CATEGORICAL and "Other" in reg["race"].levels
    assert "bmi_admission" not in reg


def test_registry_json_round_trip():
    reg = default_registry()
    assert FeatureRegistry.from_json(reg.to_json()) == reg


def test_registry_rejects_duplicates_and_partial_clock():
    a = FeatureSpec("a", NUMERIC, INTRAOPERATIVE)
    with pytest.raises(ValueError, match="duplicate"):
        FeatureRegistry((a, a))
    with pytest.raises(ValueError, match="clock"):
        FeatureRegistry((FeatureSpec("z1", NUMERIC, CLOCK_LATENT),))
    with pytest.raises(ValueError):
        FeatureSpec("z", BINARY, CLOCK_LATENT)


def test_variant_nesting():
    reg = default_registry()
    f = {fs: set(DatasetVariant(fs).feature_names(reg)) for fs in FeatureSet}
    assert f[FeatureSet.INTRA_OP] < f[FeatureSet.PERI_OP] < f[FeatureSet.PERI_OP_COGNITIVE]
    assert f[FeatureSet.PERI_OP_COGNITIVE] == set(reg.names)


def test_variant_surgery_onehot_flag():
    assert DatasetVariant(FeatureSet.INTRA_OP).include_surgery_onehot
    assert not DatasetVariant(FeatureSet.INTRA_OP, "Orthopedics").include_surgery_onehot
    with pytest.raises(ValueError):
        DatasetVariant(FeatureSet.INTRA_OP, "Dermatology")


def test_clock_latent_validation():
    z = ClockLatent(tuple(range(10)))
    assert z.as_dict()["clock_size"] == 0.0
    assert list(z.as_dict()) == list(CLOCK_LATENT_NAMES)
    with pytest.raises(ValueError):
        ClockLatent((1.0,) * 9)
    with pytest.raises(ValueError):
        ClockLatent((1.0,) * 9 + (float("nan"),))


def test_outcome_and_surgery_parsing():
    assert Outcome.parse("los") is Outcome.LOS
    assert Outcome.parse("Mortality") is Outcome.MORTALITY
    assert Outcome.parse("avg_pain") is Outcome.AVG_PAIN
    assert canonical_surgery("allsurgeries") == ALL_SURGERIES
    with pytest.raises(ValueError):
        Outcome.parse("readmission")


def _tiny(reg, n=3, **over):
    feats = {}
    for s in reg.specs:
        if s.kind == CATEGORICAL:
            feats[s.name] = np.array([s.levels[0]] * n, dtype=object)
        else:
            feats[s.name] = np.zeros(n)
    feats.update(over)
    return feats


def test_cohort_missing_mask_and_validation():
    reg = default_registry()
    feats = _tiny(reg)
    miss = {"iso_sev_mac": np.array([False, True, False])}
    c = Cohort(reg, feats, miss, np.array(["Orthopedics"] * 3), {"avg_pain": np.array([0.0, 5.0, 10.0])}, {})
    assert np.isnan(c.features["iso_sev_mac"][1])
    assert c.missing["iso_sev_mac"].tolist() == [False, True, False]
    assert c.outcome_missing["los_hours"].all()
    with pytest.raises(ValueError, match="avg_pain"):
        Cohort(reg, feats, {}, np.array(["Orthopedics"] * 3), {"avg_pain": np.array([0.0, 11.0, 1.0])}, {})
    with pytest.raises(ValueError, match="binary"):
        Cohort(reg, _tiny(reg, diabetes=np.array([0.0, 2.0, 1.0])), {}, np.array(["Urology"] * 3), {}, {})
    with pytest.raises(ValueError, match="not in the registry"):
        Cohort(reg, {**feats, "bmi_admission": np.zeros(3)}, {}, np.array(["Urology"] * 3), {}, {})


def test_cohort_is_immutable(small_cohort):
    with pytest.raises(ValueError):
        small_cohort.features["age"][0] = 1.0


def test_select_surgery(small_cohort):
    ortho = select_surgery(small_cohort, "Orthopedics")
    assert set(ortho.surgery) == {"Orthopedics"}
    assert ortho.n == int(np.sum(small_cohort.surgery == "Orthopedics"))
    assert select_surgery(small_cohort, ALL_SURGERIES) is small_cohort
