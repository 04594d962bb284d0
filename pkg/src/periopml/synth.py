"""Calibrated synthetic cohorts with planted outcome mechanisms.

Intraoperative numerics are drawn through a Gaussian copula: correlated
standard normals are pushed through each target marginal's quantile map.
Demographic and physical-status features are drawn independently from their
marginals. Each outcome is Bernoulli under a linear logistic score over
standardized features, optionally with a planted blood-pressure "disruption"
term ``+beta*z(sd_nibp) - beta*z(avg_nibp)``.
"""

from __future__ import annotations

import dataclasses
import functools
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import optimize, stats
from scipy.special import expit

from .data_model import (
    ALL_SURGERIES,
    BINARY,
    CATEGORICAL,
    CLOCK_LATENT,
    CLOCK_LATENT_NAMES,
    COMORBIDITIES,
    INTRAOP_NUMERICS,
    INTRAOPERATIVE,
    OUTCOME_COLUMNS,
    SURGERY_TYPES,
    Cohort,
    FeatureRegistry,
    Outcome,
    canonical_surgery,
    default_registry,
)

BLOCK_SIZE = 8192
TUNING_SEED = 20240917
TUNING_N = 100_000
PSD_FLOOR = 1e-8

TRUNCNORM = "truncnorm"
LOGNORMAL = "lognormal"
DISCRETE = "discrete"
NORMAL = "normal"


# --- marginals ----------------------------------------------------------------

@dataclass(frozen=True)
class NumericMarginal:
    """Target moments plus the sampling family that realizes them.

    For ``truncnorm`` the parent (loc, scale) are solved so that the
    *truncated* mean and sd equal the targets.
    """

    dist: str
    mean: float
    sd: float
    lo: float = -np.inf
    hi: float = np.inf
    support: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.dist not in (TRUNCNORM, LOGNORMAL, DISCRETE, NORMAL):
            raise ValueError(f"unknown marginal family {self.dist!r}")
        if not self.sd > 0:
            raise ValueError("marginal sd must be > 0")
        if self.dist == DISCRETE:
            p = np.asarray(self.probs, dtype=float)
            if len(self.support) != len(p) or p.size == 0 or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
                raise ValueError("discrete marginal needs matching support and probabilities summing to 1")

    def ppf(self, u: np.ndarray) -> np.ndarray:
        if self.dist == NORMAL:
            return self.mean + self.sd * stats.norm.ppf(u)
        if self.dist == LOGNORMAL:
            s2 = np.log1p((self.sd / self.mean) ** 2)
            return np.exp(np.log(self.mean) - 0.5 * s2 + np.sqrt(s2) * stats.norm.ppf(u))
        if self.dist == TRUNCNORM:
            loc, scale = _truncnorm_parent(self.mean, self.sd, self.lo, self.hi)
            return stats.truncnorm.ppf(u, (self.lo - loc) / scale, (self.hi - loc) / scale, loc=loc, scale=scale)
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
        return np.asarray(self.support, dtype=float)[idx]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lo"] = None if np.isinf(self.lo) else self.lo
        d["hi"] = None if np.isinf(self.hi) else self.hi
        d["support"], d["probs"] = list(self.support), list(self.probs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NumericMarginal":
        return cls(d["dist"], d["mean"], d["sd"],
                   -np.inf if d.get("lo") is None else d["lo"], np.inf if d.get("hi") is None else d["hi"],
                   tuple(d.get("support", ())), tuple(d.get("probs", ())))


@functools.lru_cache(maxsize=None)
def _truncnorm_parent(mean: float, sd: float, lo: float, hi: float) -> tuple[float, float]:
    def resid(v):
        loc, log_scale = v
        scale = np.exp(log_scale)
        m, var = stats.truncnorm.stats((lo - loc) / scale, (hi - loc) / scale, loc=loc, scale=scale, moments="mv")
        return [(m - mean) / sd, (np.sqrt(var) - sd) / sd]

    sol = optimize.least_squares(resid, [mean, np.log(sd)], xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if max(abs(r) for r in sol.fun) > 1e-8:
        raise ValueError(f"cannot realize mean {mean}, sd {sd} on [{lo}, {hi}] with a truncated normal")
    return float(sol.x[0]), float(np.exp(sol.x[1]))


def discrete_marginal(support, probs) -> NumericMarginal:
    s = np.asarray(support, dtype=float)
    p = np.asarray(probs, dtype=float)
    p = p / p.sum()
    mean = float(p @ s)
    sd = float(np.sqrt(p @ (s - mean) ** 2))
    return NumericMarginal(DISCRETE, mean, sd, support=tuple(s.tolist()), probs=tuple(p.tolist()))


def fitted_discrete(support, mean: float, sd: float) -> NumericMarginal:
    """Exponential-family fit ``p_k ~ exp(a*k + b*k^2)`` matching two moments."""
    s = np.asarray(support, dtype=float)

    def probs(v):
        e = v[0] * s + v[1] * s * s
        w = np.exp(e - e.max())
        return w / w.sum()

    def resid(v):
        p = probs(v)
        m = p @ s
        return [m - mean, np.sqrt(p @ (s - m) ** 2) - sd]

    sol = optimize.least_squares(resid, [0.0, 0.0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if max(abs(r) for r in sol.fun) > 1e-7:
        raise ValueError(f"cannot realize mean {mean}, sd {sd} on support {list(s)}")
    return discrete_marginal(s, probs(sol.x))


def lognormal(mean, sd) -> NumericMarginal:
    return NumericMarginal(LOGNORMAL, mean, sd, lo=0.0)


# --- cohort marginal targets ------------------------------------------------------

_COLUMNS = (ALL_SURGERIES,) + SURGERY_TYPES
_N = dict(zip(_COLUMNS, (6221, 916, 542, 461, 639, 203, 395)))
_AGE = dict(zip(_COLUMNS, ((73.3, 6.0), (72.0, 5.6), (73.0, 5.3), (73.9, 6.1), (74.1, 6.2), (72.5, 5.7), (73.9, 6.3))))
_SEX_MF = dict(zip(_COLUMNS, ((50.3, 49.7), (44.3, 55.7), (55.1, 44.8), (49.9, 50.1), (71.0, 28.9), (0.0, 100.0), (54.9, 45.1))))
_RACE_WB = dict(zip(_COLUMNS, ((87.0, 7.3), (86.6, 6.0), (93.3, 2.7), (86.9, 8.2), (87.5, 6.7), (88.7, 7.4), (88.3, 5.3))))
_ETH_NH = dict(zip(_COLUMNS, ((95.7, 2.0), (93.8, 1.5), (97.2, 2.0), (94.3, 2.8), (97.3, 2.0), (98.0, 1.9), (96.2, 1.8))))
_ADI = dict(zip(_COLUMNS, ((60.2, 23.0), (59.1, 23.0), (54.7, 24.1), (60.9, 21.9), (61.0, 22.7), (62.5, 21.9), (58.7, 22.3))))
_EDU = dict(zip(_COLUMNS, ((13.9, 2.9), (14.4, 3.1), (14.3, 2.8), (13.4, 2.7), (14.2, 3.1), (13.8, 2.4), (13.8, 2.8))))
_ASA = dict(zip(_COLUMNS, (
    (0.1, 11.5, 79.5, 8.9, 0.01), (0.0, 17.5, 80.2, 2.3, 0.0), (0.4, 10.7, 86.7, 2.2, 0.0),
    (0.0, 1.5, 70.5, 28.0, 0.0), (0.0, 13.1, 84.2, 2.7, 0.0), (0.5, 25.1, 71.9, 2.5, 0.0), (0.0, 14.9, 80.0, 5.1, 0.0),
)))
_FRAIL = dict(zip(_COLUMNS, ((1.2, 1.3), (1.4, 1.3), (1.2, 1.4), (1.3, 1.4), (1.0, 1.3), (1.1, 1.2), (1.0, 1.3))))
_COMORB = dict(zip(_COLUMNS, (
    (16.0, 29.4, 54.4, 55.1, 5.8, 0.9), (16.5, 23.8, 57.2, 59.9, 4.6, 0.9), (15.5, 25.6, 52.0, 55.1, 27.5, 1.1),
    (12.1, 33.8, 64.4, 41.4, 2.1, 0.4), (13.8, 28.5, 43.9, 54.3, 3.7, 0.9), (8.4, 20.7, 43.3, 52.7, 1.9, 0.5),
    (16.2, 29.6, 40.7, 57.9, 3.0, 1.0),
)))

# reported class counts (N0, N1) per outcome
_PREVALENCE_COUNTS: dict[str, dict[Outcome, tuple[int, int]]] = {
    ALL_SURGERIES: {Outcome.LOS: (3053, 1908), Outcome.CHARGES: (2341, 2605), Outcome.AVG_PAIN: (2309, 3084),
                    Outcome.MORTALITY: (4740, 226)},
    "Orthopedics": {Outcome.LOS: (207, 662), Outcome.CHARGES: (82, 787), Outcome.AVG_PAIN: (156, 752)},
    "Neurosurgery": {Outcome.LOS: (430, 693), Outcome.CHARGES: (90, 411), Outcome.AVG_PAIN: (328, 795)},
    "CardiacVascular": {Outcome.LOS: (192, 260), Outcome.CHARGES: (93, 359), Outcome.AVG_PAIN: (307, 521)},
    "Urology": {Outcome.LOS: (383, 148), Outcome.CHARGES: (295, 236), Outcome.AVG_PAIN: (294, 237)},
    "Gynecology": {Outcome.LOS: (123, 50), Outcome.CHARGES: (254, 128), Outcome.AVG_PAIN: (167, 33)},
    "Otolaryngology": {Outcome.LOS: (228, 111), Outcome.CHARGES: (243, 137), Outcome.AVG_PAIN: (580, 238)},
}

# Intraoperative marginals are not tabulated; plausible fixed constants.
_INTRAOP_MARGINALS = {
    "duration_min": lognormal(200.0, 110.0),
    "propofol_mg": lognormal(160.0, 90.0),
    "oral_mme_mg": lognormal(45.0, 35.0),
    "iso_sev_mac": NumericMarginal(TRUNCNORM, 0.75, 0.2, 0.05, 2.0),
    "avg_nibp": NumericMarginal(TRUNCNORM, 85.0, 11.0, 45.0, 140.0),
    "sd_nibp": lognormal(13.0, 4.5),
    "phenylephrine_mcg": lognormal(350.0, 250.0),
    "ephedrine_mg": lognormal(12.0, 9.0),
}

HIGH, MODERATE, LOW = 0.6, 0.4, 0.2
_HIGH_DUR_MME = {ALL_SURGERIES, "CardiacVascular", "Urology", "Gynecology"}
_LOW_AVG_SD = {ALL_SURGERIES, "CardiacVascular"}
_NEG_EPH_AVG = {"Gynecology", "Otolaryngology"}
_NEG_ISO_PROP = {"Orthopedics", "Urology", "Gynecology", "Otolaryngology"}


def default_corr(surgery: str) -> np.ndarray:
    """Representative signed in-band correlations over the intraoperative numerics."""
    ix = {n: i for i, n in enumerate(INTRAOP_NUMERICS)}
    C = np.eye(len(ix))

    def put(a, b, r):
        C[ix[a], ix[b]] = C[ix[b], ix[a]] = r

    put("duration_min", "oral_mme_mg", HIGH if surgery in _HIGH_DUR_MME else MODERATE)
    put("phenylephrine_mcg", "avg_nibp", HIGH)
    put("phenylephrine_mcg", "sd_nibp", HIGH)
    put("avg_nibp", "sd_nibp", LOW if surgery in _LOW_AVG_SD else MODERATE)
    if surgery in _NEG_EPH_AVG:
        put("ephedrine_mg", "avg_nibp", -MODERATE)
    if surgery in _NEG_ISO_PROP:
        put("iso_sev_mac", "propofol_mg", -MODERATE)
    put("duration_min", "iso_sev_mac", LOW)
    put("oral_mme_mg", "iso_sev_mac", LOW)
    put("phenylephrine_mcg", "ephedrine_mg", -LOW)
    return C


def repair_psd(C: np.ndarray, floor: float = PSD_FLOOR, max_passes: int = 100) -> np.ndarray:
    """Nearest-PSD style repair: clip eigenvalues at ``floor`` and rescale to a
    unit diagonal, repeated until positive semidefinite. PSD input is returned as is."""
    C = np.array(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or not np.allclose(C, C.T, atol=1e-12):
        raise ValueError("correlation target must be a symmetric square matrix")
    C = 0.5 * (C + C.T)
    for _ in range(max_passes + 1):
        w, V = np.linalg.eigh(C)
        if w.min() >= 0:
            return C
        C = (V * np.maximum(w, floor)) @ V.T
        d = np.sqrt(np.diag(C))
        C = C / np.outer(d, d)
        C = 0.5 * (C + C.T)
        np.fill_diagonal(C, 1.0)
    w = np.linalg.eigvalsh(C)
    raise ValueError(f"correlation repair did not converge; smallest eigenvalue {w.min():.3e}")


# --- mechanisms and profile -----------------------------------------------------

@dataclass(frozen=True)
class Disruption:
    """Risk term ``beta * z(rise) - beta * z(fall)``."""

    rise: str = "sd_nibp"
    fall: str = "avg_nibp"
    beta: float = 1.5


@dataclass(frozen=True)
class Mechanism:
    """Linear logistic score over standardized features.

    Keys of ``coef`` are numeric/binary feature names or ``"name=level"`` for
    a categorical indicator.
    """

    coef: Mapping[str, float]
    intercept: float = 0.0
    disruption: Disruption | None = None

    def to_dict(self) -> dict:
        return {"coef": dict(self.coef), "intercept": self.intercept,
                "disruption": None if self.disruption is None else dataclasses.asdict(self.disruption)}

    @classmethod
    def from_dict(cls, d: dict) -> "Mechanism":
        dis = d.get("disruption")
        return cls(dict(d["coef"]), float(d["intercept"]), None if dis is None else Disruption(**dis))


@dataclass(frozen=True)
class GenProfile:
    surgery: str
    n: int
    seed: int
    numeric: Mapping[str, NumericMarginal]
    binary: Mapping[str, float]
    categorical: Mapping[str, Mapping[str, float]]
    corr_targets: np.ndarray
    mechanisms: Mapping[Outcome, Mechanism]
    surgery_mix: Mapping[str, float] = field(default_factory=dict)
    missing_rate: Mapping[str, float] = field(default_factory=dict)
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError("n must be a non-negative integer")
        C = np.asarray(self.corr_targets, dtype=float)
        k = len(INTRAOP_NUMERICS)
        if C.shape != (k, k) or not np.allclose(C, C.T, atol=1e-12) or not np.allclose(np.diag(C), 1.0):
            raise ValueError("corr_targets must be a symmetric unit-diagonal matrix over the intraoperative numerics")
        if np.linalg.eigvalsh(C).min() < 0:
            raise ValueError("corr_targets must be positive semidefinite (apply repair_psd)")
        C = C.copy()
        C.setflags(write=False)
        object.__setattr__(self, "corr_targets", C)
        for name, p in self.binary.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"binary prevalence for {name!r} outside [0, 1]")
        for name, lv in self.categorical.items():
            if abs(sum(lv.values()) - 1.0) > 1e-9 or min(lv.values()) < 0:
                raise ValueError(f"level probabilities for {name!r} must be non-negative and sum to 1")
        for out, m in self.mechanisms.items():
            if not np.isfinite(m.intercept):
                raise ValueError(f"mechanism for {out.value} has a non-finite intercept")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")

    def standardizer(self) -> dict[str, tuple[float, float]]:
        return {k: (m.mean, m.sd) for k, m in self.numeric.items()}

    def with_(self, **kw) -> "GenProfile":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "surgery": self.surgery, "n": self.n, "seed": self.seed,
            "numeric": {k: v.to_dict() for k, v in self.numeric.items()},
            "binary": dict(self.binary),
            "categorical": {k: dict(v) for k, v in self.categorical.items()},
            "corr_names": list(INTRAOP_NUMERICS),
            "corr_targets": self.corr_targets.tolist(),
            "mechanisms": {k.value: v.to_dict() for k, v in self.mechanisms.items()},
            "surgery_mix": dict(self.surgery_mix),
            "missing_rate": dict(self.missing_rate),
            "block_size": self.block_size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "GenProfile":
        if list(d.get("corr_names", INTRAOP_NUMERICS)) != list(INTRAOP_NUMERICS):
            raise ValueError("corr_targets variable order does not match the intraoperative numerics")
        return cls(
            d["surgery"], int(d["n"]), int(d["seed"]),
            {k: NumericMarginal.from_dict(v) for k, v in d["numeric"].items()},
            dict(d["binary"]), {k: dict(v) for k, v in d["categorical"].items()},
            np.asarray(d["corr_targets"], dtype=float),
            {Outcome.parse(k): Mechanism.from_dict(v) for k, v in d["mechanisms"].items()},
            dict(d.get("surgery_mix", {})), dict(d.get("missing_rate", {})), int(d.get("block_size", BLOCK_SIZE)),
        )

    @classmethod
    def from_json(cls, text: str) -> "GenProfile":
        return cls.from_dict(json.loads(text))


_BASE_COEF: dict[Outcome, dict[str, float]] = {
    Outcome.LOS: {
        "duration_min": 1.0, "iso_sev_mac": 0.6, "oral_mme_mg": 0.6, "age": 0.4, "frailty": 0.4, "asa": 0.4,
        "clock_size": 0.3, "sleep_apnea": 0.3, "sex=Female": 0.2,
    },
    Outcome.CHARGES: {
        "duration_min": 1.5, "asa": 0.5, "age": 0.3, "propofol_mg": 0.3, "phenylephrine_mcg": 0.3,
        "diabetes": 0.3, "hypertension": 0.2, "rotated_ellipse": 0.3,
    },
    Outcome.MORTALITY: {
        "age": 1.0, "frailty": 0.8, "asa": 0.7, "cognitive_disorder": 0.5, "ovate_obovate_shape": 0.4,
        "adi": 0.3, "duration_min": 0.3,
    },
    Outcome.AVG_PAIN: {
        "oral_mme_mg": 1.0, "duration_min": 0.5, "age": -0.5, "education_years": -0.2,
        "upward_displaced_hands": 0.3, "sleep_apnea": 0.2,
    },
}


def _pct_levels(levels, pcts) -> dict[str, float]:
    p = np.asarray(pcts, dtype=float) / 100.0
    return dict(zip(levels, (p / p.sum()).tolist()))


def _three_levels(levels, a, b) -> dict[str, float]:
    rest = max(100.0 - a - b, 0.0)
    return _pct_levels(levels, (a, b, rest))


@functools.lru_cache(maxsize=None)
def _base_profile(surgery: str) -> GenProfile:
    numeric = dict(_INTRAOP_MARGINALS)
    numeric["age"] = NumericMarginal(TRUNCNORM, *_AGE[surgery], 65.0, 105.0)
    numeric["education_years"] = NumericMarginal(TRUNCNORM, *_EDU[surgery], 4.0, 25.0)
    numeric["adi"] = NumericMarginal(TRUNCNORM, *_ADI[surgery], 1.0, 100.0)
    numeric["asa"] = discrete_marginal((1, 2, 3, 4, 5), _ASA[surgery])
    numeric["frailty"] = fitted_discrete(range(6), *_FRAIL[surgery])
    for name in CLOCK_LATENT_NAMES:
        numeric[name] = NumericMarginal(NORMAL, 0.0, 1.0)
    binary = {n: p / 100.0 for n, p in zip(COMORBIDITIES, _COMORB[surgery])}
    categorical = {
        "sex": _pct_levels(("Male", "Female"), _SEX_MF[surgery]),
        "race": _three_levels(("White", "Black", "Other"), *_RACE_WB[surgery]),
        "ethnicity": _three_levels(("NonHispanic", "Hispanic", "Other"), *_ETH_NH[surgery]),
    }
    mix = {}
    if surgery == ALL_SURGERIES:
        tot = sum(_N[s] for s in SURGERY_TYPES)
        mix = {s: _N[s] / tot for s in SURGERY_TYPES}
    mechanisms = {}
    for out, (n0, n1) in _PREVALENCE_COUNTS[surgery].items():
        dis = Disruption() if out is Outcome.LOS else None
        mechanisms[out] = Mechanism(dict(_BASE_COEF[out]), 0.0, dis)
    prof = GenProfile(surgery, 0, TUNING_SEED, numeric, binary, categorical,
                      repair_psd(default_corr(surgery)), mechanisms, mix)
    tuned = {}
    sample = _draw(prof.with_(n=TUNING_N))
    for out, mech in mechanisms.items():
        n0, n1 = _PREVALENCE_COUNTS[surgery][out]
        score = planted_score(prof, mech, sample.features)
        tuned[out] = dataclasses.replace(mech, intercept=_solve_intercept(score, n1 / (n0 + n1)))
    return prof.with_(mechanisms=tuned)


def _solve_intercept(score: np.ndarray, target: float) -> float:
    f = lambda b: float(np.mean(expit(score + b))) - target  # noqa: E731
    return float(optimize.brentq(f, -60.0, 60.0, xtol=1e-12))


def default_profile(surgery: str = ALL_SURGERIES, n: int = 1000, seed: int = 0) -> GenProfile:
    """Profile for one surgery group with outcome prevalences tuned to the reported class counts."""
    surgery = canonical_surgery(surgery)
    return _base_profile(surgery).with_(n=int(n), seed=int(seed))


def implied_prevalence(profile: GenProfile, outcome: Outcome, n_mc: int = TUNING_N) -> float:
    sample = _draw(profile.with_(n=n_mc, seed=TUNING_SEED))
    return float(np.mean(expit(planted_score(profile, profile.mechanisms[outcome], sample.features))))


# --- sampling -------------------------------------------------------------------

def planted_score(profile: GenProfile, mech: Mechanism, features: Mapping[str, np.ndarray]) -> np.ndarray:
    """Logit of the planted mechanism evaluated on raw feature columns."""
    std = profile.standardizer()
    n = len(next(iter(features.values())))
    s = np.full(n, mech.intercept)

    def z(name):
        if name in std:
            m, sd = std[name]
            return (np.asarray(features[name], dtype=float) - m) / sd
        if "=" in name:
            src, level = name.split("=", 1)
            return (np.asarray(features[src]) == level).astype(float)
        return np.asarray(features[name], dtype=float)

    for name, b in mech.coef.items():
        if b != 0:
            s = s + b * z(name)
    if mech.disruption is not None:
        d = mech.disruption
        s = s + d.beta * z(d.rise) - d.beta * z(d.fall)
    return s


@dataclass
class _Sample:
    features: dict[str, np.ndarray]
    missing: dict[str, np.ndarray]
    surgery: np.ndarray
    latent: np.ndarray
    scores: dict[Outcome, np.ndarray]
    labels: dict[Outcome, np.ndarray]
    outcomes: dict[str, np.ndarray]


def _raw_outcomes(out: Outcome, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(y))
    v = rng.random(len(y))
    if out is Outcome.LOS:
        return np.where(y == 1, 24.0 - 72.0 * np.log1p(-u), 2.0 + 21.5 * u)
    if out is Outcome.CHARGES:
        return np.where(y == 1, 30000.0 + np.exp(9.8 + 0.8 * stats.norm.ppf(u)), 5000.0 + 24999.0 * u)
    if out is Outcome.MORTALITY:
        alive = np.where(v < 0.2, 366.0 + np.floor(u * 635.0), np.inf)
        return np.where(y == 1, 1.0 + np.floor(u * 365.0), alive)
    pain = np.where(y == 1, 1.0 + 9.0 * u, 0.0)
    # a few rows average strictly between "none" and "present"
    return np.where(v < 0.03, 0.01 + 0.98 * u, pain)


def _draw_block(profile: GenProfile, registry: FeatureRegistry, block: int, m: int, L: np.ndarray) -> _Sample:
    rng = np.random.default_rng(np.random.SeedSequence(profile.seed, spawn_key=(block,)))
    latent = rng.standard_normal((m, len(INTRAOP_NUMERICS))) @ L.T
    feats: dict[str, np.ndarray] = {}
    for j, name in enumerate(INTRAOP_NUMERICS):
        u = np.clip(stats.norm.cdf(latent[:, j]), 1e-12, 1 - 1e-12)
        feats[name] = profile.numeric[name].ppf(u)
    others = [s for s in registry.specs if s.category not in (INTRAOPERATIVE, CLOCK_LATENT)]
    U = rng.random((m, len(others) + 1))
    for j, spec in enumerate(others):
        u = U[:, j]
        if spec.kind == BINARY:
            feats[spec.name] = (u < profile.binary[spec.name]).astype(float)
        elif spec.kind == CATEGORICAL:
            lv = profile.categorical[spec.name]
            names = list(lv)
            cum = np.cumsum([lv[k] for k in names])
            idx = np.minimum(np.searchsorted(cum, u, side="right"), len(names) - 1)
            feats[spec.name] = np.asarray(names, dtype=object)[idx]
        else:
            feats[spec.name] = profile.numeric[spec.name].ppf(np.clip(u, 1e-12, 1 - 1e-12))
    Zc = rng.standard_normal((m, len(CLOCK_LATENT_NAMES)))
    for j, name in enumerate(CLOCK_LATENT_NAMES):
        mg = profile.numeric[name]
        feats[name] = mg.mean + mg.sd * Zc[:, j]
    if profile.surgery_mix:
        mix = list(profile.surgery_mix)
        cum = np.cumsum([profile.surgery_mix[k] for k in mix])
        idx = np.minimum(np.searchsorted(cum, U[:, -1], side="right"), len(mix) - 1)
        surgery = np.asarray(mix, dtype=object)[idx]
    else:
        surgery = np.full(m, profile.surgery, dtype=object)
    scores, labels, raw = {}, {}, {}
    for out in Outcome:
        mech = profile.mechanisms.get(out)
        if mech is None:
            continue
        s = planted_score(profile, mech, feats)
        y = (rng.random(m) < expit(s)).astype(np.int8)
        scores[out], labels[out] = s, y
        raw[out.raw_column] = _raw_outcomes(out, y, rng)
    for col in OUTCOME_COLUMNS:
        raw.setdefault(col, np.full(m, np.nan))
    missing = {}
    for spec in registry.specs:
        rate = profile.missing_rate.get(spec.category, 0.0)
        missing[spec.name] = rng.random(m) < rate if rate > 0 else np.zeros(m, bool)
    return _Sample(feats, missing, surgery, latent, scores, labels, raw)


def _draw(profile: GenProfile, registry: FeatureRegistry | None = None) -> _Sample:
    registry = registry or default_registry()
    try:
        L = np.linalg.cholesky(profile.corr_targets)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(profile.corr_targets)
        raise ValueError(f"correlation target is not positive definite; smallest eigenvalue {w.min():.3e}") from None
    parts = []
    for b, start in enumerate(range(0, profile.n, profile.block_size)):
        parts.append(_draw_block(profile, registry, b, min(profile.block_size, profile.n - start), L))
    if not parts:
        parts.append(_draw_block(profile, registry, 0, 0, L))
    cat = lambda dicts: {k: np.concatenate([d[k] for d in dicts]) for k in dicts[0]}  # noqa: E731
    return _Sample(
        cat([p.features for p in parts]), cat([p.missing for p in parts]),
        np.concatenate([p.surgery for p in parts]), np.concatenate([p.latent for p in parts]),
        cat([p.scores for p in parts]), cat([p.labels for p in parts]), cat([p.outcomes for p in parts]),
    )


def sample_cohort(profile: GenProfile, registry: FeatureRegistry | None = None,
                  return_latent: bool = False):
    """Draw ``profile.n`` rows. Deterministic in ``profile.seed``; rows are
    generated in fixed blocks with one seed substream per block."""
    registry = registry or default_registry()
    s = _draw(profile, registry)
    cohort = Cohort(registry, s.features, s.missing, s.surgery, s.outcomes, {})
    return (cohort, s.latent) if return_latent else cohort


def planted_labels(profile: GenProfile) -> tuple[dict[Outcome, np.ndarray], dict[Outcome, np.ndarray]]:
    """True planted logits and the Bernoulli labels drawn from them."""
    s = _draw(profile)
    return s.scores, s.labels


def bayes_optimal_auc(profile: GenProfile, outcome: Outcome | str, n_mc: int = 200_000,
                      seed: int | None = None, transform: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """Monte-Carlo AUROC of the planted score against labels drawn from it."""
    from .evalx import auroc

    outcome = Outcome.parse(outcome) if isinstance(outcome, str) else outcome
    if outcome not in profile.mechanisms:
        raise ValueError(f"profile has no planted mechanism for {outcome.value}")
    seed = profile.seed + 7_919 if seed is None else seed
    s = _draw(profile.with_(n=int(n_mc), seed=int(seed)))
    score = s.scores[outcome] if transform is None else transform(s.scores[outcome])
    return auroc(score, s.labels[outcome])
