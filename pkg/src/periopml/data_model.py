"""Feature registry, cohorts, outcomes and dataset-variant vocabulary."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
BINARY = "binary"
KINDS = (NUMERIC, CATEGORICAL, BINARY)

INTRAOPERATIVE = "intraoperative"
DEMOGRAPHIC = "demographic"
PHYSICAL_STATUS = "physical_status"
CLOCK_LATENT = "clock_latent"
CATEGORIES = (INTRAOPERATIVE, DEMOGRAPHIC, PHYSICAL_STATUS, CLOCK_LATENT)

ALL_SURGERIES = "AllSurgeries"
SURGERY_TYPES = (
    "Orthopedics",
    "Neurosurgery",
    "CardiacVascular",
    "Urology",
    "Gynecology",
    "Otolaryngology",
)

INTRAOP_NUMERICS = (
    "duration_min",
    "propofol_mg",
    "oral_mme_mg",
    "iso_sev_mac",
    "avg_nibp",
    "sd_nibp",
    "phenylephrine_mcg",
    "ephedrine_mg",
)
COMORBIDITIES = (
    "sleep_apnea",
    "diabetes",
    "hyperlipidemia",
    "hypertension",
    "movement_disorder",
    "cognitive_disorder",
)
CLOCK_LATENT_NAMES = (
    "clock_size",
    "rotated_ellipse",
    "rotated_vertical_ellipse",
    "upward_displaced_hands",
    "ovate_obovate_shape",
    "obtuse_hand_angle",
    "z7",
    "z8",
    "z9",
    "z10",
)
CLOCK_DIM = 10

# raw outcome columns carried next to the features
OUTCOME_COLUMNS = ("los_hours", "charges_dollars", "days_to_death", "avg_pain")
SURGERY_COLUMN = "surgery"


class Outcome(str, enum.Enum):
    """The four binarized hospital outcomes. Thresholds are module constants."""

    LOS = "LOS"
    CHARGES = "Charges"
    MORTALITY = "Mortality1y"
    AVG_PAIN = "AvgPain"

    @property
    def raw_column(self) -> str:
        return _RAW_COLUMN[self]

    @classmethod
    def parse(cls, text: str) -> "Outcome":
        key = text.strip().lower().replace("_", "").replace("-", "")
        for member in cls:
            if key in (member.value.lower(), member.name.lower().replace("_", "")):
                return member
        aliases = {"mortality": cls.MORTALITY, "pain": cls.AVG_PAIN, "averagepain": cls.AVG_PAIN}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown outcome {text!r}; expected one of {[m.value for m in cls]}")


_RAW_COLUMN = {
    Outcome.LOS: "los_hours",
    Outcome.CHARGES: "charges_dollars",
    Outcome.MORTALITY: "days_to_death",
    Outcome.AVG_PAIN: "avg_pain",
}

# Binarization constants. Not configurable.
LOS_SAME_DAY_HOURS = 24.0
CHARGES_THRESHOLD = 30_000.0
MORTALITY_WINDOW_DAYS = 365.0
PAIN_NONE = 0.0
PAIN_PRESENT = 1.0


class FeatureSet(str, enum.Enum):
    INTRA_OP = "IntraOp"
    PERI_OP = "PeriOp"
    PERI_OP_COGNITIVE = "PeriOpCognitive"

    @property
    def categories(self) -> tuple[str, ...]:
        if self is FeatureSet.INTRA_OP:
            return (INTRAOPERATIVE,)
        if self is FeatureSet.PERI_OP:
            return (INTRAOPERATIVE, DEMOGRAPHIC, PHYSICAL_STATUS)
        return CATEGORIES

    @classmethod
    def parse(cls, text: str) -> "FeatureSet":
        key = text.strip().lower().replace("_", "").replace("-", "")
        for member in cls:
            if key == member.value.lower():
                return member
        raise ValueError(f"unknown dataset variant {text!r}; expected one of {[m.value for m in cls]}")


def canonical_surgery(text: str) -> str:
    """Case-insensitive lookup of a surgery label (or AllSurgeries)."""
    key = text.strip().lower()
    for label in (ALL_SURGERIES,) + SURGERY_TYPES:
        if key == label.lower():
            return label
    raise ValueError(f"unknown surgery {text!r}; expected one of {[ALL_SURGERIES, *SURGERY_TYPES]}")


@dataclass(frozen=True)
class DatasetVariant:
    features: FeatureSet
    surgery: str = ALL_SURGERIES

    def __post_init__(self):
        object.__setattr__(self, "features", FeatureSet(self.features))
        object.__setattr__(self, "surgery", canonical_surgery(self.surgery))

    @property
    def include_surgery_onehot(self) -> bool:
        return self.surgery == ALL_SURGERIES

    def feature_names(self, registry: "FeatureRegistry") -> list[str]:
        cats = set(self.features.categories)
        return [s.name for s in registry.specs if s.category in cats]

    def label(self) -> str:
        return f"{self.features.value}/{self.surgery}"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    category: str
    units: str = "dimensionless"
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"{self.name}: bad kind {self.kind!r}")
        if self.category not in CATEGORIES:
            raise ValueError(f"{self.name}: bad category {self.category!r}")
        if self.category == CLOCK_LATENT and self.kind != NUMERIC:
            raise ValueError(f"{self.name}: clock latent features must be numeric")
        if self.kind == CATEGORICAL and not self.levels:
            raise ValueError(f"{self.name}: categorical feature needs declared levels")
        object.__setattr__(self, "levels", tuple(self.levels))


@dataclass(frozen=True)
class FeatureRegistry:
    specs: tuple[FeatureSpec, ...]
    surgery_types: tuple[str, ...] = SURGERY_TYPES

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(self, "surgery_types", tuple(self.surgery_types))
        names = [s.name for s in self.specs]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValueError(f"duplicate feature names: {dupes}")
        n_clock = sum(s.category == CLOCK_LATENT for s in self.specs)
        if n_clock not in (0, CLOCK_DIM):
            raise ValueError(f"expected 0 or {CLOCK_DIM} clock latent features, got {n_clock}")

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def __getitem__(self, name: str) -> FeatureSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(s.name == name for s in self.specs)

    def by_category(self, category: str) -> list[FeatureSpec]:
        return [s for s in self.specs if s.category == category]

    def to_json(self) -> str:
        doc = {
            "specs": [
                {"name": s.name, "kind": s.kind, "category": s.category, "units": s.units, "levels": list(s.levels)}
                for s in self.specs
            ],
            "surgery_types": list(self.surgery_types),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FeatureRegistry":
        doc = json.loads(text)
        specs = [FeatureSpec(d["name"], d["kind"], d["category"], d.get("units", ""), tuple(d.get("levels", ())))
                 for d in doc["specs"]]
        return cls(tuple(specs), tuple(doc.get("surgery_types", SURGERY_TYPES)))


def default_registry() -> FeatureRegistry:
    """The canonical registry: 8 intraoperative numerics, demographics,
    physical status with six comorbidities, and 10 clock latents."""
    units = {
        "duration_min": "minutes",
        "propofol_mg": "mg",
        "oral_mme_mg": "mg",
        "iso_sev_mac": "MAC",
        "avg_nibp": "mmHg",
        "sd_nibp": "mmHg",
        "phenylephrine_mcg": "mcg",
        "ephedrine_mg": "mg",
    }
    specs = [FeatureSpec(n, NUMERIC, INTRAOPERATIVE, units[n]) for n in INTRAOP_NUMERICS]
    specs += [
        FeatureSpec("age", NUMERIC, DEMOGRAPHIC, "years"),
        FeatureSpec("sex", CATEGORICAL, DEMOGRAPHIC, levels=("Male", "Female")),
        FeatureSpec("race", CATEGORICAL, DEMOGRAPHIC, levels=("White", "Black", "Other")),
        FeatureSpec("ethnicity", CATEGORICAL, DEMOGRAPHIC, levels=("NonHispanic", "Hispanic", "Other")),
        FeatureSpec("education_years", NUMERIC, DEMOGRAPHIC, "years"),
        FeatureSpec("adi", NUMERIC, DEMOGRAPHIC, "national percentile"),
        FeatureSpec("asa", NUMERIC, PHYSICAL_STATUS, "ordinal 1-5"),
        FeatureSpec("frailty", NUMERIC, PHYSICAL_STATUS, "score 0-5"),
    ]
    specs += [FeatureSpec(n, BINARY, PHYSICAL_STATUS) for n in COMORBIDITIES]
    specs += [FeatureSpec(n, NUMERIC, CLOCK_LATENT) for n in CLOCK_LATENT_NAMES]
    return FeatureRegistry(tuple(specs), SURGERY_TYPES)


@dataclass(frozen=True)
class ClockLatent:
    """A clock drawing projected onto the 10-dim latent space."""

    z: tuple[float, ...]

    def __post_init__(self):
        z = tuple(float(v) for v in self.z)
        if len(z) != CLOCK_DIM:
            raise ValueError(f"clock latent must have {CLOCK_DIM} values, got {len(z)}")
        if not all(math.isfinite(v) for v in z):
            raise ValueError("clock latent values must be finite")
        object.__setattr__(self, "z", z)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(CLOCK_LATENT_NAMES, self.z))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Cohort:
    """Columnar patient table.

    ``features[name]`` holds float64 values for numeric/binary features and
    str objects for categoricals; ``missing[name]`` is the authoritative
    missingness mask (numeric missing cells also read NaN). Outcomes follow
    the same convention; ``days_to_death`` is ``inf`` for patients alive at
    the end of follow-up.
    """

    registry: FeatureRegistry
    features: Mapping[str, np.ndarray]
    missing: Mapping[str, np.ndarray]
    surgery: np.ndarray
    outcomes: Mapping[str, np.ndarray]
    outcome_missing: Mapping[str, np.ndarray]
    dropped: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.surgery)
        feats, miss = {}, {}
        for spec in self.registry.specs:
            if spec.name not in self.features:
                raise ValueError(f"cohort lacks feature column {spec.name!r}")
            vals = np.asarray(self.features[spec.name])
            mask = np.asarray(self.missing.get(spec.name, np.zeros(n, bool)), dtype=bool)
            if len(vals) != n or len(mask) != n:
                raise ValueError(f"column {spec.name!r} has wrong length")
            if spec.kind == CATEGORICAL:
                vals = vals.astype(object)
                vals = np.where(mask, "", vals).astype(object)
                bad = {v for v, m in zip(vals, mask) if not m and v not in spec.levels}
                if bad:
                    raise ValueError(f"column {spec.name!r} has undeclared levels {sorted(bad)}")
            else:
                vals = vals.astype(np.float64)
                vals = np.where(mask, np.nan, vals)
                if spec.kind == BINARY and not np.all(np.isin(vals[~mask], (0.0, 1.0))):
                    raise ValueError(f"binary column {spec.name!r} has values outside {{0, 1}}")
            feats[spec.name] = _frozen(vals)
            miss[spec.name] = _frozen(mask)
        extra = set(self.features) - set(feats)
        if extra:
            raise ValueError(f"cohort has columns not in the registry: {sorted(extra)}")
        outs, omiss = {}, {}
        for name in OUTCOME_COLUMNS:
            vals = np.asarray(self.outcomes.get(name, np.full(n, np.nan)), dtype=np.float64)
            mask = np.asarray(self.outcome_missing.get(name, np.isnan(vals)), dtype=bool)
            vals = np.where(mask, np.nan, vals)
            if len(vals) != n:
                raise ValueError(f"outcome {name!r} has wrong length")
            outs[name] = _frozen(vals)
            omiss[name] = _frozen(mask)
        pain = outs["avg_pain"][~omiss["avg_pain"]]
        if np.any((pain < 0) | (pain > 10)):
            raise ValueError("avg_pain must lie within [0, 10]")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "missing", miss)
        object.__setattr__(self, "outcomes", outs)
        object.__setattr__(self, "outcome_missing", omiss)
        object.__setattr__(self, "surgery", _frozen(np.asarray(self.surgery, dtype=object)))
        object.__setattr__(self, "dropped", dict(self.dropped))

    def __len__(self) -> int:
        return len(self.surgery)

    @property
    def n(self) -> int:
        return len(self.surgery)

    def take(self, rows: Sequence[int] | np.ndarray, dropped: Mapping[str, int] | None = None) -> "Cohort":
        rows = np.asarray(rows)
        rows = np.flatnonzero(rows) if rows.dtype == bool else rows.astype(np.int64)
        return Cohort(
            self.registry,
            {k: v[rows] for k, v in self.features.items()},
            {k: v[rows] for k, v in self.missing.items()},
            self.surgery[rows],
            {k: v[rows] for k, v in self.outcomes.items()},
            {k: v[rows] for k, v in self.outcome_missing.items()},
            dict(self.dropped if dropped is None else dropped),
        )

    def equals(self, other: "Cohort") -> bool:
        """Bit-for-bit equality of values and masks."""
        if self.registry != other.registry or self.n != other.n:
            return False
        if not np.array_equal(self.surgery, other.surgery):
            return False
        for k in self.features:
            a, b = self.features[k], other.features[k]
            if a.dtype == object:
                if not np.array_equal(a, b):
                    return False
            elif a.tobytes() != b.tobytes():
                return False
            if not np.array_equal(self.missing[k], other.missing[k]):
                return False
        for k in self.outcomes:
            if self.outcomes[k].tobytes() != other.outcomes[k].tobytes():
                return False
            if not np.array_equal(self.outcome_missing[k], other.outcome_missing[k]):
                return False
        return True

    def row_missing(self, names: Iterable[str]) -> np.ndarray:
        out = np.zeros(self.n, bool)
        for name in names:
            out |= self.missing[name]
        return out


def select_surgery(cohort: Cohort, surgery: str) -> Cohort:
    surgery = canonical_surgery(surgery)
    if surgery == ALL_SURGERIES:
        return cohort
    return cohort.take(np.flatnonzero(cohort.surgery == surgery))
