"""Cohort CSV I/O, completeness filtering, outcome binarization and encoding."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import (
    BINARY,
    CATEGORICAL,
    CATEGORIES,
    CHARGES_THRESHOLD,
    LOS_SAME_DAY_HOURS,
    MORTALITY_WINDOW_DAYS,
    NUMERIC,
    OUTCOME_COLUMNS,
    PAIN_NONE,
    PAIN_PRESENT,
    SURGERY_COLUMN,
    Cohort,
    DatasetVariant,
    FeatureRegistry,
    Outcome,
)

SCALED = "scaled-numeric"
ONEHOT = "one-hot"
PASSTHROUGH = "binary"


class CohortFormatError(ValueError):
    """Malformed cohort file."""


class ConstantColumnWarning(UserWarning):
    pass


# -- loading -----------------------------------------------------------------

def _format_float(v: float) -> str:
    if math.isnan(v):
        return ""
    return repr(float(v))


def load_cohort(path: str | Path, registry: FeatureRegistry) -> Cohort:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortFormatError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    expected = set(registry.names) | set(OUTCOME_COLUMNS) | {SURGERY_COLUMN}
    unknown = [h for h in header if h not in expected]
    if unknown:
        raise CohortFormatError(f"{path}: unknown column(s) {unknown}")
    absent = sorted((set(registry.names) | {SURGERY_COLUMN}) - set(header))
    if absent:
        raise CohortFormatError(f"{path}: missing column(s) {absent}")
    if len(set(header)) != len(header):
        raise CohortFormatError(f"{path}: duplicate column names in header")
    if not rows:
        raise CohortFormatError(f"{path}: no data rows")

    n = len(rows)
    col = {name: i for i, name in enumerate(header)}
    for lineno, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise CohortFormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(r)}")

    def parse_float(text: str, lineno: int, name: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise CohortFormatError(f"{path}:{lineno}: column {name!r}: cannot parse {text!r}") from None
        if math.isnan(v):
            raise CohortFormatError(f"{path}:{lineno}: column {name!r}: NaN literal; leave the cell empty instead")
        return v

    features, missing = {}, {}
    for spec in registry.specs:
        i = col[spec.name]
        cells = [r[i].strip() for r in rows]
        mask = np.array([c == "" for c in cells])
        if spec.kind == CATEGORICAL:
            for lineno, c in enumerate(cells, start=2):
                if c and c not in spec.levels:
                    raise CohortFormatError(
                        f"{path}:{lineno}: column {spec.name!r}: level {c!r} not in {list(spec.levels)}")
            features[spec.name] = np.array(cells, dtype=object)
        else:
            vals = np.full(n, np.nan)
            for j, c in enumerate(cells):
                if c:
                    vals[j] = parse_float(c, j + 2, spec.name)
                    if spec.kind == BINARY and vals[j] not in (0.0, 1.0):
                        raise CohortFormatError(f"{path}:{j + 2}: column {spec.name!r}: binary value {c!r}")
            features[spec.name] = vals
        missing[spec.name] = mask

    surgery = np.array([r[col[SURGERY_COLUMN]].strip() for r in rows], dtype=object)
    for lineno, s in enumerate(surgery, start=2):
        if s not in registry.surgery_types:
            raise CohortFormatError(f"{path}:{lineno}: unknown surgery label {s!r}")

    outcomes, omissing = {}, {}
    for name in OUTCOME_COLUMNS:
        vals = np.full(n, np.nan)
        mask = np.ones(n, bool)
        if name in col:
            for j, r in enumerate(rows):
                c = r[col[name]].strip()
                if c:
                    vals[j] = parse_float(c, j + 2, name)
                    mask[j] = False
        outcomes[name] = vals
        omissing[name] = mask
    try:
        return Cohort(registry, features, missing, surgery, outcomes, omissing)
    except ValueError as exc:
        raise CohortFormatError(f"{path}: {exc}") from None


def save_cohort(cohort: Cohort, path: str | Path) -> None:
    """Write the cohort as UTF-8 CSV. Floats use repr so reloading is exact."""
    path = Path(path)
    header = [SURGERY_COLUMN] + cohort.registry.names + list(OUTCOME_COLUMNS)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(cohort.n):
            row = [cohort.surgery[i]]
            for spec in cohort.registry.specs:
                if cohort.missing[spec.name][i]:
                    row.append("")
                elif spec.kind == CATEGORICAL:
                    row.append(cohort.features[spec.name][i])
                else:
                    row.append(_format_float(cohort.features[spec.name][i]))
            for name in OUTCOME_COLUMNS:
                row.append("" if cohort.outcome_missing[name][i] else _format_float(cohort.outcomes[name][i]))
            w.writerow(row)


# -- filtering -----------------------------------------------------------------

def filter_complete(cohort: Cohort, variant: DatasetVariant, outcome: Outcome | None = None) -> Cohort:
    """Listwise deletion over the variant's features (and the outcome).

    Rows are dropped modality by modality, in registry category order, and
    the per-modality drop counts are stored in ``Cohort.dropped``.
    """
    rows, dropped = complete_rows(cohort, variant, outcome)
    return cohort.take(rows, dropped=dropped)


def complete_rows(cohort: Cohort, variant: DatasetVariant,
                  outcome: Outcome | None = None) -> tuple[np.ndarray, dict[str, int]]:
    """Indices of rows kept by :func:`filter_complete` and the per-modality drop counts."""
    wanted = set(variant.features.categories)
    keep = np.ones(cohort.n, bool)
    dropped: dict[str, int] = {}
    for category in CATEGORIES:
        if category not in wanted:
            continue
        names = [s.name for s in cohort.registry.by_category(category)]
        bad = keep & cohort.row_missing(names)
        dropped[category] = int(bad.sum())
        keep &= ~bad
    if outcome is not None:
        bad = keep & cohort.outcome_missing[Outcome(outcome).raw_column]
        dropped["outcome"] = int(bad.sum())
        keep &= ~bad
    return np.flatnonzero(keep), dropped


# -- labels --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabelVector:
    """Binary labels plus the input rows they came from.

    ``rows`` are indices into the cohort passed to :func:`binarize_outcome`;
    ``excluded_rows`` are the indices dropped because no class rule applied.
    """

    y: np.ndarray
    outcome: Outcome
    excluded_rows: np.ndarray
    rows: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx: np.ndarray) -> "LabelVector":
        return LabelVector(self.y[idx], self.outcome, np.array([], dtype=np.int64), self.rows[idx])

    @property
    def counts(self) -> tuple[int, int]:
        n1 = int(self.y.sum())
        return len(self.y) - n1, n1


def binarize_outcome(cohort: Cohort, spec: Outcome) -> LabelVector:
    spec = Outcome(spec)
    col = spec.raw_column
    if cohort.outcome_missing[col].any():
        bad = np.flatnonzero(cohort.outcome_missing[col])[:5].tolist()
        raise ValueError(f"outcome {col!r} missing for rows {bad}...; run filter_complete first")
    raw = np.asarray(cohort.outcomes[col], dtype=np.float64)
    keep = np.ones(len(raw), bool)
    if spec is Outcome.LOS:
        if np.any(raw < 0):
            raise ValueError("negative length of stay")
        y = raw >= LOS_SAME_DAY_HOURS
    elif spec is Outcome.CHARGES:
        if np.any(raw < 0):
            raise ValueError("negative hospital charges")
        y = raw >= CHARGES_THRESHOLD
    elif spec is Outcome.MORTALITY:
        if np.any(raw < 0):
            raise ValueError("negative days to death")
        y = raw <= MORTALITY_WINDOW_DAYS
    else:
        none = raw == PAIN_NONE
        some = raw >= PAIN_PRESENT
        keep = none | some
        y = some
    rows = np.flatnonzero(keep)
    return LabelVector(
        y=y[keep].astype(np.int8),
        outcome=spec,
        excluded_rows=np.flatnonzero(~keep),
        rows=rows,
    )


# -- encoding ------------------------------------------------------------------

@dataclass(frozen=True)
class Column:
    source: str
    role: str
    level: str | None = None

    @property
    def name(self) -> str:
        return self.source if self.level is None else f"{self.source}={self.level}"


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    X: np.ndarray
    columns: tuple[Column, ...]
    scaler: dict[str, tuple[float, float]] = field(default_factory=dict)
    unseen: dict[str, int] = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape

    def __len__(self) -> int:
        return self.X.shape[0]

    def take(self, rows) -> "EncodedMatrix":
        return EncodedMatrix(self.X[rows], self.columns, self.scaler, {})

    def to_csv(self, path: str | Path) -> None:
        """Dump values as CSV with a sidecar ``<path>.columns.json`` manifest."""
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names)
            for row in self.X:
                w.writerow([repr(float(v)) for v in row])
        manifest = {
            "columns": [{"name": c.name, "source": c.source, "role": c.role, "level": c.level} for c in self.columns],
            "scaler": {k: list(v) for k, v in self.scaler.items()},
        }
        Path(str(path) + ".columns.json").write_text(json.dumps(manifest, indent=2))


@dataclass(frozen=True)
class Encoder:
    """Fitted encoding state: min-max ranges and categorical level sets."""

    variant: DatasetVariant
    columns: tuple[Column, ...]
    scaler: dict[str, tuple[float, float]]

    @classmethod
    def fit(cls, train: Cohort, variant: DatasetVariant) -> "Encoder":
        reg = train.registry
        names = variant.feature_names(reg)
        columns: list[Column] = []
        scaler: dict[str, tuple[float, float]] = {}
        for name in names:
            spec = reg[name]
            if train.n and train.missing[name].any():
                raise ValueError(f"training cohort has missing values in {name!r}; filter first")
            vals = train.features[name]
            if spec.kind == NUMERIC:
                if train.n:
                    lo, hi = float(np.min(vals)), float(np.max(vals))
                else:
                    lo, hi = 0.0, 0.0
                if hi <= lo:
                    warnings.warn(f"constant numeric column {name!r} on training rows; emitted as zeros",
                                  ConstantColumnWarning, stacklevel=2)
                scaler[name] = (lo, hi)
                columns.append(Column(name, SCALED))
            elif spec.kind == BINARY:
                columns.append(Column(name, PASSTHROUGH))
            else:
                observed = set(vals.tolist())
                columns += [Column(name, ONEHOT, lvl) for lvl in spec.levels if lvl in observed]
        if variant.include_surgery_onehot:
            observed = set(train.surgery.tolist())
            columns += [Column("surgery", ONEHOT, s) for s in reg.surgery_types if s in observed]
        return cls(variant, tuple(columns), scaler)

    def transform(self, cohort: Cohort) -> EncodedMatrix:
        n = cohort.n
        X = np.zeros((n, len(self.columns)))
        unseen: dict[str, int] = {}
        blocks: dict[str, list[int]] = {}
        for j, c in enumerate(self.columns):
            if c.role == ONEHOT:
                blocks.setdefault(c.source, []).append(j)
                continue
            if cohort.missing[c.source].any():
                raise ValueError(f"missing values in {c.source!r}; filter first")
            vals = cohort.features[c.source]
            if c.role == PASSTHROUGH:
                X[:, j] = vals
            else:
                lo, hi = self.scaler[c.source]
                if hi > lo:
                    X[:, j] = np.clip((vals - lo) / (hi - lo), 0.0, 1.0)
        for source, idx in blocks.items():
            if source == "surgery":
                vals = cohort.surgery
            else:
                if cohort.missing[source].any():
                    raise ValueError(f"missing values in {source!r}; filter first")
                vals = cohort.features[source]
            seen = np.zeros(n, bool)
            for j in idx:
                hit = vals == self.columns[j].level
                X[:, j] = hit
                seen |= hit
            if n and not seen.all():
                unseen[source] = int((~seen).sum())
        return EncodedMatrix(X, self.columns, dict(self.scaler), unseen)

    def to_dict(self) -> dict:
        return {
            "variant": {"features": self.variant.features.value, "surgery": self.variant.surgery},
            "columns": [[c.source, c.role, c.level] for c in self.columns],
            "scaler": {k: list(v) for k, v in self.scaler.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        variant = DatasetVariant(d["variant"]["features"], d["variant"]["surgery"])
        cols = tuple(Column(s, r, lvl) for s, r, lvl in d["columns"])
        return cls(variant, cols, {k: (float(a), float(b)) for k, (a, b) in d["scaler"].items()})


def encode(train: Cohort, apply_to: Cohort, variant: DatasetVariant) -> tuple[EncodedMatrix, EncodedMatrix]:
    """Fit scaling and level sets on ``train`` only, then encode both cohorts."""
    enc = Encoder.fit(train, variant)
    return enc.transform(train), enc.transform(apply_to)

