"""Intraoperative correlation matrices, effect-size bands, networks, and disruption flags."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data_model import INTRAOP_NUMERICS, Cohort
from .explain import FeatureImpact
from .svg import Canvas, diverging

HIGH, MODERATE, LOW, NEGLIGIBLE = "high", "moderate", "low", "negligible"
HIGH_CUT, MODERATE_CUT, LOW_CUT = 0.5, 0.3, 0.1
MIN_DIRECTIONALITY = 0.1


@dataclass(frozen=True)
class CorrMatrix:
    variables: tuple[str, ...]
    r: np.ndarray
    n: np.ndarray  # complete rows used per pair

    def __getitem__(self, pair: tuple[str, str]) -> float:
        i, j = self.variables.index(pair[0]), self.variables.index(pair[1])
        return float(self.r[i, j])

    def to_csv(self, path) -> None:
        lines = [",".join(["variable", *self.variables])]
        for v, row in zip(self.variables, self.r):
            lines.append(",".join([v, *(repr(float(x)) for x in row)]))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class CorrBand:
    strength: str
    sign: int  # +1, -1, or 0 for r == 0

    def __str__(self) -> str:
        return self.strength if self.strength == NEGLIGIBLE else f"{self.strength}{'+' if self.sign > 0 else '-'}"


def _columns(data, variables) -> dict[str, np.ndarray]:
    if isinstance(data, Cohort):
        return {v: np.where(data.missing[v], np.nan, data.features[v]).astype(float) for v in variables}
    return {v: np.asarray(data[v], dtype=float) for v in variables}


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Two-pass centred formula."""
    dx, dy = x - x.mean(), y - y.mean()
    return float(np.clip((dx @ dy) / math.sqrt((dx @ dx) * (dy @ dy)), -1.0, 1.0))


def pearson_matrix(data: Cohort | Mapping[str, np.ndarray], variables: Sequence[str] = INTRAOP_NUMERICS) -> CorrMatrix:
    """Pairwise-complete Pearson correlations. NaN marks a missing value."""
    variables = tuple(variables)
    cols = _columns(data, variables)
    k = len(variables)
    r = np.eye(k)
    n = np.zeros((k, k), dtype=np.int64)
    for i, v in enumerate(variables):
        x = cols[v]
        ok = ~np.isnan(x)
        n[i, i] = int(ok.sum())
        if n[i, i] >= 2 and np.ptp(x[ok]) == 0:
            raise ValueError(f"variable {v!r} has zero variance")
    for i in range(k):
        for j in range(i + 1, k):
            x, y = cols[variables[i]], cols[variables[j]]
            ok = ~(np.isnan(x) | np.isnan(y))
            if ok.sum() < 3:
                raise ValueError(f"fewer than 3 complete rows for ({variables[i]}, {variables[j]})")
            xs, ys = x[ok], y[ok]
            if np.ptp(xs) == 0 or np.ptp(ys) == 0:
                raise ValueError(f"zero variance within the complete rows of ({variables[i]}, {variables[j]})")
            r[i, j] = r[j, i] = _pearson(xs, ys)
            n[i, j] = n[j, i] = int(ok.sum())
    return CorrMatrix(variables, r, n)


def categorize(r: float) -> CorrBand:
    """|r| > 0.5 high; 0.3 < |r| <= 0.5 moderate; 0.1 <= |r| <= 0.3 low; below 0.1 negligible."""
    if not -1.0 <= r <= 1.0:
        raise ValueError(f"correlation {r!r} outside [-1, 1]")
    a = abs(r)
    sign = int(np.sign(r))
    if a > HIGH_CUT:
        return CorrBand(HIGH, sign)
    if a > MODERATE_CUT:
        return CorrBand(MODERATE, sign)
    if a >= LOW_CUT:
        return CorrBand(LOW, sign)
    return CorrBand(NEGLIGIBLE, sign)


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    r: float
    band: CorrBand

    @property
    def sign(self) -> int:
        return self.band.sign

    @property
    def style(self) -> str:
        return "solid" if self.sign > 0 else "dotted"

    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class CorrelationNetwork:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]

    def edge(self, a: str, b: str) -> Edge | None:
        k = frozenset((a, b))
        return next((e for e in self.edges if e.key() == k), None)

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes),
                "edges": [{"a": e.a, "b": e.b, "r": e.r, "band": e.band.strength, "sign": e.sign, "style": e.style}
                          for e in self.edges]}


def build_network(m: CorrMatrix) -> CorrelationNetwork:
    edges = []
    for i in range(len(m.variables)):
        for j in range(i + 1, len(m.variables)):
            band = categorize(float(m.r[i, j]))
            if band.strength != NEGLIGIBLE:
                edges.append(Edge(m.variables[i], m.variables[j], float(m.r[i, j]), band))
    return CorrelationNetwork(m.variables, tuple(edges))


@dataclass(frozen=True)
class DisruptionPair:
    a: str
    b: str
    baseline_r: float
    baseline_band: str
    direction_a: float
    direction_b: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DisruptionReport:
    surgery: str
    outcome: str
    pairs: list[DisruptionPair] = field(default_factory=list)

    def flagged(self, a: str, b: str) -> bool:
        return any({p.a, p.b} == {a, b} for p in self.pairs)

    def to_dict(self) -> dict:
        return {"surgery": self.surgery, "outcome": self.outcome, "pairs": [p.to_dict() for p in self.pairs]}


def disruption_report(network: CorrelationNetwork, impacts: Sequence[FeatureImpact], surgery: str = "",
                      outcome: str = "", min_dir: float = MIN_DIRECTIONALITY) -> DisruptionReport:
    """Flag edges whose SHAP-implied joint risk direction opposes the baseline sign.

    With baseline sign ``s`` and directionalities ``dA``, ``dB`` (both with
    magnitude >= ``min_dir``), a pair is flagged iff sign(dA)*sign(dB) == -s.
    """
    direction = {imp.name: imp.directionality for imp in impacts}
    rep = DisruptionReport(surgery, outcome)
    for e in network.edges:
        if e.a not in direction or e.b not in direction:
            continue
        da, db = direction[e.a], direction[e.b]
        if abs(da) < min_dir or abs(db) < min_dir:
            continue
        if np.sign(da) * np.sign(db) == -e.sign:
            rep.pairs.append(DisruptionPair(e.a, e.b, e.r, e.band.strength, da, db))
    return rep


def save_disruptions(reports: Sequence[DisruptionReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)


def heatmap_svg(m: CorrMatrix, path, title: str = "") -> None:
    k = len(m.variables)
    cell, left, top = 48, 150, 150
    W, H = left + cell * k + 20, top + cell * k + 20
    cv = Canvas(W, H, title)
    cv.rect(0, 0, W, H, fill="white")
    if title:
        cv.text(W / 2, 20, title, text_anchor="middle", font_size=13)
    for i, v in enumerate(m.variables):
        cv.text(left - 6, top + cell * i + cell / 2 + 4, v, text_anchor="end")
        x = left + cell * i + cell / 2
        cv.text(x, top - 6, v, text_anchor="start", transform=f"rotate(-60 {x:.1f} {top - 6})")
        for j in range(k):
            r = float(m.r[i, j])
            cv.rect(left + cell * j, top + cell * i, cell, cell, fill=diverging((r + 1) / 2), stroke="white")
            cv.text(left + cell * j + cell / 2, top + cell * i + cell / 2 + 4, f"{r:.2f}",
                    text_anchor="middle", font_size=10)
    cv.save(path)


def network_svg(net: CorrelationNetwork, path, title: str = "") -> None:
    """Circular layout; solid lines for positive and dotted for negative edges,
    line width by band."""
    W = H = 520
    cx, cy, rad = W / 2, H / 2 + 10, 180
    pos = {v: (cx + rad * math.cos(2 * math.pi * i / len(net.nodes) - math.pi / 2),
               cy + rad * math.sin(2 * math.pi * i / len(net.nodes) - math.pi / 2))
           for i, v in enumerate(net.nodes)}
    width = {HIGH: 4.0, MODERATE: 2.5, LOW: 1.2}
    cv = Canvas(W, H, title)
    cv.rect(0, 0, W, H, fill="white")
    if title:
        cv.text(W / 2, 20, title, text_anchor="middle", font_size=13)
    for e in net.edges:
        (x1, y1), (x2, y2) = pos[e.a], pos[e.b]
        kw = {"stroke": "#c82832" if e.sign > 0 else "#2654c4", "stroke_width": width[e.band.strength]}
        if e.sign < 0:
            kw["stroke_dasharray"] = "2,4"
        cv.line(x1, y1, x2, y2, **kw)
    for v, (x, y) in pos.items():
        cv.circle(x, y, 7, fill="#333")
        cv.text(x, y - 12 if y < cy else y + 20, v, text_anchor="middle")
    cv.save(path)
