"""End-to-end experiment runner behind the command-line verbs."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__, kernels
from .data_model import (
    ALL_SURGERIES,
    INTRAOP_NUMERICS,
    SURGERY_TYPES,
    Cohort,
    DatasetVariant,
    FeatureSet,
    Outcome,
    canonical_surgery,
    default_registry,
    select_surgery,
)
from .evalx import METRICS, Candidate, bootstrap_ci, grid_search, select_best, stratified_kfold, train_test_split
from .explain import background_sample, beeswarm_svg, explain_model
from .ingest import Encoder, binarize_outcome, complete_rows, load_cohort
from .models import FAMILIES, fit, make_params, save_model
from .netcorr import build_network, disruption_report, heatmap_svg, network_svg, pearson_matrix
from .synth import GenProfile, default_profile, sample_cohort

SEED_ENV = "PERIAIIMS_SEED"
SURGERY_ORDER = (ALL_SURGERIES,) + SURGERY_TYPES
PERFORMANCE_METRICS = ("auroc", "accuracy", "f1", "precision", "sensitivity", "specificity")
PERFORMANCE_LABELS = ("auc", "accuracy", "f1", "precision", "sensitivity", "specificity")
MORTALITY_SKIP_REASON = "1-year mortality is modeled only on the all-surgeries cohort (too few deaths per surgery group)"

DEFAULT_GRIDS: dict[str, list[dict[str, Any]]] = {
    "logistic": [{"l2_lambda": 1e-4}, {"l2_lambda": 1e-2}, {"l2_lambda": 1.0}],
    "naive_bayes": [{}],
    "tree": [{"max_depth": 3}, {"max_depth": 5}, {"max_depth": 8}],
    "random_forest": [{"n_trees": 30, "max_depth": 8}],
    "ada_boost": [{"n_rounds": 50}, {"n_rounds": 100}],
    "grad_boost": [{"n_rounds": 100, "max_depth": 2, "learning_rate": 0.1},
                   {"n_rounds": 100, "max_depth": 3, "learning_rate": 0.1}],
    "mlp": [{"hidden_width": 16, "epochs": 30}],
}


class ConfigError(ValueError):
    """Invalid run configuration (maps to exit code 2)."""


@dataclass
class RunConfig:
    seed: int = 0
    cohort: str | None = None
    synth_n: int = 5000
    profiles: dict[str, str] = field(default_factory=dict)
    surgeries: list[str] = field(default_factory=lambda: list(SURGERY_ORDER))
    outcomes: list[str] = field(default_factory=lambda: [o.value for o in Outcome])
    variants: list[str] = field(default_factory=lambda: [v.value for v in FeatureSet])
    grids: dict[str, list[dict[str, Any]]] = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_GRIDS)))
    cv_k: int = 5
    bootstrap_B: int = 100
    test_frac: float = 0.2
    shap_rows: int = 300
    shap_samples: int = 128
    background_cap: int = 1000
    top_k: int = 10
    out: str = "runs/latest"
    jobs: int = 1

    def validate(self) -> "RunConfig":
        try:
            self.seed = int(self.seed)
            self.surgeries = [canonical_surgery(s) for s in self.surgeries]
            self.outcomes = [Outcome.parse(o).value for o in self.outcomes]
            self.variants = [FeatureSet.parse(v).value for v in self.variants]
            for fam, grid in self.grids.items():
                if fam not in FAMILIES:
                    raise ValueError(f"unknown model family {fam!r} in grids")
                if not grid:
                    raise ValueError(f"empty grid for {fam}")
                for point in grid:
                    make_params(fam, **point)
            self.profiles = {canonical_surgery(k): v for k, v in self.profiles.items()}
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        for name, lo in (("cv_k", 2), ("bootstrap_B", 1), ("synth_n", 10), ("shap_rows", 1),
                         ("shap_samples", 1), ("background_cap", 1), ("top_k", 1), ("jobs", 1)):
            v = getattr(self, name)
            if not isinstance(v, int) or v < lo:
                raise ConfigError(f"{name} must be an integer >= {lo}, got {v!r}")
        if not 0 < self.test_frac < 1:
            raise ConfigError("test_frac must lie strictly between 0 and 1")
        if not (self.surgeries and self.outcomes and self.variants and self.grids):
            raise ConfigError("surgeries, outcomes, variants and grids must all be non-empty")
        if self.cohort is not None and not Path(self.cohort).is_file():
            raise ConfigError(f"cohort file not found: {self.cohort}")
        for s, p in self.profiles.items():
            if not Path(p).is_file():
                raise ConfigError(f"profile file for {s} not found: {p}")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("jobs")
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def cells(self) -> list[tuple[str, str]]:
        return [(s, o) for s in self.surgeries for o in self.outcomes]


def load_config(path: str | os.PathLike | None, **overrides) -> RunConfig:
    """Read a JSON config (or a run manifest, whose ``config`` entry is used)."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if isinstance(doc, dict) and "config" in doc and "cells" in doc:
            doc = doc["config"]
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            doc["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def derive_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=tuple(keys)).generate_state(1)[0])


# --- cohorts ------------------------------------------------------------------------

_COHORT_CACHE: dict[str, Cohort] = {}


def profile_for(cfg: RunConfig, surgery: str) -> GenProfile:
    if surgery in cfg.profiles:
        return GenProfile.from_json(Path(cfg.profiles[surgery]).read_text())
    return default_profile(surgery, cfg.synth_n, derive_seed(cfg.seed, SURGERY_ORDER.index(surgery), 1000))


def cohort_for(cfg: RunConfig, surgery: str) -> Cohort:
    if cfg.cohort is not None:
        if cfg.cohort not in _COHORT_CACHE:
            _COHORT_CACHE[cfg.cohort] = load_cohort(cfg.cohort, default_registry())
        return select_surgery(_COHORT_CACHE[cfg.cohort], surgery)
    return sample_cohort(profile_for(cfg, surgery))


# --- one (surgery, outcome, variant) --------------------------------------------------

@dataclass
class VariantRun:
    variant: DatasetVariant
    n0: int
    n1: int
    dropped: dict[str, int]
    ids_train: np.ndarray
    ids_test: np.ndarray
    encoder: Encoder
    X_train: Any
    X_test: Any
    y_train: np.ndarray
    y_test: np.ndarray
    families: dict[str, dict[str, Any]]
    candidates: list[Candidate]
    best: Candidate | None


def prepare_variant(cfg: RunConfig, cohort: Cohort, surgery: str, outcome: Outcome, variant_name: str, cell_seed: int):
    variant = DatasetVariant(FeatureSet.parse(variant_name), surgery)
    rows, dropped = complete_rows(cohort, variant, outcome)
    sub = cohort.take(rows)
    lv = binarize_outcome(sub, outcome)
    ids = rows[lv.rows]
    tr, te = train_test_split(lv.y, cfg.test_frac, cell_seed, ids=ids)
    train_c, test_c = sub.take(lv.rows[tr]), sub.take(lv.rows[te])
    enc = Encoder.fit(train_c, variant)
    n0, n1 = lv.counts
    return variant, dropped, n0, n1, ids[tr], ids[te], enc, enc.transform(train_c), enc.transform(test_c), lv.y[tr], lv.y[te]


def run_variant(cfg: RunConfig, cohort: Cohort, surgery: str, outcome: Outcome, variant_name: str, cell_seed: int) -> VariantRun:
    variant, dropped, n0, n1, id_tr, id_te, enc, Xtr, Xte, ytr, yte = prepare_variant(
        cfg, cohort, surgery, outcome, variant_name, cell_seed)
    plan = stratified_kfold(ytr, cfg.cv_k, cell_seed, ids=id_tr)
    families: dict[str, dict[str, Any]] = {}
    cands: list[Candidate] = []
    for fi, fam in enumerate(f for f in FAMILIES if f in cfg.grids):
        fam_seed = derive_seed(cell_seed, fi)
        grid = [make_params(fam, **p) for p in cfg.grids[fam]]
        try:
            gr = grid_search(fam, grid, Xtr, ytr, plan, seed=fam_seed)
            model = fit(fam, Xtr, ytr, gr.best, seed=fam_seed)
            ci = bootstrap_ci(model.predict_proba(Xte), yte, cfg.bootstrap_B, seed=cell_seed)
        except Exception as exc:
            families[fam] = {"status": "failed", "reason": f"{type(exc).__name__}: {exc}"}
            continue
        families[fam] = {
            "status": "ok", "hyperparams": gr.best.to_dict(), "grid_auroc": gr.scores,
            "grid_failures": {str(k): v for k, v in gr.failures.items()},
            "fit_cost": model.complexity, "fit_seconds": model.fit_seconds, "test": ci.to_dict(),
        }
        cands.append(Candidate(fam, variant.features.value, ci, model.complexity, gr.best, model))
    best = select_best(cands) if cands else None
    return VariantRun(variant, n0, n1, dropped, id_tr, id_te, enc, Xtr, Xte, ytr, yte, families, cands, best)


# --- one (surgery, outcome) cell ------------------------------------------------------

def cell_dir(out: Path, surgery: str, outcome: str) -> Path:
    return out / "cells" / f"{surgery}__{outcome}"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run_cell(cfg: RunConfig, surgery: str, outcome_name: str) -> dict[str, Any]:
    outcome = Outcome.parse(outcome_name)
    t0 = time.perf_counter()
    si, oi = SURGERY_ORDER.index(surgery), list(Outcome).index(outcome)
    cell_seed = derive_seed(cfg.seed, si, oi)
    res: dict[str, Any] = {"surgery": surgery, "outcome": outcome.value, "seed": cell_seed}
    if outcome is Outcome.MORTALITY and surgery != ALL_SURGERIES:
        return {**res, "status": "skipped", "reason": MORTALITY_SKIP_REASON, "seconds": 0.0}
    out = cell_dir(Path(cfg.out), surgery, outcome.value)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cohort = cohort_for(cfg, surgery)
        runs = [run_variant(cfg, cohort, surgery, outcome, v, cell_seed) for v in cfg.variants]
        res["variants"] = [{
            "dataset": r.variant.features.value, "n0": r.n0, "n1": r.n1, "dropped": r.dropped,
            "n_train": int(len(r.y_train)), "n_test": int(len(r.y_test)),
            "best_model": None if r.best is None else r.best.family, "families": r.families,
        } for r in runs]
        winners = [r.best for r in runs if r.best is not None]
        if not winners:
            raise RuntimeError("every model family failed on every dataset variant")
        win = select_best(winners)
        wrun = next(r for r in runs if r.best is win)
        res["winner"] = {"dataset": win.variant, "model": win.family}
        model = win.payload
        save_model(model, out / "model.json")
        _atomic_write(out / "encoder.json", json.dumps(wrun.encoder.to_dict()))
        # attributions on a seeded subsample of test rows
        rng = np.random.default_rng(cell_seed)
        n_te = len(wrun.y_test)
        pick = np.sort(rng.choice(n_te, size=min(cfg.shap_rows, n_te), replace=False))
        Xs = wrun.X_test.take(pick)
        bg = background_sample(wrun.X_train, cell_seed, cfg.background_cap)
        shap = explain_model(model, Xs, bg, cfg.shap_samples, cell_seed)
        shap.to_csv(out / "shap.csv")
        title = f"{surgery} / {outcome.value}: {win.family} on {win.variant}"
        impacts = beeswarm_svg(shap, Xs, out / "shap.svg", cfg.top_k, title)
        res["shap"] = {"output_space": shap.output_space, "base_value": shap.base_value, "rows": int(len(pick))}
        res["top_features"] = [dataclasses.asdict(i) for i in impacts]
        net = build_network(pearson_matrix(cohort, INTRAOP_NUMERICS))
        rep = disruption_report(net, impacts, surgery, outcome.value)
        res["disruptions"] = rep.to_dict()["pairs"]
        res["status"] = "ok"
    except Exception as exc:
        res["status"] = "failed"
        res["reason"] = f"{type(exc).__name__}: {exc}"
        res["traceback"] = traceback.format_exc()
    res["seconds"] = time.perf_counter() - t0
    _atomic_write(out / "result.json", json.dumps(res, indent=2, default=_json_default))
    return res


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _cell_job(args):
    cfg_dict, surgery, outcome = args
    return run_cell(RunConfig(**cfg_dict).validate(), surgery, outcome)


# --- correlations ----------------------------------------------------------------------

def write_correlations(cfg: RunConfig, surgery: str, out: Path) -> dict[str, Any]:
    out.mkdir(parents=True, exist_ok=True)
    cohort = cohort_for(cfg, surgery)
    m = pearson_matrix(cohort, INTRAOP_NUMERICS)
    net = build_network(m)
    m.to_csv(out / f"{surgery}_corr.csv")
    heatmap_svg(m, out / f"{surgery}_heatmap.svg", f"{surgery}: intraoperative Pearson r")
    network_svg(net, out / f"{surgery}_network.svg", f"{surgery}: correlation network")
    _atomic_write(out / f"{surgery}_network.json", json.dumps(net.to_dict(), indent=2))
    return net.to_dict()


# --- tables ------------------------------------------------------------------------------

def _num(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and np.isnan(v)) else format(float(v), ".6f")


def metrics_header() -> list[str]:
    cols = ["surgery", "outcome", "dataset", "n0", "n1", "model"]
    for lab in PERFORMANCE_LABELS:
        cols += [lab, f"{lab}_lo95", f"{lab}_hi95"]
    return cols


def metrics_rows(cells: list[dict[str, Any]]) -> list[list[str]]:
    rows = []
    for c in cells:
        if c.get("status") != "ok":
            continue
        for v in c["variants"]:
            fam = v["best_model"]
            if fam is None:
                continue
            test = v["families"][fam]["test"]
            row = [c["surgery"], c["outcome"], v["dataset"], str(v["n0"]), str(v["n1"]), fam]
            for m in PERFORMANCE_METRICS:
                row += [_num(test[m]["point"]), _num(test[m]["lo95"]), _num(test[m]["hi95"])]
            rows.append(row)
    return rows


def winners_rows(cells: list[dict[str, Any]]) -> list[list[str]]:
    rows = []
    for c in cells:
        if c.get("status") != "ok":
            continue
        rows.append([c["surgery"], c["outcome"]] + ["x" if c["winner"]["dataset"] == fs.value else "" for fs in FeatureSet])
    return rows


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def versions() -> dict[str, str]:
    return {"periopml": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernel_backend": kernels.BACKEND}


def run_all(cfg: RunConfig) -> dict[str, Any]:
    """Run every configured cell and write the report bundle. Returns the manifest."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    corr, corr_t = {}, {}
    for s in cfg.surgeries:
        ts = time.perf_counter()
        try:
            corr[s] = write_correlations(cfg, s, out / "corr")
        except Exception as exc:
            corr[s] = {"error": f"{type(exc).__name__}: {exc}"}
        corr_t[s] = time.perf_counter() - ts
    jobs = [(cfg.to_dict(), s, o) for s, o in cfg.cells()]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            cells = list(pool.map(_cell_job, jobs))
    else:
        cells = [run_cell(cfg, s, o) for s, o in cfg.cells()]
    _write_csv(out / "metrics.csv", metrics_header(), metrics_rows(cells))
    _write_csv(out / "variant_winners.csv", ["surgery", "outcome"] + [f.value for f in FeatureSet], winners_rows(cells))
    _atomic_write(out / "metrics.json", json.dumps(
        [{k: c.get(k) for k in ("surgery", "outcome", "status", "reason", "winner", "variants")} for c in cells],
        indent=2, default=_json_default))
    _atomic_write(out / "disruptions.json", json.dumps(
        [{"surgery": c["surgery"], "outcome": c["outcome"], "pairs": c.get("disruptions", [])}
         for c in cells if c.get("status") == "ok"], indent=2, default=_json_default))
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "versions": versions(),
        "cells": [{k: c.get(k) for k in ("surgery", "outcome", "status", "reason", "seed", "seconds")} for c in cells],
        "correlation_seconds": corr_t,
        "total_seconds": time.perf_counter() - t0,
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, default=_json_default))
    render_report(out)
    return manifest


# --- report --------------------------------------------------------------------------------

class ReportError(RuntimeError):
    pass


def render_report(run_dir: str | os.PathLike) -> Path:
    """Markdown summary with the metrics and winner tables and links to figures."""
    run = Path(run_dir)
    mpath = run / "manifest.json"
    if not mpath.is_file():
        raise ReportError(f"no manifest.json in {run}")
    manifest = json.loads(mpath.read_text())
    missing = []
    lines = [f"# Run report", "", f"Seed {manifest['seed']}, config hash `{manifest['config_hash'][:12]}`.", ""]
    metrics_csv, winners_csv = run / "metrics.csv", run / "variant_winners.csv"
    for title, path in (("Test metrics per dataset variant", metrics_csv), ("Winning dataset variant", winners_csv)):
        lines += [f"## {title}", ""]
        if not path.is_file():
            missing.append(path.name)
            lines += ["_missing_", ""]
            continue
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if rows:
            lines.append("| " + " | ".join(rows[0]) + " |")
            lines.append("|" + "---|" * len(rows[0]))
            lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
        lines.append("")
    lines += ["## Cells", "", "| surgery | outcome | status | note | figure |", "|---|---|---|---|---|"]
    for c in manifest["cells"]:
        fig = Path("cells") / f"{c['surgery']}__{c['outcome']}" / "shap.svg"
        if c["status"] == "ok" and not (run / fig).is_file():
            missing.append(str(fig))
        link = f"[SHAP]({fig.as_posix()})" if (run / fig).is_file() else ""
        lines.append(f"| {c['surgery']} | {c['outcome']} | {c['status']} | {c.get('reason') or ''} | {link} |")
    lines += ["", "## Correlation figures", ""]
    for s in manifest["config"]["surgeries"]:
        for kind in ("heatmap", "network"):
            p = Path("corr") / f"{s}_{kind}.svg"
            if (run / p).is_file():
                lines.append(f"- [{s} {kind}]({p.as_posix()})")
            else:
                missing.append(str(p))
    if missing:
        lines += ["", "## Missing artifacts", ""] + [f"- {m}" for m in missing]
    path = run / "report.md"
    _atomic_write(path, "\n".join(lines) + "\n")
    return path
