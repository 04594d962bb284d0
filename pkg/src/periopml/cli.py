"""Command-line entry point: ``periopml <verb> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data_model import ALL_SURGERIES, Outcome, canonical_surgery
from .evalx import bootstrap_ci
from .explain import background_sample, beeswarm_svg, explain_model
from .ingest import save_cohort
from .models import load_model
from .pipeline import (
    ConfigError,
    ReportError,
    RunConfig,
    SURGERY_ORDER,
    _atomic_write,
    _json_default,
    cohort_for,
    derive_seed,
    load_config,
    metrics_header,
    metrics_rows,
    prepare_variant,
    profile_for,
    render_report,
    run_all,
    run_variant,
    write_correlations,
    _write_csv,
)
from .models import save_model

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3


def _split(values: list[str] | None) -> list[str] | None:
    if not values:
        return None
    return [v.strip() for item in values for v in item.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (a run manifest also works)")
    common.add_argument("--seed", type=int, help="master seed (the PERIAIIMS_SEED variable overrides the config value)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes for independent cells")
    common.add_argument("--surgery", action="append", help="surgery group(s); repeat or comma-separate")
    common.add_argument("--outcome", action="append", help="outcome(s): LOS, Charges, AvgPain, Mortality1y")
    common.add_argument("--variant", action="append", help="dataset variant(s): IntraOp, PeriOp, PeriOpCognitive")

    p = argparse.ArgumentParser(prog="periopml", description="Perioperative outcome modeling pipeline.")
    sub = p.add_subparsers(dest="verb", required=True)
    s = sub.add_parser("synth", parents=[common], help="write a synthetic cohort CSV and its profile")
    s.add_argument("--n", type=int, help="rows to generate (default: config synth_n)")
    sub.add_parser("train", parents=[common], help="grid-search and fit all families for one dataset variant")
    sub.add_parser("evaluate", parents=[common], help="test metrics with bootstrap intervals for a trained model")
    sub.add_parser("explain", parents=[common], help="SHAP values and beeswarm plot for a trained model")
    sub.add_parser("corr", parents=[common], help="correlation matrices, heatmaps and networks")
    sub.add_parser("report", parents=[common], help="render report.md for a run directory")
    sub.add_parser("run-all", parents=[common], help="full pipeline over every configured cell")
    return p


def _config(args, **extra) -> RunConfig:
    return load_config(
        args.config, seed=args.seed, out=args.out, jobs=args.jobs,
        surgeries=_split(args.surgery), outcomes=_split(args.outcome), variants=_split(args.variant), **extra,
    )


def _single(cfg: RunConfig) -> tuple[str, Outcome, str]:
    if len(cfg.surgeries) != 1 or len(cfg.outcomes) != 1 or len(cfg.variants) != 1:
        raise ConfigError("this verb needs exactly one --surgery, one --outcome and one --variant")
    s, o, v = cfg.surgeries[0], Outcome.parse(cfg.outcomes[0]), cfg.variants[0]
    if o is Outcome.MORTALITY and s != ALL_SURGERIES:
        raise ConfigError("Mortality1y is only modeled for AllSurgeries")
    return s, o, v


def cmd_synth(args) -> int:
    cfg = _config(args, synth_n=args.n)
    if cfg.cohort is not None:
        raise ConfigError("synth generates cohorts; drop 'cohort' from the config")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for s in cfg.surgeries:
        prof = profile_for(cfg, s)
        save_cohort(cohort_for(cfg, s), out / f"{s}.csv")
        _atomic_write(out / f"{s}.profile.json", prof.to_json())
        print(f"wrote {out / (s + '.csv')} ({prof.n} rows)")
    return EXIT_OK


def _train_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out)


def _cell_seed(cfg: RunConfig, s: str, o: Outcome) -> int:
    return derive_seed(cfg.seed, SURGERY_ORDER.index(s), list(Outcome).index(o))


def cmd_train(args) -> int:
    cfg = _config(args)
    s, o, v = _single(cfg)
    out = _train_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    run = run_variant(cfg, cohort_for(cfg, s), s, o, v, _cell_seed(cfg, s, o))
    _atomic_write(out / "config.json", json.dumps(cfg.to_dict(), indent=2))
    summary = {"surgery": s, "outcome": o.value, "dataset": v, "n0": run.n0, "n1": run.n1,
               "families": {f: {k: d.get(k) for k in ("status", "reason", "hyperparams", "grid_auroc", "fit_cost")}
                            for f, d in run.families.items()},
               "best_model": None if run.best is None else run.best.family}
    _atomic_write(out / "train.json", json.dumps(summary, indent=2, default=_json_default))
    if run.best is None:
        print("every model family failed", file=sys.stderr)
        return EXIT_PARTIAL
    save_model(run.best.payload, out / "model.json")
    _atomic_write(out / "encoder.json", json.dumps(run.encoder.to_dict()))
    print(f"best model: {run.best.family} (test AUROC {run.best.ci.point.auroc:.4f}); saved to {out / 'model.json'}")
    return EXIT_PARTIAL if any(d["status"] != "ok" for d in run.families.values()) else EXIT_OK


def _load_trained(args):
    out = Path(args.out or "runs/latest")
    cfg_path = out / "config.json"
    if not cfg_path.is_file() or not (out / "model.json").is_file():
        raise ConfigError(f"{out} does not hold a trained model (run 'train' first)")
    args.config = str(cfg_path) if args.config is None else args.config
    cfg = _config(args)
    s, o, v = _single(cfg)
    model = load_model(out / "model.json")
    prep = prepare_variant(cfg, cohort_for(cfg, s), s, o, v, _cell_seed(cfg, s, o))
    return cfg, out, (s, o, v), model, prep


def cmd_evaluate(args) -> int:
    cfg, out, (s, o, v), model, prep = _load_trained(args)
    _, _, n0, n1, _, _, _, _, Xte, _, yte = prep
    ci = bootstrap_ci(model.predict_proba(Xte), yte, cfg.bootstrap_B, seed=_cell_seed(cfg, s, o), jobs=cfg.jobs)
    _atomic_write(out / "evaluation.json", json.dumps(ci.to_dict(), indent=2))
    cell = {"status": "ok", "surgery": s, "outcome": o.value,
            "variants": [{"dataset": v, "n0": n0, "n1": n1, "best_model": model.family,
                          "families": {model.family: {"test": ci.to_dict()}}}]}
    _write_csv(out / "metrics.csv", metrics_header(), metrics_rows([cell]))
    print(f"AUROC {ci.point.auroc:.4f} [{ci.lo95.auroc:.4f}, {ci.hi95.auroc:.4f}]")
    return EXIT_OK


def cmd_explain(args) -> int:
    cfg, out, (s, o, v), model, prep = _load_trained(args)
    seed = _cell_seed(cfg, s, o)
    Xtr, Xte = prep[7], prep[8]
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(Xte), size=min(cfg.shap_rows, len(Xte)), replace=False))
    Xs = Xte.take(pick)
    shap = explain_model(model, Xs, background_sample(Xtr, seed, cfg.background_cap), cfg.shap_samples, seed)
    shap.to_csv(out / "shap.csv")
    impacts = beeswarm_svg(shap, Xs, out / "shap.svg", cfg.top_k, f"{s} / {o.value}: {model.family} on {v}")
    _atomic_write(out / "impacts.json", json.dumps([i.__dict__ for i in impacts], indent=2))
    for i in impacts:
        print(f"{i.rank:2d}. {i.name:<28s} mean|phi|={i.mean_abs:.4f} direction={i.directionality:+.2f}")
    return EXIT_OK


def cmd_corr(args) -> int:
    cfg = _config(args)
    failed = 0
    for s in cfg.surgeries:
        try:
            net = write_correlations(cfg, s, Path(cfg.out))
            print(f"{s}: {len(net['edges'])} non-negligible edges")
        except ValueError as exc:
            failed += 1
            print(f"{s}: {exc}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.out or "runs/latest")
    try:
        path = render_report(run)
    except ReportError as exc:
        raise ConfigError(str(exc)) from None
    print(f"wrote {path}")
    return EXIT_OK


def cmd_run_all(args) -> int:
    cfg = _config(args)
    manifest = run_all(cfg)
    failed = [c for c in manifest["cells"] if c["status"] == "failed"]
    for c in manifest["cells"]:
        print(f"{c['surgery']:<16s} {c['outcome']:<12s} {c['status']:<8s} {c.get('reason') or ''}")
    return EXIT_PARTIAL if failed else EXIT_OK


VERBS = {"synth": cmd_synth, "train": cmd_train, "evaluate": cmd_evaluate, "explain": cmd_explain,
         "corr": cmd_corr, "report": cmd_report, "run-all": cmd_run_all}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return VERBS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
