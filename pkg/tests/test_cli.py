import csv
import json
import subprocess
import sys

import pytest

from periopml.cli import main

SMALL = {
    "synth_n": 500,
    "cv_k": 3,
    "bootstrap_B": 20,
    "shap_rows": 30,
    "shap_samples": 16,
    "background_cap": 100,
    "grids": {
        "logistic": [{}],
        "tree": [{"max_depth": 3}],
        "grad_boost": [{"n_rounds": 15, "max_depth": 2}],
    },
}


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def test_synth_writes_rows_deterministically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["synth", "--surgery", "AllSurgeries", "--n", "1000", "--seed", "5", "--out", str(d)]) == 0
    rows = (a / "AllSurgeries.csv").read_text().splitlines()
    assert len(rows) == 1001
    assert (a / "AllSurgeries.csv").read_bytes() == (b / "AllSurgeries.csv").read_bytes()
    assert json.loads((a / "AllSurgeries.profile.json").read_text())["n"] == 1000


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["synth", "--surgery", "Podiatry", "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["report", "--out", str(tmp_path / "empty")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"folds": 3}')
    assert main(["run-all", "--config", str(bad)]) == 2
    assert main(["train", "--surgery", "Orthopedics", "--outcome", "Mortality1y",
                 "--variant", "PeriOp", "--out", str(tmp_path / "t")]) == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_env_seed_overrides_config(tmp_path, monkeypatch, small_config):
    monkeypatch.setenv("PERIAIIMS_SEED", "9")
    from periopml.pipeline import load_config
    assert load_config(small_config).seed == 9
    assert load_config(small_config, seed=4).seed == 4  # explicit flag still wins
    monkeypatch.setenv("PERIAIIMS_SEED", "nine")
    assert main(["synth", "--config", small_config, "--out", str(tmp_path)]) == 2


def _run_all(cfg, out, *extra):
    return main(["run-all", "--config", cfg, "--out", str(out), *extra])


def test_run_all_cardinality_and_determinism(tmp_path, small_config):
    args = ("--surgery", "AllSurgeries", "--outcome", "LOS", "--seed", "1")
    assert _run_all(small_config, tmp_path / "r1", *args) == 0
    assert _run_all(small_config, tmp_path / "r2", *args) == 0
    m1 = (tmp_path / "r1" / "metrics.csv").read_text()
    assert m1 == (tmp_path / "r2" / "metrics.csv").read_text()
    rows = list(csv.DictReader(m1.splitlines()))
    assert {r["dataset"] for r in rows} == {"IntraOp", "PeriOp", "PeriOpCognitive"}
    assert len({(r["surgery"], r["outcome"], r["dataset"]) for r in rows}) == 3
    winners = list(csv.reader((tmp_path / "r1" / "variant_winners.csv").read_text().splitlines()))
    assert len(winners) == 2
    manifest = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 1
    assert (tmp_path / "r1" / "disruptions.json").is_file()
    # the manifest is itself a config
    assert _run_all(str(tmp_path / "r1" / "manifest.json"), tmp_path / "r3") == 0
    assert (tmp_path / "r3" / "metrics.csv").read_text() == m1


def test_mortality_single_surgery_skipped(tmp_path, small_config, capsys):
    out = tmp_path / "r"
    code = _run_all(small_config, out, "--surgery", "Orthopedics", "--outcome", "Mortality1y", "--variant", "IntraOp")
    assert code == 0
    cells = json.loads((out / "manifest.json").read_text())["cells"]
    assert [c["status"] for c in cells] == ["skipped"]
    assert "all-surgeries" in cells[0]["reason"]
    assert main(["report", "--out", str(out)]) == 0
    assert "skipped" in (out / "report.md").read_text()


def test_train_evaluate_explain_corr(tmp_path, small_config):
    out = str(tmp_path / "t")
    sel = ["--config", small_config, "--surgery", "AllSurgeries", "--outcome", "LOS", "--variant", "PeriOp", "--out", out]
    assert main(["train", *sel]) == 0
    assert main(["evaluate", "--out", out]) == 0
    ev = json.loads((tmp_path / "t" / "evaluation.json").read_text())
    assert ev["B"] == 20 and ev["auroc"]["lo95"] <= ev["auroc"]["hi95"]
    assert main(["explain", "--out", out]) == 0
    assert (tmp_path / "t" / "shap.svg").is_file()
    assert len(json.loads((tmp_path / "t" / "impacts.json").read_text())) == 10
    assert main(["corr", "--config", small_config, "--surgery", "Urology", "--out", out]) == 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "periopml", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for verb in ("synth", "train", "evaluate", "explain", "corr", "report", "run-all"):
        assert verb in r.stdout
