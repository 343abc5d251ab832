"""Tests for the command-line interface."""

import json

import numpy as np
import pytest

from sparsepanel.cli import main, validate_config


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_validate_empty_config_defaults():
    rc, errors, warnings = validate_config({})
    assert errors == [] and warnings == []
    assert rc.command == "simulate"
    assert rc.model == "m1"
    assert rc.variant == "ss_homosk"
    assert rc.draws == 5000 and rc.burnin == 2500
    assert rc.seed == 0


def test_validate_aggregates_errors():
    rc, errors, _ = validate_config({
        "command": "estimate",
        "model": "m3",
        "draws": 100,
        "burnin": 100,
        "thin": 0,
    })
    assert rc is None
    text = "\n".join(errors)
    assert "model" in text
    assert "burnin" in text and "draws" in text
    assert "thin" in text
    assert "data" in text
    assert len(errors) >= 4


def test_validate_rip_prior_warning():
    rc, errors, warnings = validate_config({
        "command": "simulate", "model": "m2", "variant": "rip", "q_alpha": 0.4,
    })
    assert errors == []
    assert any("ignored" in w for w in warnings)
    assert rc.extra["q_alpha"] == 0.4


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus", "1"])
    assert exc.value.code == 2


def test_validation_failure_exits_2(capsys):
    code, out, err = run_cli(["estimate", "--model", "m1", "--data", "/no/such.csv"], capsys)
    assert code == 2
    assert "does not exist" in err
    assert out == ""


def test_runtime_failure_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("unit,time,y\nu1,0,1.0\nu1,0,2.0\n")
    code, out, err = run_cli(
        ["estimate", "--model", "m1", "--data", str(bad), "--draws", "10",
         "--burnin", "5", "--out", str(tmp_path / "o")], capsys)
    assert code == 1
    assert err.startswith("error:") or "error:" in err


def test_simulate_estimate_round_trip(tmp_path, capsys):
    sim = tmp_path / "sim"
    code, out, err = run_cli(
        ["simulate", "--model", "m1", "--n", "15", "--t", "6", "--seed", "3",
         "--out", str(sim)], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["command"] == "simulate"
    assert (sim / "panel.csv").exists()
    assert (sim / "run_manifest.json").exists()
    chain_dir = tmp_path / "chain"
    code, out, err = run_cli(
        ["estimate", "--model", "m1", "--variant", "ss_homosk",
         "--data", str(sim / "panel.csv"), "--draws", "60", "--burnin", "30",
         "--seed", "5", "--out", str(chain_dir)], capsys)
    assert code == 0
    assert json.loads(out)["kept_draws"] == 30
    assert (chain_dir / "common.csv").exists()
    manifest = json.loads((chain_dir / "run_manifest.json").read_text())
    assert manifest["config"]["seed"] == 5
    assert "numpy" in manifest["versions"]


def test_repeated_runs_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        sim = tmp_path / name
        code, _, _ = run_cli(
            ["simulate", "--model", "m2", "--n", "8", "--t", "5", "--seed", "11",
             "--out", str(sim)], capsys)
        assert code == 0
        outs.append((sim / "panel.csv").read_bytes())
    assert outs[0] == outs[1]


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "m1", "n": 10, "t": 5, "seed": 1}))
    out_dir = tmp_path / "o"
    code, out, _ = run_cli(
        ["simulate", "--config", str(cfg), "--n", "7", "--out", str(out_dir)], capsys)
    assert code == 0
    assert json.loads(out)["n"] == 7  # flag wins over the config file
    text = (out_dir / "panel.csv").read_text()
    units = {line.split(",")[0] for line in text.splitlines()[1:]}
    assert len(units) == 7


def test_threads_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SPARSEPANEL_THREADS", "3")
    out_dir = tmp_path / "o"
    code, _, _ = run_cli(
        ["simulate", "--model", "m1", "--n", "5", "--t", "4", "--out", str(out_dir)], capsys)
    assert code == 0
    manifest = json.loads((out_dir / "run_manifest.json").read_text())
    assert manifest["config"]["threads"] == 3


def test_montecarlo_command(tmp_path, capsys):
    design = tmp_path / "design.json"
    design.write_text(json.dumps({
        "n": 12, "t": 8, "n_sim": 2, "q_grid": [0.4], "v_delta_alpha_grid": [0.5],
        "estimators": ["ss", "q0"],
    }))
    out_dir = tmp_path / "mc"
    code, out, err = run_cli(
        ["montecarlo", "--design", str(design), "--draws", "60", "--burnin", "30",
         "--seed", "2", "--out", str(out_dir)], capsys)
    assert code == 0
    assert (out_dir / "risk_table.csv").exists()
    assert "cell 1/1" in err


def test_forecast_command(tmp_path, capsys):
    sim = tmp_path / "sim"
    run_cli(["simulate", "--model", "m2", "--n", "6", "--t", "5", "--seed", "3",
             "--out", str(sim)], capsys)
    fc = tmp_path / "fc"
    code, out, _ = run_cli(
        ["forecast", "--model", "m2", "--data", str(sim / "panel.csv"),
         "--draws", "60", "--burnin", "30", "--seed", "4", "--horizons", "1,2",
         "--scenario", "full_info_no_param_unc", "--out", str(fc)], capsys)
    assert code == 0
    assert json.loads(out)["horizons"] == [1, 2]
    header = (fc / "fan_chart.csv").read_text().splitlines()[0]
    assert header == "unit,horizon,quantile,value"


def test_decompose_command(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"cohort_size": 300, "cohort_periods": 6,
                               "theta": {"q": {"alpha": 0.0}}}))
    out_dir = tmp_path / "dec"
    code, out, _ = run_cli(
        ["decompose", "--config", str(cfg), "--seed", "1", "--out", str(out_dir)], capsys)
    assert code == 0
    lines = (out_dir / "decomposition.csv").read_text().splitlines()
    assert len(lines) == 7
    # no intercept heterogeneity: the intercept share column is exactly zero
    shares = [float(line.split(",")[4]) for line in lines[1:]]
    assert shares == [0.0] * 6
