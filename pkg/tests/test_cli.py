import json
import os

import numpy as np
import pytest

from stableadv.cli import main


def run(args):
    return main(args)


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


TOY_PARAMS = json.dumps({"n_major": 60, "n_minor": 20, "test_alphas": [-1.0, 1.0], "n_test": 30})


def gen_toy_dir(tmp_path, name="data", seed=7):
    out = tmp_path / name
    rc = run(["generate", "--regime", "toy", "--params", TOY_PARAMS, "--seed", str(seed), "--out", str(out)])
    assert rc == 0
    return out


def test_generate_outputs_and_determinism(tmp_path):
    d1 = gen_toy_dir(tmp_path, "a")
    d2 = gen_toy_dir(tmp_path, "b")
    for name in ("train.csv", "test.csv", "meta.json"):
        assert read_bytes(d1 / name) == read_bytes(d2 / name)
    meta = json.loads((d1 / "meta.json").read_text())
    assert meta["ground_truth"]["stable_dims"] == [0]
    first = (d1 / "train.csv").read_text().splitlines()
    assert first[0].startswith("#")  # provenance header
    assert any(line.startswith("env,y,x1") for line in first[:5])


def test_generate_different_seed_differs(tmp_path):
    d1 = gen_toy_dir(tmp_path, "a", seed=1)
    d2 = gen_toy_dir(tmp_path, "b", seed=2)
    assert read_bytes(d1 / "train.csv") != read_bytes(d2 / "train.csv")


def test_train_evaluate_pipeline(tmp_path):
    data = gen_toy_dir(tmp_path)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"loss": "squared", "iters": 200, "step_size": 0.05}))
    model_path = tmp_path / "model.json"
    rc = run(["train", "--method", "erm", "--data", str(data), "--config", str(cfg),
              "--seed", "3", "--out", str(model_path)])
    assert rc == 0
    doc = json.loads(model_path.read_text())
    assert set(doc) >= {"theta", "intercept", "w", "config", "history", "provenance"}
    assert doc["w"] == [1.0, 1.0]
    report = tmp_path / "report.csv"
    rc = run(["evaluate", "--model", str(model_path), "--data", str(data),
              "--metric", "loss", "--out", str(report)])
    assert rc == 0
    text = report.read_text()
    assert "summary,mean_error" in text
    assert "per_env," in text


def test_train_determinism_byte_identical(tmp_path):
    data = gen_toy_dir(tmp_path)
    outs = []
    for name in ("m1.json", "m2.json"):
        path = tmp_path / name
        rc = run(["train", "--method", "wdrl", "--data", str(data), "--seed", "5",
                  "--config", "/dev/null" if False else str(_wcfg(tmp_path)), "--out", str(path)])
        assert rc == 0
        outs.append(read_bytes(path))
    assert outs[0] == outs[1]


def _wcfg(tmp_path):
    p = tmp_path / "wdrl.json"
    p.write_text(json.dumps({"loss": "squared", "iters": 60, "step_size": 0.05, "reg_lambda": 5.0}))
    return p


def test_wdrl_huge_lambda_matches_erm_end_to_end(tmp_path):
    data = gen_toy_dir(tmp_path)
    erm_cfg = tmp_path / "e.json"
    erm_cfg.write_text(json.dumps({"iters": 300, "step_size": 0.05}))
    wdrl_cfg = tmp_path / "w.json"
    wdrl_cfg.write_text(json.dumps({"iters": 300, "step_size": 0.05, "reg_lambda": 1e6}))
    for method, cfg, out in (("erm", erm_cfg, "e.jsonm"), ("wdrl", wdrl_cfg, "w.jsonm")):
        rc = run(["train", "--method", method, "--data", str(data), "--config", str(cfg),
                  "--seed", "1", "--out", str(tmp_path / out)])
        assert rc == 0
    reports = {}
    for out in ("e.jsonm", "w.jsonm"):
        rep = tmp_path / (out + ".csv")
        rc = run(["evaluate", "--model", str(tmp_path / out), "--data", str(data),
                  "--metric", "loss", "--out", str(rep)])
        assert rc == 0
        for line in rep.read_text().splitlines():
            if line.startswith("summary,mean_error"):
                reports[out] = float(line.split(",")[2])
    assert reports["e.jsonm"] == pytest.approx(reports["w.jsonm"], abs=1e-3)


def test_exit_codes(tmp_path, capsys):
    assert run(["train", "--method", "nonsense", "--data", "x", "--out", "y"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("ERROR kind=usage")
    # missing data dir -> data error
    assert run(["train", "--method", "erm", "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "m.json")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("ERROR kind=data")
    # malformed csv -> data error with line number
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "train.csv").write_text("env,y,x1\n1,a,b\n")
    assert run(["train", "--method", "erm", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == 2
    capsys.readouterr()
    # divergent training -> numeric error
    data = gen_toy_dir(tmp_path)
    cfg = tmp_path / "diverge.json"
    cfg.write_text(json.dumps({"iters": 400, "step_size": 80.0}))
    rc = run(["train", "--method", "erm", "--data", str(data), "--config", str(cfg),
              "--out", str(tmp_path / "m.json")])
    assert rc == 3
    err = capsys.readouterr().err
    assert err.startswith("ERROR kind=numeric")


def test_verify_ot_smoke(capsys):
    rc = run(["verify-ot", "--trials", "25", "--seed", "5"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "containment[sq_l2]: pass" in out
    assert "containment[l1]: pass" in out
    assert "duality: pass" in out


def test_check_grad_smoke(tmp_path, capsys):
    # tiny config keeps the diagnostic fast; the full setting runs in acceptance
    out = tmp_path / "d"
    rc = run(["generate", "--regime", "selection-bias",
              "--params", json.dumps({"r": [1.7], "kappa": 0.9, "n": 200, "n_test": 50, "test_rates": [1.5]}),
              "--seed", "3", "--out", str(out)])
    assert rc == 0
    cfg = tmp_path / "cg.json"
    cfg.write_text(json.dumps({"outer_iters": 2, "theta_iters": 10, "ascent_steps": 3,
                               "lam": 4.0, "eps_w": 0.05, "warmup_iters": 1}))
    rc = run(["check-grad", "--data", str(out), "--config", str(cfg), "--trials", "20", "--seed", "2"])
    assert rc == 0
    assert "gradient_accuracy fraction=" in capsys.readouterr().out


def test_benchmark_toy_sweep_writes_coefficients(tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"lambdas": [1.0, 0.5]}))
    out = tmp_path / "res"
    rc = run(["benchmark", "--table", "toy-sweep", "--config", str(cfg), "--seed", "4", "--out", str(out)])
    assert rc == 0
    text = (out / "coefficients.csv").read_text()
    assert "knob_index,lambda,method" in text
    assert ",erm," in text and ",sal," in text and ",wdrl," in text


def test_benchmark_determinism(tmp_path):
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"repeats": 1, "n": 200, "n_test": 60, "methods": ["erm"]}))
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        rc = run(["benchmark", "--table", "selection-bias", "--config", str(cfg),
                  "--seed", "6", "--out", str(out)])
        assert rc == 0
        outs.append(read_bytes(out / "results.csv"))
    assert outs[0] == outs[1]
