import csv
import json

import pytest

from nonclassical import cli


def read_json(path):
    return json.loads(path.read_text())


def test_sample_reproducible_from_manifest(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["sample", "--seed", "42", "--out", str(a)]) == 0
    manifest = read_json(a / "manifest.json")
    assert manifest["seed"] == 42 and "dataset.csv" in manifest["outputs"]
    cfg = tmp_path / "cfg.json"
    manifest["output_path"] = str(b)
    cfg.write_text(json.dumps(manifest))
    assert cli.main(["sample", "--config", str(cfg)]) == 0
    assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()


def test_stochastic_task_needs_seed(tmp_path, capsys):
    assert cli.main(["sample", "--out", str(tmp_path / "x")]) == 2
    assert "seed" in capsys.readouterr().err


def test_schema_errors_report_pointers(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 1, "params": {"m": 0, "bogus": 1}, "model": {"kind": "cat"}}))
    assert cli.main(["sample", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "/params/m" in err and "/model/kind" in err and "bogus" in err


def test_refuses_to_overwrite(tmp_path):
    out = str(tmp_path / "o")
    assert cli.main(["sample", "--seed", "1", "--out", out]) == 0
    assert cli.main(["sample", "--seed", "1", "--out", out]) == 2


def test_joint_sampling(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "model": {"kind": "squeezed_single_photon", "lambda": 2.0},
                               "params": {"mode": "joint", "M": 1000}}))
    assert cli.main(["sample", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader((tmp_path / "o" / "joint.csv").open()))
    assert len(rows) == 1000 and set(rows[0]) == {"theta", "s"}


def test_elementary_task(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "params": {"N": 4, "M": 100000}}))
    assert cli.main(["elementary", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = read_json(tmp_path / "o" / "outcome.json")
    assert out["sampled"]["mean"] < 0 and out["analytic"]["G"] == pytest.approx(-0.13312516, rel=1e-6)
    spec = read_json(tmp_path / "o" / "spec.json")
    assert spec["mode"] == "radial" and len(spec["cuts"]) == 5


def test_elementary_with_saved_dataset(tmp_path):
    assert cli.main(["sample", "--seed", "9", "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["elementary", "--seed", "9", "--out", str(tmp_path / "e")]) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9, "params": {"dataset": str(tmp_path / "s" / "dataset.csv"),
                                                     "spec": str(tmp_path / "e" / "spec.json")}}))
    assert cli.main(["elementary", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 0
    assert read_json(tmp_path / "f" / "outcome.json")["sampled"]["M"] == 50000


def test_optimize_task(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"N_min": 2, "N_max": 6, "profile_N": 4, "points": 11}}))
    assert cli.main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader((tmp_path / "o" / "G_curve.csv").open()))
    assert [int(r["N"]) for r in rows] == [2, 3, 4, 5, 6]
    assert float(rows[2]["G"]) < 0 < float(rows[1]["G"])
    assert len(list(csv.DictReader((tmp_path / "o" / "profile_r.csv").open()))) == 11


def test_backproject_task(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 2, "params": {"M": 200000, "epsilon": 1e-4}}))
    assert cli.main(["backproject", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    res = read_json(tmp_path / "o" / "result.json")
    assert abs(res["mean"] - res["oracle"]) < 4 * res["variance"] ** 0.5 + res["delta_bound"]


def test_finite_cuts_task(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"lambdas": [1.0, 5.0], "ms": [4, 12], "M": 1000}}))
    assert cli.main(["finite-cuts", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader((tmp_path / "o" / "finite_cut_error.csv").open()))
    assert float(rows[0]["E"]) == 0.0 and float(rows[3]["E"]) <= 0.03
    plans = read_json(tmp_path / "o" / "plans.json")
    assert sum(plans["lambda=5,m=12"]["counts"]) == 1000


def test_finite_cuts_rejects_odd_m(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"ms": [5]}}))
    assert cli.main(["finite-cuts", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_compare_task(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"Ms": [1000000], "N": 8}}))
    assert cli.main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    row = next(csv.DictReader((tmp_path / "o" / "R_curve.csv").open()))
    assert float(row["R"]) > 1 and row["valid"] == "true"


def test_verify_task(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"checks": ["u integrals", "measurement allocation"]}}))
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert [r["passed"] for r in read_json(tmp_path / "o" / "verify.json")] == [True, True]
    cfg.write_text(json.dumps({"params": {"checks": ["no such check"]}}))
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 2


def test_config_task_mismatch(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": "optimize"}))
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_nonconvergence_exit_code(tmp_path, monkeypatch):
    from nonclassical.errors import NonConvergence

    def boom(*a, **k):
        raise NonConvergence("stalled")
    monkeypatch.setattr(cli.el, "optimize_radial", boom)
    assert cli.main(["optimize", "--out", str(tmp_path / "o")]) == 3
