import json
import subprocess
import sys

import numpy as np
import pytest

from etdkit import io
from etdkit.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, main

SH_SMALL = {"kind": "swift_hohenberg", "nx": 16, "ny": 16, "lx": 31.41592653589793,
            "ly": 31.41592653589793, "amplitude": 0.5}


def run(tmp_path, cfg, command, name="cfg.json", extra=()):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2) if isinstance(cfg, dict) else cfg)
    out = tmp_path / f"out-{command}"
    return main([command, "--config", str(path), "--out", str(out), *extra]), out


def test_simulate_writes_snapshots(tmp_path):
    code, out = run(tmp_path, {"model": SH_SMALL, "simulate": {"T": 1.0, "tau": 0.1, "snapshot_every": 0.5}},
                    "simulate", extra=("--threads", "1"))
    assert code == EXIT_OK
    trace = json.loads((out / "trace.json").read_text())
    assert [s["step"] for s in trace["snapshots"]] == [0, 5, 10]
    assert trace["max_imag_residue"] <= 1e-10
    field, meta = io.read_field(out / "snapshots" / "y_000010.bin")
    final, _ = io.read_field(out / "final.bin")
    assert field.shape == (16, 16) and np.array_equal(field, final) and meta["time"] == 1.0
    assert io.read_pgm(out / "final.pgm").shape == (16, 16)


@pytest.mark.parametrize("mode", ["fixed_L", "rosenbrock"])
def test_check_passes_on_toy_problem(tmp_path, mode):
    code, out = run(tmp_path, {"model": {"kind": "toy"}, "mode": mode, "check": {"steps": 5}}, "check")
    report = json.loads((out / "check.json").read_text())
    assert code == EXIT_OK and report["passed"]
    assert max(report["dot_identity"]["errors"]) <= 1e-10


def test_perturbed_tableau_fails_check(tmp_path):
    cfg = {"model": {"kind": "toy"}, "scheme": "cm", "check": {"steps": 3, "perturb": {"stage": 1, "delta": 1e-3}}}
    code, out = run(tmp_path, cfg, "check")
    report = json.loads((out / "check.json").read_text())
    assert code == EXIT_CHECK_FAILED
    assert not report["tableau"]["passed"] and report["tableau"]["max_error"] > 1e-4


def test_order_study_is_deterministic(tmp_path):
    cfg = {"model": SH_SMALL, "order_study": {"schemes": ["euler", "krogstad"], "tau": 0.1, "T": 1.6,
                                              "seeds": [0, 1], "obs_every": 0.8}}
    code1, out1 = run(tmp_path, cfg, "order-study")
    (tmp_path / "first.csv").write_bytes((out1 / "order_study.csv").read_bytes())
    code2, out2 = run(tmp_path, cfg, "order-study")
    assert code1 == code2 == EXIT_OK
    assert (tmp_path / "first.csv").read_bytes() == (out2 / "order_study.csv").read_bytes()
    header, rows = io.read_csv(out2 / "order_study.csv")
    assert header == ["scheme", "quantity", "pair", "p"]
    assert {r[0] for r in rows} == {"euler", "krogstad"}


def test_estimate_small_run(tmp_path):
    cfg = {"model": SH_SMALL, "estimate": {"T": 1.0, "tau": 0.25, "max_iters": 3,
                                           "observations": {"every": 0.5, "until": 1.0}}}
    code, out = run(tmp_path, cfg, "estimate")
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_objective"] <= summary["initial_objective"]
    header, rows = io.read_csv(out / "iterations.csv")
    assert header[0] == "iter" and len(rows) == summary["iterations"] + 1
    r, meta = io.read_field(out / "r_recovered.bin")
    assert r.shape == (16, 16) and meta["parameter"] == "r"


@pytest.mark.parametrize("cfg,fragment", [
    ({"model": {"kind": "toy"}, "scheme": "rk4"}, "scheme"),
    ({"model": {"kind": "toy"}, "check": {"stepz": 3}}, "stepz"),
    ({"model": {"kind": "swift_hohenberg", "nx": 24}}, "power"),
    ({"model": {"kind": "swift_hohenberg", "nx": 128, "ny": 64}, "mode": "rosenbrock"}, "dense"),
])
def test_configuration_errors(tmp_path, capsys, cfg, fragment):
    code, _ = run(tmp_path, cfg, "check")
    assert code == EXIT_CONFIG
    assert fragment in capsys.readouterr().err


def test_error_messages_carry_line_numbers(tmp_path, capsys):
    text = '{\n  "model": {"kind": "toy"},\n  "check": {\n    "steps": -1\n  }\n}\n'
    code, _ = run(tmp_path, text, "check")
    assert code == EXIT_CONFIG and ":4:" in capsys.readouterr().err
    code, _ = run(tmp_path, '{\n  "model": ,\n}', "check")
    assert code == EXIT_CONFIG and ":2:" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["bogus"]) == EXIT_CONFIG
    cfg = tmp_path / "c.json"
    cfg.write_text('{"model": {"kind": "toy"}}')
    assert main(["check", "--config", str(cfg), "--threads", "0"]) == EXIT_CONFIG


def test_estimate_needs_swift_hohenberg(tmp_path):
    code, _ = run(tmp_path, {"model": {"kind": "toy"}}, "estimate")
    assert code == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"kind": "toy"}, "check": {"steps": 2}}))
    proc = subprocess.run([sys.executable, "-m", "etdkit.cli", "check", "--config", str(cfg),
                           "--out", str(tmp_path / "o"), "--threads", "1"], capture_output=True)
    assert proc.returncode == 0, proc.stderr
