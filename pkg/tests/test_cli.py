"""Command-line surface: exit codes, config files, artifacts."""

import csv
import json
import os
import subprocess
import sys

import pytest

from lockstep.cli import main


def _run(tmp_path, *extra):
    return main(["run", "--out", str(tmp_path), *extra])


def test_run_recovers_and_exits_zero(tmp_path):
    assert _run(tmp_path, "--strategy", "multi-ckpt", "--scenario", "50") == 0
    with open(tmp_path / "result.json") as f:
        doc = json.load(f)
    assert doc["outcome"] == "RECOVERED"
    assert doc["restarts"] == 2
    assert doc["recovery_point"] == "CK2"


def test_run_detect_halts_with_exit_two(tmp_path):
    assert _run(tmp_path, "--strategy", "detect", "--scenario", "59") == 2
    with open(tmp_path / "result.json") as f:
        doc = json.load(f)
    assert doc["outcome"] == "HALTED_ON_DETECTION"
    assert doc["events"][0]["kind"] == "TOE_TIMEOUT"
    assert doc["events"][0]["stage"] == "GATHER"


def test_run_fault_free_jacobi(tmp_path):
    assert _run(tmp_path, "--app", "jacobi", "--size", "16", "--iters", "8", "--strategy", "detect") == 0
    with open(tmp_path / "result.json") as f:
        doc = json.load(f)
    assert doc["outcome"] == "COMPLETED_VALID"
    assert doc["events"] == []


def test_baseline_dual_runs_unprotected(tmp_path):
    assert _run(tmp_path, "--strategy", "baseline-dual", "--size", "32") == 0
    with open(tmp_path / "result.json") as f:
        doc = json.load(f)
    assert doc["strategy"] == "baseline-dual"
    assert doc["outcome"] == "COMPLETED_VALID"
    digests = doc["result_digests"]
    assert digests and len(set(digests.values())) == 1


def test_baseline_dual_rejects_fault_injection(tmp_path):
    assert _run(tmp_path, "--strategy", "baseline-dual", "--scenario", "3") == 65


def test_scenario_requires_matmul(tmp_path):
    assert _run(tmp_path, "--app", "jacobi", "--scenario", "5") == 65
    assert _run(tmp_path, "--scenario", "99") == 65


def test_rewind_scenarios_refuse_threaded_mode(tmp_path):
    assert _run(tmp_path, "--mode", "threaded", "--scenario", "59") == 65


def test_usage_errors_exit_64(capsys):
    assert main([]) == 64
    assert main(["frobnicate"]) == 64
    assert main(["run", "--strategy", "nope"]) == 64
    capsys.readouterr()


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"strategy": "detect", "scenario": 41}))
    out = tmp_path / "run"
    # flags say recover; the file wins and the run halts instead
    code = main(
        ["run", "--out", str(out), "--strategy", "multi-ckpt", "--config", str(cfg)]
    )
    assert code == 2


def test_config_file_schema_violations(tmp_path):
    bad_key = tmp_path / "k.json"
    bad_key.write_text(json.dumps({"sizes": 64}))
    assert main(["run", "--out", str(tmp_path / "a"), "--config", str(bad_key)]) == 65

    bad_type = tmp_path / "t.json"
    bad_type.write_text(json.dumps({"size": "large"}))
    assert main(["run", "--out", str(tmp_path / "b"), "--config", str(bad_type)]) == 65

    not_obj = tmp_path / "o.json"
    not_obj.write_text("[1, 2]")
    assert main(["run", "--out", str(tmp_path / "c"), "--config", str(not_obj)]) == 65


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LOCKSTEP_OUT", str(tmp_path / "envdir"))
    assert main(["run", "--app", "matmul", "--size", "32", "--strategy", "detect"]) == 0
    assert (tmp_path / "envdir" / "result.json").exists()


def test_model_writes_tables_and_comparison(tmp_path):
    assert main(["model", "--out", str(tmp_path)]) == 0
    for name in ("overhead.csv", "rollback.csv", "thresholds.csv", "aet.csv", "comparison.csv"):
        assert (tmp_path / name).exists(), name
    with open(tmp_path / "rollback.csv") as f:
        rows = list(csv.reader(f))
    assert any("NA" in row for row in rows)
    with open(tmp_path / "comparison.csv") as f:
        comp = list(csv.DictReader(f))
    assert sum(1 for r in comp if r["ok"] == "False") == 1


def test_model_json_to_stdout(capsys):
    assert main(["model", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) >= {"overhead_hours", "rollback_hours", "threshold_fraction", "aet_hours"}
    assert doc["reference_comparison"]["passed"] == doc["reference_comparison"]["total"] - 1


def test_model_rejects_malformed_params(tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"t_i_h": 1.0, "x_grid": [0.5], "workloads": {}}))
    assert main(["model", "--params", str(p)]) == 65


def test_report_summarizes_run_dir(tmp_path, capsys):
    assert _run(tmp_path, "--strategy", "multi-ckpt", "--scenario", "9") == 0
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "run"
    assert doc["outcome"] == "RECOVERED"
    assert len(doc["events"]) == 3
    assert doc["ledger"]["extern_counter"] == 3
    assert doc["timings"]["passes"] == 4


def test_report_on_empty_dir_is_a_config_error(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 65


def test_console_entrypoint_and_numba_fallback(tmp_path):
    env = dict(os.environ, LOCKSTEP_NO_NUMBA="1")
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "lockstep.cli",
            "run",
            "--app",
            "matmul",
            "--size",
            "32",
            "--strategy",
            "single-ckpt",
            "--out",
            str(tmp_path),
        ],
        env=env,
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    with open(tmp_path / "result.json") as f:
        doc = json.load(f)
    assert doc["outcome"] == "COMPLETED_VALID"
    # the fallback kernels must reproduce the compiled path bit for bit
    from lockstep.apps import make_app
    from lockstep.engine import digest_state
    from lockstep.types import RunConfig

    app = make_app(RunConfig(app="matmul", size=32, ranks=3, seed=1))
    ref = app.reference_result()
    want = "%016x" % digest_state({k: ref[k] for k in app.result_keys(0)})
    assert doc["result_digests"]["0"] == want
