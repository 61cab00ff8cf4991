import csv
import json
import subprocess
import sys

import pytest

from dichoshadow import cli


def run_cfg(tmp_path, experiment, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    code = cli.run(experiment, str(path))
    report = json.loads(path.with_suffix(".report.json").read_text())
    return code, report


def test_series_constant_report_and_csv(tmp_path, capsys):
    code, report = run_cfg(tmp_path, "series-constant", {"lambda": 0.5, "omega": [0, 1]})
    assert code == 0 and report["status"] == "ok"
    assert report["result"]["values"][0]["value"] == pytest.approx(3.0)
    rows = list(csv.reader(open(report["csv"])))
    assert rows[0] == ["lambda", "omega", "value", "argmax"] and len(rows) == 3
    assert "C(0.5,0)=3" in capsys.readouterr().out


def test_verify_dichotomy_pass_and_fail(tmp_path):
    cfg = {"cocycle": {"generator": "constant", "matrix": [[0.5, 0], [0, 2]], "window": [0, 20]},
           "splitting": {"projection": [[1, 0], [0, 0]], "K": 1.0, "lambda": 0.5}}
    code, report = run_cfg(tmp_path, "verify-dichotomy", cfg)
    assert code == 0 and report["status"] == "passed"
    cfg["splitting"]["lambda"] = 0.4
    code, report = run_cfg(tmp_path, "verify-dichotomy", cfg)
    assert code == 2 and report["status"] == "failed"
    assert report["result"]["passed"] is False


def test_rotation_has_no_gap(tmp_path):
    code, report = run_cfg(tmp_path, "verify-dichotomy",
                           {"cocycle": {"generator": "rotation", "window": [0, 40]}})
    assert code == 2 and report["status"] == "NoGapDetected"


def test_gluing_failure_exit_code(tmp_path):
    cfg = {"cocycle": {"generator": "piecewise", "window": [-10, 10]},
           "f": {"impulse": {"index": 1, "vector": [1.0, 0.0]}},
           "splitting": {"plus": {"projection": [[0, 0], [0, 0]], "K": 1.0, "lambda": 0.5},
                         "minus": {"projection": [[1, 0], [0, 1]], "K": 1.0, "lambda": 0.5}}}
    code, report = run_cfg(tmp_path, "solve-perron", cfg)
    assert code == 3 and report["status"] == "GluingNotSolvable"


def test_solve_perron_halfline(tmp_path):
    cfg = {"cocycle": {"generator": "hyperbolic", "dim": 2, "lambda": 0.5, "window": [0, 40]},
           "f": {"random": {"scale": 1.0}}, "omega": 1.0, "seed": 3}
    code, report = run_cfg(tmp_path, "solve-perron", cfg)
    assert code == 0 and report["status"] == "accepted"
    assert report["result"]["residual"] < 1e-9


def test_transversality_sweep_not_transverse(tmp_path):
    cfg = {"cocycle": {"generator": "piecewise", "window": [-40, 40]}, "sweep": [10, 20],
           "eta": [1.0, 0.0], "omega": 1.0}
    code, report = run_cfg(tmp_path, "pliss-check", cfg)
    assert code == 2 and report["status"] == "not-transverse"
    growth = report["result"]["sweep"][1]["growth"]
    assert growth >= 1.5


def test_shadow_csv_has_one_row_per_index(tmp_path):
    cfg = {"map": {"kind": "cat"}, "window": [-200, 200], "d": 1e-4, "gamma": 0.5, "seed": 1}
    code, report = run_cfg(tmp_path, "shadow", cfg)
    assert code == 0 and report["status"] == "certified"
    rows = list(csv.reader(open(report["csv"])))
    assert rows[0] == ["k", "x1", "x2", "dist", "envelope", "ratio"]
    assert len(rows) == 402
    assert all(float(r[5]) <= 1.0 for r in rows[1:])


def test_admissibility_identity(tmp_path):
    cfg = {"map": {"kind": "linear", "matrix": [[1, 0], [0, 1]]}, "window": [-20, 20], "gamma": 1.0}
    code, report = run_cfg(tmp_path, "admissibility-probe", cfg)
    assert code == 2 and report["status"] == "not-transverse"


def test_unknown_key_rejected(tmp_path):
    code, report = run_cfg(tmp_path, "series-constant", {"lambda": 0.5, "omega": 0, "lamda": 1})
    assert code == 4 and report["status"] == "config-error"
    assert "lamda" in report["error"]


def test_missing_key_rejected(tmp_path):
    code, report = run_cfg(tmp_path, "green-bounds", {"cocycle": {"generator": "piecewise", "window": [0, 5]}})
    assert code == 4 and "mu" in report["error"]


def test_malformed_json_reports_position(tmp_path):
    code, report = run_cfg(tmp_path, "series-constant", '{\n  "lambda": 0.5,\n  "omega": }')
    assert code == 4
    assert "cfg.json:3:" in report["error"]


def test_domain_errors_are_config_errors(tmp_path):
    code, report = run_cfg(tmp_path, "series-constant", {"lambda": 1.5, "omega": 0})
    assert code == 4 and report["status"] == "invalid-input"
    cfg = {"cocycle": {"generator": "constant", "matrix": [[0.5, 0], [0, 2]], "window": [0, 5]},
           "f": {"impulse": {"index": 0, "vector": [1.0, 0.0]}},
           "splitting": {"projection": [[1, 0], [0, 0]], "K": 1.0, "lambda": 0.5}}
    code, report = run_cfg(tmp_path, "solve-perron", cfg)
    assert code == 4 and "F0NotZero" in report["error"]


def test_singular_inline_cocycle(tmp_path):
    cfg = {"cocycle": {"window": [0, 2], "maps": [[[1, 0], [0, 1]], [[0, 0], [0, 0]]]}}
    code, report = run_cfg(tmp_path, "verify-dichotomy", cfg)
    assert code == 4 and "SingularMatrix" in report["error"]


def test_out_path_and_seed_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"map": {"kind": "cat"}, "window": [-30, 30], "gamma": 0.0, "trials": 3}))
    out = tmp_path / "deep" / "dir" / "r.json"
    assert cli.main(["admissibility-probe", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
    report = json.loads(out.read_text())
    assert report["seed"] == 9 and (tmp_path / "deep" / "dir" / "r.csv").exists()


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"lambda": 0.3, "omega": 2}))
    proc = subprocess.run([sys.executable, "-m", "dichoshadow", "series-constant", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("series-constant: ok")


def test_help_lists_csv_schemas(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    assert "exit codes" in capsys.readouterr().out
