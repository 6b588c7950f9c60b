import json
import subprocess
import sys

import pytest

from firal.cli import EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, main


def _write_config(path, **overrides):
    raw = {"schema": "v1",
           "data": {"kind": "synthetic", "n_classes": 2, "n_features": 2, "pool_size": 80, "heldout_size": 40},
           "strategy": {"kind": "random", "batch_size": 2}, "n_initial": 5, "iterations": 3}
    raw.update(overrides)
    path.write_text(json.dumps(raw))
    return path


def test_run_writes_outputs(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    rec = json.loads((tmp_path / "o" / "record.json").read_text())
    assert rec["schema"] == "v1" and len(rec["iterations"]) == 3
    assert (tmp_path / "o" / "curve.csv").read_text().splitlines()[0] == "iteration,n_labeled,fir,accuracy"
    assert "random" in capsys.readouterr().out


def test_run_overrides(tmp_path):
    cfg = _write_config(tmp_path / "c.json")
    assert main(["run", "--config", str(cfg), "--strategy", "zhang", "--seed", "4", "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "record.json").read_text())
    assert rec["config"]["strategy"]["kind"] == "zhang" and rec["config"]["seed"] == 4


def test_run_is_byte_identical(tmp_path):
    cfg = _write_config(tmp_path / "c.json", strategy={"kind": "hoi", "batch_size": 2})
    for name in ("a", "b"):
        main(["run", "--config", str(cfg), "--out", str(tmp_path / name)])
    for f in ("record.json", "curve.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("overrides", [{"schema": "v9"}, {"iterations": 0}, {"n_initial": 100}])
def test_invalid_config_exit_code(tmp_path, overrides, capsys):
    cfg = _write_config(tmp_path / "c.json", **overrides)
    assert main(["run", "--config", str(cfg)]) == EXIT_INVALID
    assert "error:" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == EXIT_INVALID


def test_non_convergence_exit_code(tmp_path):
    cfg = _write_config(tmp_path / "c.json",
                        strategy={"kind": "chaudhuri", "batch_size": 2, "fw_tol": 1e-14, "fw_max_iter": 1})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_NOT_CONVERGED


def test_check_subcommand(tmp_path, capsys):
    assert main(["check", "--name", "trace", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "checks.json").read_text())["trace"]["passed"]


def test_theory_subcommand(tmp_path):
    assert main(["theory", "--name", "llr_case2", "--out", str(tmp_path)]) == EXIT_OK
    out = json.loads((tmp_path / "theory.json").read_text())
    assert out["reports"]["llr_case2"]["passed"]


def test_bench_single_strategy_rejects_unknown():
    assert main(["bench", "--strategy", "fukumizu"]) == EXIT_INVALID


def test_argparse_rejects_bad_choice():
    proc = subprocess.run([sys.executable, "-m", "firal.cli", "run", "--config", "x", "--strategy", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "invalid choice" in proc.stderr
