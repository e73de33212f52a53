import json
import subprocess
import sys

import pytest

from spp.cli import main

CFG = {"problem": {"generator": "matrix_game", "params": {"m": 3, "n": 3}, "seed": 1},
       "algorithm": "apd", "schedule": {"variant": "bounded_det"}, "N": 50,
       "capture": {"cadence": 1, "gap": True}}


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CFG))
    return str(p)


def test_solve_and_report(cfg_file, tmp_path, capsys):
    out = str(tmp_path / "out")
    assert main(["solve", "--config", cfg_file, "--out", out]) == 0
    capsys.readouterr()
    assert main(["report", "--in", out, "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True
    assert main(["report", "--in", out, "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("replication,t,gap") and lines[1].startswith("000,50,")


def test_validate_schedule(cfg_file, tmp_path, capsys):
    assert main(["validate-schedule", "--config", cfg_file]) == 0
    assert json.loads(capsys.readouterr().out)["pass"]
    bad = dict(CFG, schedule={"variant": "custom", "beta": [1] * 60, "theta": [1] * 60,
                              "eta": [9.0] * 60, "tau": [9.0] * 60})
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert main(["validate-schedule", "--config", str(p)]) == 2
    assert main(["solve", "--config", str(p)]) == 2


def test_config_errors_exit_2(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("[1, 2]")
    assert main(["solve", "--config", str(p)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["report", "--in", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2


def test_bound_failure_exit_1(tmp_path):
    # radii understated by 10^4 make the rate bound too small to hold
    cfg = dict(CFG, schedule={"variant": "bounded_det", "constants": {"D_X": 1e-4, "D_Y": 1e-4}})
    p = tmp_path / "tight.json"
    p.write_text(json.dumps(cfg))
    assert main(["solve", "--config", str(p)]) == 1


def test_bench_quick(tmp_path):
    assert main(["bench", "--suite", "det-unbounded", "--quick", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "suite.json").exists()


def test_entry_point_seed_env(cfg_file, tmp_path):
    env_out = []
    for seed in ("3", "3"):
        out = tmp_path / f"o{len(env_out)}"
        r = subprocess.run([sys.executable, "-m", "spp.cli", "solve", "--config", cfg_file, "--out", str(out)],
                           env={"SPP_SEED": seed, "PATH": ""}, capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        env_out.append((out / "traj_r000.csv").read_bytes())
    assert env_out[0] == env_out[1]
