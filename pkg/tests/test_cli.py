import json
import subprocess
import sys

import pytest

from rwelect.cli import main
from rwelect.simnet import Trace, replay


@pytest.fixture(autouse=True)
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("RWELECT_OUT_DIR", str(tmp_path))
    return tmp_path


def test_scenarios(capsys, out_dir):
    assert main(["scenario", "case1"]) == 0
    out = capsys.readouterr().out
    assert "protocol messages (heartbeats excluded): 9" in out
    assert (out_dir / "case1.trace.jsonl").exists()
    assert main(["scenario", "case2", "--trace", str(out_dir / "c2.jsonl")]) == 0
    assert "coordinator: B" in capsys.readouterr().out


def test_unknown_scenario():
    assert main(["scenario", "case3"]) == 2


def test_elect_writes_replayable_trace(capsys, out_dir):
    path = out_dir / "run.jsonl"
    assert main(["elect", "--seed", "42", "--trace", str(path)]) == 0
    assert "leader:" in capsys.readouterr().out
    trace = Trace.read(path)
    replay(trace)
    resolved = trace.header["resolved"]
    assert resolved["seed"] == 42 and resolved["threshold"] == 0.85
    assert resolved["latency"] == {"kind": "uniform", "lo": 1, "hi": 5}


def test_resolved_config_reruns_identically(out_dir):
    first = out_dir / "a.jsonl"
    main(["elect", "--seed", "7", "--latency", "2:4", "--crash", "1:30", "--trace", str(first)])
    cfg = Trace.read(first).header["resolved"]
    cfg["trace"] = str(out_dir / "b.jsonl")
    (out_dir / "cfg.json").write_text(json.dumps(cfg))
    assert main(["elect", "--config", str(out_dir / "cfg.json")]) == 0
    assert Trace.read(out_dir / "b.jsonl").body_lines() == Trace.read(first).body_lines()


def test_blocked_exit_code(capsys):
    argv = ["elect", "--crash", "0:0", "--crash", "1:0", "--crash", "2:0", "--max-ms", "2000"]
    assert main(argv) == 1
    assert "blocked" in capsys.readouterr().out


def test_liveness_failure_exit_code(capsys):
    assert main(["elect", "--max-ms", "5"]) == 1
    assert "liveness failure" in capsys.readouterr().out


def test_config_conflict(out_dir):
    (out_dir / "c.json").write_text(json.dumps({"seed": 3, "threshold": 0.9}))
    assert main(["elect", "--config", str(out_dir / "c.json"), "--seed", "4"]) == 2
    assert main(["elect", "--config", str(out_dir / "c.json"), "--seed", "3"]) == 0


def test_config_unknown_key(out_dir):
    (out_dir / "c.json").write_text(json.dumps({"sede": 3}))
    assert main(["elect", "--config", str(out_dir / "c.json")]) == 2


def test_bad_values_are_usage_errors():
    assert main(["elect", "--nodes", "2"]) == 2
    assert main(["elect", "--latency", "5:1"]) == 2
    assert main(["bench", "--iterations", "0"]) == 2
    assert main(["analyze", "--threshold", "1.2"]) == 2


def test_bench_outputs(capsys, out_dir):
    assert main(["bench", "--iterations", "20", "--seed", "1"]) == 0
    assert "split_vote_fraction=" in capsys.readouterr().out
    for name in ("summary.csv", "summary.json", "histogram.txt"):
        assert (out_dir / name).exists()
    first = (out_dir / "summary.csv").read_bytes()
    main(["bench", "--iterations", "20", "--seed", "1"])
    assert (out_dir / "summary.csv").read_bytes() == first


def test_bench_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["bench", "--iterations", "5", "--out", str(blocker / "sub")]) == 1


@pytest.mark.parametrize("streak,draws,expected", [
    ("3", "100", "streak_probability = 0.003375"),
    ("2", "100", "streak_probability = 0.0225"),
    ("3", "3", "prob_streak_within(3) = 0.003375"),
])
def test_analyze(capsys, streak, draws, expected):
    assert main(["analyze", "--threshold", "0.85", "--streak", streak, "--draws", draws]) == 0
    assert expected in capsys.readouterr().out


def test_replay_command(capsys, out_dir):
    path = out_dir / "r.jsonl"
    main(["elect", "--seed", "5", "--trace", str(path)])
    assert main(["replay", str(path)]) == 0
    lines = path.read_text().splitlines()
    rec = json.loads(lines[3])
    rec["node"] = (rec["node"] + 1) % 5
    lines[3] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(path)]) == 1
    assert "record 3" in capsys.readouterr().err
    assert main(["replay", str(out_dir / "absent.jsonl")]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rwelect", "analyze"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.003375" in res.stdout
