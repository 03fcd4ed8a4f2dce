import json
import shutil
import subprocess
import sys

import pytest

from lutloc.cli import main


@pytest.fixture
def toy1(tmp_path):
    """A small simulated and scored toy-1 experiment on disk."""
    tr, mp, sc = tmp_path / "t.jsonl", tmp_path / "m.json", tmp_path / "s.jsonl"
    assert main(["simulate", "--model", "toy1", "--runs", "8", "--seed", "3",
                 "--map-out", str(mp), "--out", str(tr)]) == 0
    assert main(["score", "--traces", str(tr), "--formula", "alw[10,30](abs(y1 - 1) < 0.4)",
                 "--out", str(sc)]) == 0
    return tmp_path, mp, sc


def test_pipeline(toy1, capsys):
    d, mp, sc = toy1
    rk = d / "r.json"
    assert main(["rank", "--map", str(mp), "--traces", str(sc), "--heuristic", "kulczynski",
                 "--out", str(rk)]) == 0
    data = json.loads(rk.read_text())
    assert data["heuristic"] == "kulczynski" and len(data["entries"]) == 90
    (d / "b.json").write_text("[[19]]")
    assert main(["exam", "--ranking", str(rk), "--buggy", str(d / "b.json")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("EXAM: ") and out[1].startswith("absEXAM: ")
    assert main(["heatmap", "--map", str(mp), "--traces", str(sc), "--ranking", str(rk),
                 "--out", str(d / "h.csv"), "--svg", str(d / "h.svg")]) == 0
    assert (d / "h.csv").read_text().count("\n") == 2
    assert (d / "h.svg").read_text().startswith("<svg")
    assert main(["spectra", "--map", str(mp), "--traces", str(sc), "--radius", "0",
                 "--out", str(d / "sp.json")]) == 0
    assert "sus_u" in json.loads((d / "sp.json").read_text())


def test_rank_to_stdout(toy1, capsys):
    _, mp, sc = toy1
    assert main(["rank", "--map", str(mp), "--traces", str(sc), "--mode", "freq-basic"]) == 0
    assert json.loads(capsys.readouterr().out)["config"]["affect"]["mode"] == "freq-basic"


def test_usage_errors_exit_1(toy1):
    _, mp, sc = toy1
    for argv in ([], ["nope"], ["rank", "--map", str(mp)],
                 ["rank", "--map", str(mp), "--traces", str(sc), "--heuristic", "ochiai"],
                 ["spectra", "--map", str(mp), "--traces", str(sc), "--radius", "-1"]):
        with pytest.raises(SystemExit) as ex:
            main(argv)
        assert ex.value.code == 1


def test_data_errors_exit_2(toy1, capsys):
    d, mp, sc = toy1
    tr_unscored = d / "t.jsonl"
    (d / "bad.json").write_text("{not json")
    assert main(["rank", "--map", str(d / "bad.json"), "--traces", str(sc)]) == 2
    assert main(["rank", "--map", str(mp), "--traces", str(d / "missing.jsonl")]) == 2
    assert main(["rank", "--map", str(mp), "--traces", str(tr_unscored)]) == 2
    assert main(["score", "--traces", str(sc), "--formula", "alw[0,1](y1 <"]) == 2
    assert main(["score", "--traces", str(sc), "--formula", "alw[0,1](q < 1)"]) == 2
    (d / "b.json").write_text("[[500]]")
    rk = d / "r.json"
    main(["rank", "--map", str(mp), "--traces", str(sc), "--out", str(rk)])
    assert main(["exam", "--ranking", str(rk), "--buggy", str(d / "b.json")]) == 2
    err = capsys.readouterr().err
    assert "error" in err


def test_failed_command_leaves_no_partial_output(toy1):
    d, mp, _ = toy1
    out = d / "never.json"
    assert main(["rank", "--map", str(mp), "--traces", str(d / "t.jsonl"), "--out", str(out)]) == 2
    assert not out.exists() and not list(d.glob(".never*"))


def test_paramgrid(tmp_path, capsys):
    grid = {"lows": [0, 0], "highs": [1, 1], "counts": [3, 3],
            "samples": [{"point": [0.5, 0.5], "score": -1}, {"point": [1, 1], "score": 1}]}
    (tmp_path / "g.json").write_text(json.dumps(grid))
    assert main(["paramgrid", "--grid", str(tmp_path / "g.json"),
                 "--refine-out", str(tmp_path / "sub.json")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["entries"][0]["index"] == [1, 1]
    sub = json.loads((tmp_path / "sub.json").read_text())
    assert sub["lows"] == [0.0, 0.0] and sub["highs"] == [1.0, 1.0]


def test_simulate_with_config_and_map(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "toy2", "n_runs": 2, "seed": 5}))
    mp = tmp_path / "m.json"
    assert main(["simulate", "--config", str(cfg), "--map-out", str(mp),
                 "--out", str(tmp_path / "a.jsonl")]) == 0
    assert main(["simulate", "--config", str(cfg), "--map", str(mp),
                 "--out", str(tmp_path / "b.jsonl")]) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    cfg.write_text(json.dumps({"model": "toy9"}))
    assert main(["simulate", "--config", str(cfg)]) == 2


def test_console_script():
    exe = shutil.which("lutloc")
    cmd = [exe] if exe else [sys.executable, "-m", "lutloc.cli"]
    p = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert p.returncode == 0 and "paramgrid" in p.stdout
    p = subprocess.run(cmd + ["rank"], capture_output=True, text=True)
    assert p.returncode == 1
