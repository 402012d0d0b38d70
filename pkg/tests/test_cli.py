from __future__ import annotations

import json
import subprocess
import sys

import pytest

from worldprog.cli import main
from worldprog.formats import read_graphs, read_rules, read_states, write_states
from worldprog.graphs import State


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    """A small world taken through gen-env, induce and train."""
    d = tmp_path_factory.mktemp("world")
    assert main(["gen-env", "--world", str(d), "--n-targets", "12", "--depth-min", "1", "--depth-max", "3"]) == 0
    assert main(["induce", "--world", str(d)]) == 0
    assert main(["train", "--world", str(d), "--epochs", "5"]) == 0
    return d


def test_gen_env_bundle(world):
    for name in ("world.rules", "blocks.graphs", "observations.obs", "targets.graphs", "meta"):
        assert (world / name).exists()
    assert len(read_rules(world / "world.rules")) == 12
    assert len(read_graphs(world / "blocks.graphs")) == 8
    assert len(read_states(world / "targets.graphs")) == 12
    meta = dict(line.split("=", 1) for line in (world / "meta").read_text().splitlines())
    assert meta["seed"] == "0" and meta["n_targets"] == "12"


def test_induced_library_matches_hidden_rules(world):
    hidden = {r.rule_id for r in read_rules(world / "world.rules")}
    assert {r.rule_id for r in read_rules(world / "library.rules")} <= hidden


def test_bench_end_to_end(world, capsys):
    out = world / "report.csv"
    code = main(["bench", "--world", str(world), "--iters", "300", "--restarts", "1", "--repeats", "1",
                 "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "plans replayed:" in text
    rows = json.loads(out.with_suffix(".json").read_text())
    assert [r["agent"] for r in rows] == ["PUCT", "MCS", "UCT", "BFS_NEURAL", "BFS_HEURISTIC"]
    assert out.read_text().splitlines()[0] == "agent,pct_solved,stddev,sec_per_plan,iters_per_plan"


def test_plan_on_solved_target(world, tmp_path, capsys):
    blocks = read_graphs(world / "blocks.graphs")
    targets = tmp_path / "t.graphs"
    write_states(targets, [State([blocks[0]])])
    assert main(["plan", "--world", str(world), "--targets", str(targets)]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out == [out[-1]] and out[-1].startswith("summary solved=1 iterations=0")


def test_plan_writes_record(world, tmp_path, capsys):
    rec = tmp_path / "plan.txt"
    assert main(["plan", "--world", str(world), "--index", "1", "--algo", "bfs-heuristic", "--out", str(rec)]) == 0
    assert rec.read_text() == capsys.readouterr().out
    assert rec.read_text().splitlines()[-1].startswith("summary ")


def test_plan_index_out_of_range(world):
    assert main(["plan", "--world", str(world), "--index", "99"]) == 2


@pytest.mark.parametrize("argv", [
    [],
    ["fly"],
    ["bench", "--agents", "PUCT,astar"],
    ["plan", "--algo", "astar"],
    ["bench", "--iters", "lots"],
    ["bench", "--tau", "1.5"],
    ["bench", "--iters", "0"],
])
def test_usage_errors(world, argv):
    extra = ["--world", str(world)] if argv and argv[0] in ("bench", "plan") else []
    assert main(argv + extra) == 1


def test_missing_files(tmp_path, capsys):
    assert main(["induce", "--world", str(tmp_path)]) == 2
    assert "observations.obs" in capsys.readouterr().err


def test_bad_file_reports_line(tmp_path, capsys):
    (tmp_path / "observations.obs").write_text("v 0 A\nv 3 B\n--\nv 0 A\n==\n", encoding="utf-8")
    assert main(["induce", "--world", str(tmp_path)]) == 2
    assert f"{tmp_path / 'observations.obs'}:2:" in capsys.readouterr().err


def test_config_file(world, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# bench defaults\niters = 50\nrestarts=1\nrepeats=1\nagents=UCT\n", encoding="utf-8")
    out = tmp_path / "r.csv"
    assert main(["bench", "--world", str(world), "--config", str(conf), "--out", str(out)]) == 0
    assert [r["agent"] for r in json.loads(out.with_suffix(".json").read_text())] == ["UCT"]
    # the command line wins over the file
    assert main(["bench", "--world", str(world), "--config", str(conf), "--agents", "MCS", "--out", str(out)]) == 0
    assert [r["agent"] for r in json.loads(out.with_suffix(".json").read_text())] == ["MCS"]


def test_config_errors(world, tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("warp=9\n", encoding="utf-8")
    assert main(["bench", "--world", str(world), "--config", str(conf)]) == 1
    conf.write_text("iters\n", encoding="utf-8")
    assert main(["bench", "--world", str(world), "--config", str(conf)]) == 2
    assert main(["bench", "--world", str(world), "--config", str(tmp_path / "none.conf")]) == 2


def test_train_with_zero_epochs(world, tmp_path):
    assert main(["train", "--world", str(world), "--epochs", "0", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "policy.model").exists()


def test_module_entry_point(world):
    proc = subprocess.run([sys.executable, "-m", "worldprog", "plan", "--world", str(world), "--algo", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "unknown agent" in proc.stderr
