import json

import pytest

from srm.cli import main
from srm.harness.data import save_objects, synthetic_objects

FAST = ["--window", "5", "--m", "3", "--shifts", "12"]


@pytest.fixture
def objects_csv(tmp_path):
    path = tmp_path / "objects.csv"
    save_objects(synthetic_objects(300, "uniform", seed=2), path)
    return str(path)


def lines(path):
    return [json.loads(x) for x in open(path).read().splitlines()]


def test_run_both_engines(objects_csv, tmp_path):
    out = tmp_path / "run.jsonl"
    assert main(["run", "--objects", objects_csv, *FAST, "--engine", "both", "--out", str(out)]) == 0
    recs = lines(out)
    assert len(recs) == 24
    assert [r["engine"] for r in recs[:2]] == ["exact", "approx"]
    assert {r["shift"] for r in recs} == set(range(12))
    assert recs[0]["warmup"] is True and recs[-1]["warmup"] is False


def test_run_to_stdout(objects_csv, capsys):
    assert main(["run", "--objects", objects_csv, *FAST, "--engine", "approx"]) == 0
    recs = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert len(recs) == 12 and all(r["engine"] == "approx" for r in recs)


def test_run_synthetic_source(tmp_path):
    out = tmp_path / "s.jsonl"
    assert main(["run", "--synthetic", "200", *FAST, "--engine", "exact", "--out", str(out)]) == 0
    assert len(lines(out)) == 12


def test_build_index_then_run(objects_csv, tmp_path):
    idx = tmp_path / "x.irf"
    assert main(["build-index", "--objects", objects_csv, "--epsilon", "3", "--out", str(idx)]) == 0
    out = tmp_path / "r.jsonl"
    assert main(["run", "--index", str(idx), *FAST, "--out", str(out)]) == 0
    assert len(lines(out)) == 24


def test_compare_report(objects_csv, tmp_path):
    out = tmp_path / "c.json"
    assert main(["compare", "--objects", objects_csv, *FAST, "--out", str(out)]) == 0
    rep = lines(out)[0]
    assert rep["ratio"]["pooled"] >= 1
    assert len(rep["overlap"]["overlap_pct"]) == 20


def test_sweep_epsilon(objects_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("SRM_THREADS", "1")
    out = tmp_path / "sw.jsonl"
    argv = ["sweep", "--objects", objects_csv, *FAST, "--param", "epsilon", "--values", "1,2,3,4,5",
            "--repetitions", "1", "--out", str(out)]
    assert main(argv) == 0
    groups = lines(out)
    assert [g["value"] for g in groups] == [1.0, 2.0, 3.0, 4.0, 5.0]


@pytest.mark.parametrize("argv", [
    ["run", *FAST],
    ["run", "--synthetic", "10", "--objects", "x.csv"],
    ["run", "--synthetic", "10", "--window", "0"],
    ["run", "--synthetic", "10", "--engine", "neither"],
    ["run", "--synthetic", "10", "--radius-pct", "150"],
    ["sweep", "--synthetic", "10", "--param", "epsilon", "--values", "a,b"],
    ["sweep", "--synthetic", "10", "--param", "colour", "--values", "1"],
    ["build-index", "--synthetic", "10"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv):
    assert main(argv) == 2


def test_bad_thread_setting_is_usage_error(monkeypatch):
    monkeypatch.setenv("SRM_THREADS", "many")
    assert main(["sweep", "--synthetic", "10", "--param", "m", "--values", "1"]) == 2


def test_runtime_errors_exit_1(tmp_path):
    assert main(["run", "--objects", str(tmp_path / "missing.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("id,x,y\n0,1,2\n0,3,4\n")
    assert main(["run", "--objects", str(bad)]) == 1
    junk = tmp_path / "junk.irf"
    junk.write_bytes(b"not an index")
    assert main(["run", "--index", str(junk)]) == 1


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "build-index" in capsys.readouterr().out
