import csv
import io
import json

import pytest

from flakesieve.cli import main, parse_symptom_text
from flakesieve.memory import load
from flakesieve.replay.dataset import run_to_dict

from helpers import CONN_MESSAGE_1, CONN_MESSAGE_2, CONN_TRACE, CONN_CANONICAL, run, suite


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("FLAKESIEVE_MEMORY", raising=False)
    (tmp_path / "ep.txt").write_text("NewDbTestCase.py,run\ntestCrossDBAtrMultiDB.py,setUp\n")
    (tmp_path / "one.txt").write_text(f"{CONN_TRACE}\n---MESSAGE---\n{CONN_MESSAGE_1}\n")
    (tmp_path / "two.txt").write_text(f"{CONN_TRACE}\n---MESSAGE---\n{CONN_MESSAGE_2}\n")
    return tmp_path


def test_parse_symptom_text():
    raw = parse_symptom_text("a\nb\n---MESSAGE---\nline one\nline two\n")
    assert raw.trace_text == "a\nb\n"
    assert raw.message == "line one\nline two"


def test_abstract_prints_canonical(workdir, capsys):
    assert main(["abstract", "one.txt", "--entry-points", "ep.txt"]) == 0
    assert capsys.readouterr().out == CONN_CANONICAL + "\n"


def test_abstract_reads_stdin(workdir, capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("---MESSAGE---\nrc=12\n"))
    assert main(["abstract", "-"]) == 0
    assert capsys.readouterr().out.endswith("[message]\nrc=#\n")


def test_abstract_without_separator_is_invalid(workdir):
    (workdir / "bad.txt").write_text("just a message\n")
    assert main(["abstract", "bad.txt"]) == 2


def test_record_then_check(workdir, capsys):
    common = ["--memory", "mem.json", "--entry-points", "ep.txt"]
    assert main(["check", "one.txt", *common]) == 3
    assert main(["check", "one.txt", "--allow-empty-memory", *common]) == 1
    assert main(["record", "one.txt", "--run-id", "r1", *common]) == 0
    assert "stored: 1" in capsys.readouterr().out
    assert main(["check", "one.txt", *common]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["match"] is True
    assert report["symptoms"][0]["count"] == 1
    assert main(["check", "one.txt", "-T", "2", *common]) == 1
    assert load(workdir / "mem.json").lookup(CONN_CANONICAL) == 1


def test_memory_path_from_environment(workdir, monkeypatch):
    monkeypatch.setenv("FLAKESIEVE_MEMORY", str(workdir / "env.json"))
    assert main(["record", "one.txt", "--run-id", "r1"]) == 0
    assert (workdir / "env.json").exists()


def test_missing_memory_flag_is_invalid(workdir):
    assert main(["record", "one.txt", "--run-id", "r1"]) == 2


def test_corrupt_memory_is_storage_error(workdir):
    (workdir / "mem.json").write_text("{broken")
    assert main(["check", "one.txt", "--memory", "mem.json"]) == 3


def test_denylisted_symptom_is_invalid(workdir):
    (workdir / "deny.txt").write_text("substr:Connection failed\n")
    assert main(["check", "one.txt", "--memory", "m.json", "--denylist", "deny.txt"]) == 2
    assert main(["check", "--memory", "m.json"]) == 2


def write_dataset(path, runs):
    path.write_text("".join(json.dumps(run_to_dict(r)) + "\n" for r in runs))


MSG = "Lock wait timeout exceeded 42"


def test_replay_reports_metrics(workdir, capsys):
    write_dataset(
        workdir / "d.jsonl",
        [
            run("r1", "2022-01-01T00:00:00Z", suite("r1", "a", [MSG], ["fail", "pass", "fail"])),
            run("r2", "2022-01-02T00:00:00Z", suite("r2", "b", [MSG], ["pass"] * 3)),
        ],
    )
    code = main(["replay", "d.jsonl", "--format", "json", "--report", "r.json", "--save-memory", "m.json"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["confusion"] == {"tp": 1, "fp": 0, "tn": 0, "fn": 1}
    assert out["metrics"]["precision"] == 1.0
    assert out["savings"]["executions_saved_pct"] == 0.5
    assert json.loads((workdir / "r.json").read_text()) == out
    assert len(load(workdir / "m.json")) == 1

    assert main(["replay", "d.jsonl"]) == 0
    assert "recall: 0.5000" in capsys.readouterr().out


def test_replay_short_rerun_record(workdir):
    write_dataset(workdir / "d.jsonl", [run("r1", "2022-01-01T00:00:00Z", suite("r1", "a", [MSG], ["fail"]))])
    assert main(["replay", "d.jsonl", "-K", "3"]) == 4


def test_replay_bad_dataset(workdir):
    (workdir / "d.jsonl").write_text("not json\n")
    assert main(["replay", "d.jsonl"]) == 2
    assert main(["replay", "missing.jsonl"]) == 2


def test_gen_sweep_groups(workdir, capsys):
    assert main(["gen", "-o", "syn.jsonl", "--seed", "3", "--runs", "20", "--families", "5"]) == 0
    assert (workdir / "syn.jsonl.manifest.json").exists()
    capsys.readouterr()

    assert main(["sweep", "syn.jsonl", "--entry-points", "syn.jsonl.entry_points",
                 "--T-values", "1,2", "--W-values", "1", "--ablation", "-o", "grid.csv"]) == 0
    rows = list(csv.DictReader((workdir / "grid.csv").open()))
    assert len(rows) == 8
    assert {(r["purification"], r["masking"]) for r in rows} == {("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")}

    assert main(["replay", "syn.jsonl", "--entry-points", "syn.jsonl.entry_points",
                 "--save-memory", "m.json"]) == 0
    capsys.readouterr()
    assert main(["groups", "--memory", "m.json", "--min-count", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "count,distinct_test_cases,distinct_runs,symptom"
    assert len(lines) > 1


def test_gen_bad_spec(workdir):
    assert main(["gen", "-o", "x.jsonl", "--runs", "3", "--recurrence", "5", "5"]) == 2


def test_abstract_empty_message_is_invalid(workdir):
    (workdir / "empty.txt").write_text(f"{CONN_TRACE}\n---MESSAGE---\n\n")
    assert main(["abstract", "empty.txt"]) == 2


def test_abstract_raw_setting(workdir, capsys):
    assert main(["abstract", "one.txt", "--entry-points", "ep.txt", "--no-purify", "--no-mask"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("[callstack]\nZZZ/ZZZ/NewDbTestCase.py,run\n")
    assert out.endswith(CONN_MESSAGE_1 + "\n")


def test_record_below_word_threshold(workdir, capsys):
    (workdir / "low.txt").write_text("---MESSAGE---\nAssertionError: 1 != 2\n")
    assert main(["record", "low.txt", "--run-id", "r1", "--memory", "m.json", "-W", "2"]) == 0
    assert "skipped: 1" in capsys.readouterr().out
    assert len(load(workdir / "m.json")) == 0


def test_record_write_failure_keeps_original(workdir, monkeypatch):
    assert main(["record", "one.txt", "--run-id", "r1", "--memory", "m.json"]) == 0
    before = (workdir / "m.json").read_bytes()

    def fail(*args):
        raise OSError(28, "No space left on device")

    monkeypatch.setattr("flakesieve.memory.os.replace", fail)
    assert main(["record", "two.txt", "--run-id", "r2", "--memory", "m.json"]) == 3
    assert (workdir / "m.json").read_bytes() == before


def test_default_sweep_has_36_rows(workdir):
    assert main(["gen", "-o", "syn.jsonl", "--runs", "15", "--families", "4"]) == 0
    assert main(["sweep", "syn.jsonl", "-o", "grid.csv"]) == 0
    assert len(list(csv.DictReader((workdir / "grid.csv").open()))) == 36


def test_gen_is_reproducible(workdir):
    assert main(["gen", "-o", "a.jsonl", "--seed", "7"]) == 0
    assert main(["gen", "-o", "b.jsonl", "--seed", "7"]) == 0
    assert (workdir / "a.jsonl").read_bytes() == (workdir / "b.jsonl").read_bytes()


def test_groups_on_empty_memory(workdir, capsys):
    (workdir / "m.json").write_text('{"version": 1, "entries": []}\n')
    assert main(["groups", "--memory", "m.json"]) == 0
    assert capsys.readouterr().out == "count,distinct_test_cases,distinct_runs,symptom\n"
