import json
import os
import subprocess
import sys

import pytest

from gdatalog.cli import main

from conftest import DATA

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
UPDATE = os.environ.get("GDATALOG_UPDATE_GOLDEN") == "1"


def d(name):
    return str(DATA / name)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def check_golden(name, text):
    path = os.path.join(GOLDEN, name)
    if UPDATE:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    with open(path, encoding="utf-8") as fh:
        assert text == fh.read()


GOLDEN_CASES = {
    "check_travel.json": ["check", "--program", d("travel.gdl")],
    "check_travel.txt": ["check", "--program", d("travel.gdl"), "--format", "text"],
    "sample_alarm.jsonl": ["sample", "--table", d("ti_fact.json"), "-n", "8", "--seed", "0"],
    "sample_travel.txt": ["sample", "--program", d("travel.gdl"), "--edb", d("dag.json"),
                          "-n", "2", "--format", "text"],
    "estimate_rooms.json": ["estimate", "--table", d("temp_table.json"), "--query", d("avg_temp.sql"),
                            "--event", d("both_rooms.event"), "-n", "400", "--seed", "11"],
    "estimate_rooms.txt": ["estimate", "--table", d("temp_table.json"), "--query", d("avg_temp.sql"),
                           "--event", d("both_rooms.event"), "-n", "400", "--seed", "11",
                           "--format", "text"],
    "moments_rooms.json": ["estimate", "--table", d("temp_table.json"), "--query", d("avg_temp.sql"),
                           "--group-by", "RoomNo", "--value", "°C", "-n", "400"],
    "query_equality.json": ["query", "--schema", d("rs_schema.json"), "--edb", d("rs.json"),
                            "--query", d("equality.sql")],
    "datalog_walks.txt": ["datalog", "--program", d("walks.gdl"), "--edb", d("dag.json"),
                          "--format", "text"],
}


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_golden(capsys, name):
    code, out, _ = run(capsys, *GOLDEN_CASES[name])
    assert code == 0
    check_golden(name, out)


def test_repeat_runs_identical(capsys):
    argv = GOLDEN_CASES["estimate_rooms.json"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_subprocess_matches_in_process(capsys):
    argv = GOLDEN_CASES["sample_alarm.jsonl"]
    proc = subprocess.run([sys.executable, "-m", "gdatalog", *argv], capture_output=True, check=True)
    assert proc.stdout.decode("utf-8") == run(capsys, *argv)[1]


def test_workers_flag_same_output(capsys):
    argv = GOLDEN_CASES["estimate_rooms.json"]
    assert run(capsys, *argv, "--workers", "2")[1] == run(capsys, *argv)[1]


def test_estimate_report_fields(capsys):
    code, out, _ = run(capsys, *GOLDEN_CASES["estimate_rooms.json"])
    rep = json.loads(out)
    assert rep["format_version"] == 1 and rep["command"] == "estimate"
    for key in ("point", "ci", "confidence", "n", "n_effective", "censored_fraction",
                "failed_fraction", "bounds_mode", "pessimistic", "optimistic"):
        assert key in rep
    assert rep["ci"][0] <= rep["point"] <= rep["ci"][1]


def test_out_file(capsys, tmp_path):
    target = tmp_path / "r.json"
    code, out, _ = run(capsys, "check", "--program", d("reach.gdl"), "--out", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["rule_occurrences"] == 2


def test_trace_to_stderr(capsys):
    code, out, err = run(capsys, "sample", "--program", d("travel.gdl"), "--edb", d("dag.json"),
                         "-n", "1", "--trace")
    assert code == 0
    steps = [json.loads(line) for line in err.splitlines()]
    assert len(steps) == len(json.loads(out)["facts"])
    assert [s["step"] for s in steps] == list(range(1, len(steps) + 1))
    assert all(s["new"] for s in steps)
    assert {s["occurrence_id"] for s in steps} == {0, 1}


def test_unsafe_program_exit_1(capsys):
    code, out, err = run(capsys, "check", "--program", d("unsafe.gdl"))
    assert code == 1 and out == ""
    assert err.startswith("UnsafeVariable y at line")


def test_parse_error_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.gdl"
    bad.write_text(".decl S(v: integer)\nR(x :- S(x).\n")
    code, _, err = run(capsys, "check", "--program", str(bad))
    assert code == 1 and "line 2" in err


def test_missing_file_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "check", "--program", str(tmp_path / "nope.gdl"))
    assert code == 2 and "nope.gdl" in err


def test_malformed_json_exit_2(capsys, tmp_path):
    bad = tmp_path / "t.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "sample", "--table", str(bad), "-n", "1")
    assert code == 2 and "malformed JSON" in err


def test_all_censored_exit_3(capsys):
    code, out, _ = run(capsys, "estimate", "--program", d("travel.gdl"), "--edb", d("cycle.json"),
                       "--event", d("reached.event"), "--budget", "100", "-n", "100")
    rep = json.loads(out)
    assert code == 3
    assert rep["error"] == "AllWorldsCensored" and rep["censored_fraction"] == 1.0
    assert rep["n_effective"] == 0


def test_too_few_worlds_exit_3(capsys):
    code, out, _ = run(capsys, "estimate", "--table", d("ti_fact.json"), "--event", d("alarm.event"),
                       "-n", "50")
    assert code == 3 and json.loads(out)["error"] == "TooFewWorlds"


def test_datalog_censored_exit_3(capsys):
    code, out, _ = run(capsys, "datalog", "--program", d("walks.gdl"), "--edb", d("cycle.json"),
                       "--budget", "50")
    assert code == 3 and json.loads(out) == {"format_version": 1, "command": "datalog",
                                             "status": "censored", "firings": 50}


def test_datalog_rejects_random_program(capsys):
    code, _, err = run(capsys, "datalog", "--program", d("travel.gdl"), "--edb", d("dag.json"))
    assert code == 1 and err


def test_usage_errors_exit_1(capsys):
    assert run(capsys, "sample", "-n", "1")[0] == 1
    assert run(capsys, "estimate", "--table", d("ti_fact.json"))[0] == 1
    assert run(capsys, "sample", "--table", d("ti_fact.json"), "--edb", d("dag.json"))[0] == 1


def test_schema_mismatch_exit_1(capsys):
    code, _, err = run(capsys, "estimate", "--table", d("ti_fact.json"), "--event",
                       d("both_rooms.event"), "-n", "200")
    assert code == 1 and err


def test_censored_text_shows_bounds(capsys, tmp_path):
    table = tmp_path / "g.json"
    table.write_text(json.dumps([
        {"relation": "S", "rows": [{"cells": [{"const": 1}]}]},
        {"relation": "E", "rows": [
            {"cells": [{"const": 1}, {"const": 2}, {"const": 1.0}]},
            {"exists_p": 0.5, "cells": [{"const": 2}, {"const": 1}, {"const": 1.0}]}]},
    ]))
    code, out, _ = run(capsys, "estimate", "--program", d("travel.gdl"), "--table", str(table),
                       "--event", d("reached.event"), "--budget", "100", "-n", "300", "--format", "text")
    assert code == 0
    assert "pessimistic" in out and "optimistic" in out
