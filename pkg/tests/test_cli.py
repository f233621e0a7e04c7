import csv
import io
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from fixlab import cli
from fixlab.corpus import program_text
from fixlab.lattice import EMPTY

SCHEMA = json.loads(resources.files("fixlab").joinpath("schema/output.schema.json").read_text())
SYSTEMS = resources.files("fixlab").joinpath("corpus/systems")
PROGRAMS = resources.files("fixlab").joinpath("corpus/programs")
SPAWN_WRITE_EQS = str(SYSTEMS.joinpath("spawn_write.eqs"))
SPAWN_WRITE_TOY = str(PROGRAMS.joinpath("spawn_write.toy"))


def run(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out)
    return code, out.getvalue()


def run_json(*argv):
    code, text = run(*argv, "--out", "json")
    doc = json.loads(text)
    jsonschema.validate(doc, SCHEMA)
    return code, doc


def test_solve_spawn_write_text():
    code, text = run("solve", SPAWN_WRITE_EQS)
    assert code == 0
    assert "g = [0,42]" in text
    assert "⟨13⟩ = [1,43]" in text


@pytest.mark.parametrize("solver", ["seq", "immediate", "independent"])
def test_solve_json_envelope(solver):
    code, doc = run_json("solve", SPAWN_WRITE_EQS, "--solver", solver, "--workers", "2")
    assert code == 0
    assert doc["solution"]["g"] == {"kind": "global", "lattice": "interval", "value": "[0,42]"}
    assert doc["verification"]["ok"]
    assert all(doc["stats"]["termination"].values())
    assert doc["meta"]["roots"] == ["⟨13⟩"]


def test_workers_zero_is_usage_error(capsys):
    code, _ = run("solve", SPAWN_WRITE_EQS, "--workers", "0")
    assert code == 2


def test_missing_file_and_parse_error(tmp_path):
    assert run("solve", str(tmp_path / "nope.eqs"))[0] == 2
    bad = tmp_path / "bad.eqs"
    bad.write_text("lattice interval;\nx: local = frob\n")
    assert run("solve", str(bad))[0] == 2
    badtoy = tmp_path / "bad.toy"
    badtoy.write_text("fn main() { spawn undefined(1); }")
    assert run("analyze", str(badtoy))[0] == 2


def test_budget_exit(tmp_path):
    assert run("solve", SPAWN_WRITE_EQS, "--budget", "2")[0] == 4


def test_unverified_exit(monkeypatch):
    real = cli.run_solver

    def broken(system, *a, **k):
        sol = real(system, *a, **k)
        sol.values[system["⟨13⟩"]] = EMPTY
        return sol

    monkeypatch.setattr(cli, "run_solver", broken)
    code, doc = run_json("solve", SPAWN_WRITE_EQS)
    assert code == 3
    assert not doc["verification"]["ok"]


def test_seeds_both_verify():
    a = run_json("analyze", str(PROGRAMS.joinpath("workers4.toy")), "--solver", "independent", "--workers", "4", "--seed", "1")
    b = run_json("analyze", str(PROGRAMS.joinpath("workers4.toy")), "--solver", "independent", "--workers", "4", "--seed", "2")
    assert a[0] == b[0] == 0


def test_analyze_spawn_write():
    code, doc = run_json("analyze", SPAWN_WRITE_TOY, "--demand", "threads")
    assert code == 0
    assert "a:[1,43]" in doc["solution"]["main.end"]["value"]
    assert doc["solution"]["g"]["value"] == "[0,42]"


def test_demand_none_equals_threads_without_spawn():
    f = str(PROGRAMS.joinpath("no_globals.toy"))
    a = run_json("analyze", f, "--demand", "none")[1]
    b = run_json("analyze", f, "--demand", "threads")[1]
    assert a["solution"] == b["solution"]


def test_functions_reach_superset():
    f = str(PROGRAMS.joinpath("calls.toy"))
    a = run_json("analyze", f, "--demand", "functions")[1]
    b = run_json("analyze", f, "--demand", "threads")[1]
    assert set(b["solution"]) <= set(a["solution"])


def test_env_threads_default(monkeypatch):
    monkeypatch.setenv("FIXLAB_THREADS", "3")
    _, doc = run_json("solve", SPAWN_WRITE_EQS, "--solver", "immediate")
    assert doc["meta"]["workers"] == 3
    monkeypatch.setenv("FIXLAB_THREADS", "many")
    assert run("solve", SPAWN_WRITE_EQS)[0] == 2


def _save(tmp_path, name, *argv):
    code, text = run(*argv, "--out", "json")
    assert code == 0
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_compare_self_and_others(tmp_path):
    f = str(PROGRAMS.joinpath("workers4.toy"))
    seq = _save(tmp_path, "seq.json", "analyze", f)
    imm = _save(tmp_path, "imm.json", "analyze", f, "--solver", "immediate", "--workers", "4")
    code, doc = run_json("compare", seq, seq)
    assert code == 0 and doc["precision"]["equal"]["fraction"] == 1.0
    code, doc = run_json("compare", seq, imm, "--detail")
    fr = sum(doc["precision"][c]["fraction"] for c in ("equal", "more_precise", "less_precise", "incomparable"))
    assert fr == pytest.approx(1.0)
    code, text = run("compare", seq, imm)
    assert "equal" in text


def test_compare_mismatched(tmp_path):
    a = _save(tmp_path, "a.json", "solve", SPAWN_WRITE_EQS)
    b = _save(tmp_path, "b.json", "solve", str(SYSTEMS.joinpath("loop_widen.eqs")))
    assert run("compare", a, b)[0] == 2
    junk = tmp_path / "junk.json"
    junk.write_text("[1,2]")
    assert run("compare", a, str(junk))[0] == 2


def test_bench_repeat_rows(tmp_path):
    out_csv = tmp_path / "rows.csv"
    code, _ = run("bench", "--suite", SPAWN_WRITE_EQS, "--solvers", "seq,immediate", "--workers", "1,2",
                  "--repeat", "3", "--seed", "5", "--csv", str(out_csv))
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert list(rows[0]) == cli.BENCH_FIELDS
    # seq runs once per repeat at 1 worker; immediate at 1 and 2 workers
    assert len(rows) == 3 + 3 * 2
    assert all(r["verified"] == "True" for r in rows)
    keyed = {}
    for r in rows:
        keyed.setdefault((r["solver"], r["workers"]), []).append(r["run_index"])
    assert all(sorted(v) == ["0", "1", "2"] for v in keyed.values())


def test_bench_directory_json(tmp_path):
    (tmp_path / "a.eqs").write_text(SYSTEMS.joinpath("flat_consts.eqs").read_text())
    (tmp_path / "b.toy").write_text(program_text("calls"))
    code, doc = run_json("bench", "--suite", str(tmp_path), "--solvers", "seq,independent", "--workers", "1",
                         "--demand", "threads,none")
    assert code == 0
    files = {r["file"] for r in doc["rows"]}
    assert len(files) == 2
    toy_demands = {r["demand"] for r in doc["rows"] if r["file"].endswith(".toy")}
    assert toy_demands == {"threads", "none"}
    assert all(r["speedup"] == 1.0 or r["speedup"] > 0 for r in doc["rows"])


def test_bench_bad_suite():
    assert run("bench", "--suite", "/nonexistent")[0] == 2
    assert run("bench", "--suite", SPAWN_WRITE_EQS, "--solvers", "magic")[0] == 2


def test_generate_roundtrip(tmp_path):
    out = tmp_path / "s.eqs"
    code, _ = run("generate", "--seed", "3", "--components", "2", "--chain-length", "5", "-o", str(out))
    assert code == 0
    code, doc = run_json("solve", str(out))
    assert code == 0 and doc["meta"]["lattice"] == "interval"


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "fixlab", "solve", SPAWN_WRITE_EQS], capture_output=True, text=True)
    assert r.returncode == 0
    assert "g = [0,42]" in r.stdout
