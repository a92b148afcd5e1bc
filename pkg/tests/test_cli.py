import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from macrobell.bell import bell_ratio
from macrobell.cli import RunConfig, UsageError, build_parser, render_table, run, write_table

GOLDEN = Path(__file__).parent / "golden"
COMMANDS = ["bell", "scan-alpha", "scan-sigma-max", "homodyne", "sigma0-cutoff", "lhv-suite"]


def invoke(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# ----------------------------------------------------------------- help


@pytest.mark.parametrize("command", [None] + COMMANDS)
def test_help_golden(capsys, command):
    recorded = (GOLDEN / "PYTHON_VERSION").read_text().strip()
    if recorded != "%d.%d" % sys.version_info[:2]:
        pytest.skip(f"help text recorded with Python {recorded}")
    argv = ([command] if command else []) + ["--help"]
    code, out, _ = invoke(capsys, *argv)
    assert code == 0
    assert out == (GOLDEN / f"help_{command or 'main'}.txt").read_text()


@pytest.mark.parametrize("command", COMMANDS)
def test_help_lists_units(capsys, command):
    _, out, _ = invoke(capsys, command, "--help")
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for action in sub.choices[command]._actions:
        if action.dest in ("help", "output", "format"):
            continue
        assert "[" in action.help and "]" in action.help, action.dest


def test_version(capsys):
    code, out, _ = invoke(capsys, "--version")
    assert code == 0 and out.startswith("macrobell ")


# -------------------------------------------------------------- commands


def test_bell_json(capsys, standard_angles):
    code, out, _ = invoke(capsys, "bell", "--alpha", "4")
    assert code == 0
    doc = json.loads(out)
    assert doc["data"][0]["s"] == bell_ratio(1.1, 4.0, 0.0, standard_angles).s
    assert doc["meta"]["truncations"] == {"n_pc": 10, "outcome_trunc_a": 76, "outcome_trunc_b": 76}
    assert doc["meta"]["config"]["command"] == "bell"


def test_bell_vacuum(capsys):
    code, out, _ = invoke(capsys, "bell", "--r0", "0", "--alpha", "0", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert float(rows[0]["s"]) == 1.0


def test_scan_alpha_csv(capsys):
    code, out, _ = invoke(capsys, "scan-alpha", "--alphas", "2,4")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "alpha,s"
    assert [float(v.split(",")[0]) for v in lines[1:]] == [2.0, 4.0]
    assert float(lines[2].split(",")[1]) == bell_ratio(1.1, 4.0).s


def test_scan_alpha_range(capsys):
    code, out, _ = invoke(capsys, "scan-alpha", "--alpha-range", "2:4:3")
    assert code == 0
    assert [float(line.split(",")[0]) for line in out.splitlines()[1:]] == [2.0, 3.0, 4.0]


def test_scan_alpha_exclusive_flags(capsys):
    code, _, err = invoke(capsys, "scan-alpha", "--alphas", "1", "--alpha-range", "1:2:2")
    assert code == 1 and "not allowed" in err


def test_scan_sigma_max(capsys):
    code, out, _ = invoke(capsys, "scan-sigma-max", "--alphas", "5,10")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["alpha"] for r in rows] == ["5.0", "10.0"]
    assert 0 < float(rows[0]["sigma_max"]) < float(rows[1]["sigma_max"])


def test_homodyne(capsys):
    code, out, _ = invoke(capsys, "homodyne", "--sigma0", "0.1")
    assert code == 0
    assert json.loads(out)["data"][0]["s"] > 1


def test_sigma0_cutoff(capsys):
    code, out, _ = invoke(capsys, "sigma0-cutoff", "--tol", "1e-3")
    assert code == 0
    assert 0.2 < json.loads(out)["data"][0]["sigma0_max"] < 0.35


def test_lhv_suite(capsys):
    code, out, _ = invoke(capsys, "lhv-suite", "--trials", "20", "--small-trials", "20")
    assert code == 0
    data = {r["suite"]: r for r in json.loads(out)["data"]}
    assert data["local"]["max_s"] <= 1
    assert data["macroscopic"]["max_excess"] <= 0
    assert data["sigma-equals-M"]["max_s"] > 1


# ---------------------------------------------------------- exit status


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["bell", "--bogus"],
    ["bell", "--alpha", "-1"],
    ["bell", "--alpha", "nan"],
    ["bell", "--theta", "inf"],
    ["bell", "--alpha", "2", "--outcome-trunc", "5"],
    ["scan-alpha", "--alphas", "3,1"],
    ["scan-alpha", "--alphas", "x"],
    ["scan-alpha", "--alpha-range", "1:2"],
    ["homodyne", "--nodes", "4"],
    ["bell", "--tail-tol", "0.5"],
])
def test_usage_errors_exit_one(capsys, argv):
    code, out, err = invoke(capsys, *argv)
    assert code == 1
    assert out == ""
    assert err


@pytest.mark.parametrize("argv", [
    ["scan-sigma-max", "--r0", "0", "--alphas", "4"],
    ["scan-sigma-max", "--alphas", "2"],
    ["sigma0-cutoff", "--r0", "0"],
])
def test_uncertified_results_exit_two(capsys, argv):
    code, out, err = invoke(capsys, *argv)
    assert code == 2
    assert out == ""
    assert "numerical failure" in err


def test_unwritable_output_exit_one(capsys, tmp_path):
    target = tmp_path / "missing" / "out.csv"
    code, _, err = invoke(capsys, "scan-alpha", "--alphas", "1", "-o", str(target))
    assert code == 1
    assert str(target) in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "macrobell", "bell", "--alpha", "1", "--format", "csv"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("alpha,beta,sigma,")


# --------------------------------------------------------------- output


def test_output_byte_identical(tmp_path):
    path = tmp_path / "a.json"
    blobs = []
    for _ in range(2):
        assert run(["bell", "--alpha", "3", "--sigma", "0.5", "-o", str(path)]) == 0
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_write_table_empty_csv(tmp_path):
    path = tmp_path / "empty.csv"
    write_table([], "csv", str(path), columns=["alpha", "s"])
    assert path.read_text() == "alpha,s\n"


def test_write_table_empty_json(tmp_path):
    path = tmp_path / "empty.json"
    write_table([], "json", str(path), meta={"k": 1})
    assert json.loads(path.read_text()) == {"meta": {"k": 1}, "data": []}


def test_render_csv_round_trips_floats():
    vals = [0.1, 1 / 3, 1e-300, 2.5e10]
    text = render_table([{"x": v} for v in vals], "csv")
    assert [float(line) for line in text.splitlines()[1:]] == vals


def test_render_json_rejects_nan_as_number():
    text = render_table([{"x": math.nan}], "json")
    assert json.loads(text)["data"][0]["x"] == "nan"


def test_render_unknown_format():
    with pytest.raises(ValueError):
        render_table([], "xml")


def test_stdout_write(capsys):
    write_table([{"a": 1}], "csv")
    assert capsys.readouterr().out == "a\n1\n"


# --------------------------------------------------------------- config


def test_config_round_trip(capsys):
    run(["bell", "--alpha", "2.5", "--sigma", "0.3"])
    meta = json.loads(capsys.readouterr().out)["meta"]
    cfg = RunConfig.from_dict(meta["config"])
    assert cfg.to_dict() == meta["config"]
    assert cfg.params["alpha"] == 2.5


def test_config_rejects_unknown_keys():
    with pytest.raises(UsageError):
        RunConfig.from_dict({"command": "bell", "params": {}, "extra": 1})
    with pytest.raises(UsageError):
        RunConfig.from_dict({"command": "bell", "params": {"nope": 1}})
    with pytest.raises(UsageError):
        RunConfig.from_dict({"command": "nope", "params": {}})
