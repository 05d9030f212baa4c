from __future__ import annotations

import csv
import json

import pytest

from m1queue import __version__
from m1queue.cli import CONTINUITY_FIELDS, run
from m1queue.manyserver import FcltRow
from m1queue.pathio import load_path, save_path
from m1queue.paths import CadlagPath

from .conftest import ramp


@pytest.fixture
def files(tmp_path):
    x = CadlagPath.step(2.0, 0.0, [(1.0, 1.0)])
    paths = {
        "x": x,
        "xn": ramp(64),
        "xT": CadlagPath.step(2.0, 0.0, [(2.0, 1.0)]),
    }
    out = {}
    for k, p in paths.items():
        out[k] = tmp_path / f"{k}.json"
        save_path(p, out[k])
    out["dir"] = tmp_path
    return out


def test_m1_dist_identity(files, capsys):
    assert run(["m1-dist", str(files["x"]), str(files["x"]), "--mesh", "1e-3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("estimate,") and float(lines[0].split(",")[1]) <= 1e-3
    assert lines[1] == "mesh,0.001"


def test_m1_dist_writes_reps(files, capsys):
    ra, rb = files["dir"] / "ra.json", files["dir"] / "rb.json"
    code = run(["m1-dist", str(files["x"]), str(files["xn"]), "--rep-a", str(ra), "--rep-b", str(rb)])
    assert code == 0
    assert json.loads(ra.read_text())["knots"] and json.loads(rb.read_text())["knots"]


def test_solve_map_zero_drift(files):
    y = files["dir"] / "y.json"
    assert run(["solve-map", str(files["x"]), "--drift", "zero", "--step", "1e-3", "-o", str(y)]) == 0
    assert json.loads(y.read_text()) == json.loads(files["x"].read_text())
    assert load_path(y) == load_path(files["x"])


def test_canon_rep(files, capsys):
    assert run(["canon-rep", str(files["x"])]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["T"] == 2.0 and len(rep["flat_spots"]) == 2


def test_regularize_report(files):
    out = files["dir"] / "report.json"
    assert run(["regularize", str(files["x"]), str(files["xn"]), "--eps", "0.9", "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert {"bounds", "rep", "phi"} <= set(rep)
    assert rep["bounds"]["sup_slope"] <= rep["bounds"]["slope_cap"] * (1 + 1e-9)


def test_regularize_jump_at_horizon(files, capsys):
    assert run(["regularize", str(files["xT"]), str(files["xT"]), "--eps", "0.9"]) == 1
    assert "unsupported: jump at horizon" in capsys.readouterr().err


def test_simulate_seed_env(files, monkeypatch):
    a, b = files["dir"] / "a.json", files["dir"] / "b.json"
    args = ["simulate", "--n", "50", "--T", "1"]
    monkeypatch.setenv("M1QUEUE_SEED", "11")
    assert run(args + ["-o", str(a)]) == 0
    monkeypatch.delenv("M1QUEUE_SEED")
    assert run(args + ["--seed", "11", "-o", str(b)]) == 0
    assert a.read_text() == b.read_text()
    trace = json.loads(a.read_text())
    c = trace["counts"]
    assert c["arrivals"] - c["departures"] - c["abandonments"] + 50 == trace["Q"]["nodes"][-1][1]


def test_bad_seed_env(monkeypatch, capsys):
    monkeypatch.setenv("M1QUEUE_SEED", "abc")
    assert run(["simulate", "--n", "50", "--T", "1"]) == 1
    assert "M1QUEUE_SEED" in capsys.readouterr().err


def test_fclt_csv_header(files):
    cfg = files["dir"] / "exp.json"
    cfg.write_text(json.dumps({"ns": [50], "reps": 500, "T": 1.0, "driver_step": 0.05, "step": 0.01}))
    out = files["dir"] / "r.csv"
    assert run(["fclt-experiment", "--config", str(cfg), "-o", str(out), "--seed", "2"]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == FcltRow.CSV_FIELDS
    assert rows[0] == "n,ks,fwlln_sup,qv_sn,qv_ln,reps,seed".split(",")
    assert len(rows) == 2 and rows[1][0] == "50" and rows[1][-1] == "2"


def test_continuity_csv(files, capsys):
    code = run(["continuity-experiment", str(files["x"]), str(files["xn"]), "--mesh", "1e-2"])
    assert code == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert tuple(rows[0]) == CONTINUITY_FIELDS and len(rows) == 2


def test_help_lists_columns(capsys):
    assert run(["fclt-experiment", "--help"]) == 0
    assert ",".join(FcltRow.CSV_FIELDS) in capsys.readouterr().out


def test_usage_errors(capsys):
    assert run(["no-such-command"]) == 2
    assert run([]) == 2
    assert run(["m1-dist", "only-one.json"]) == 2


def test_missing_file(capsys):
    assert run(["canon-rep", "/nonexistent/x.json"]) == 1


def test_version(capsys):
    assert run(["--version"]) == 0
    assert capsys.readouterr().out.strip() == f"m1queue {__version__}"
