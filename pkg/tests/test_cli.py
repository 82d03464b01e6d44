import csv
import json

import numpy as np
import pytest

from lacunary_cantor import cli

ARTUR = {"epsilon": 0.2, "c": 0.03240966796875, "d": 4}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def run(tmp_path, command, cfg, out="out", *extra):
    path = write(tmp_path, f"{command}.json", cfg)
    return cli.main([command, "--config", path, "--out", str(tmp_path / out), *extra])


def test_unknown_key_is_config_error(tmp_path):
    assert run(tmp_path, "construct", {"seed": 0, "colour": "red"}) == cli.EXIT_CONFIG
    assert run(tmp_path, "construct", {"seed": 0, "construct": {"speed": 1}}) == cli.EXIT_CONFIG


def test_seed_is_mandatory(tmp_path):
    assert run(tmp_path, "invariants", {}) == cli.EXIT_CONFIG
    assert run(tmp_path, "invariants", {"invariants": {"trials": 5}}, "o", "--seed", "3") == 0


def test_rotation_rejected(tmp_path, capsys):
    cfg = {"seed": 0, "blaschke": {"origin_multiplicity": 1}}
    assert run(tmp_path, "invariants", cfg) == cli.EXIT_GATE
    assert "not a rotation" in capsys.readouterr().err


def test_enforced_gate_names_first_inequality(tmp_path, capsys):
    cfg = {"seed": 0, "construct": {"artur": ARTUR}}
    assert run(tmp_path, "construct", cfg) == cli.EXIT_GATE
    assert "FirstInequalityN" in capsys.readouterr().err


def test_summable_schedule_out_of_scope(tmp_path, capsys):
    cfg = {"seed": 0, "schedule": {"kind": "geometric", "ratio": 0.5, "length": 3000},
           "construct": {"artur": ARTUR, "gate": "report"}}
    assert run(tmp_path, "construct", cfg) == cli.EXIT_GATE
    assert "out of scope" in capsys.readouterr().err


def test_power_gauge_rejected_for_optimality(tmp_path):
    assert run(tmp_path, "optimality", {"seed": 0}) == cli.EXIT_GATE


def test_dimension_rejects_shallow_dump(tmp_path):
    dump = tmp_path / "dump"
    dump.mkdir()
    (dump / "summary.json").write_text(json.dumps({"generations": [{}, {}]}))
    (dump / "points.csv").write_text("turn\n0.1\n0.2\n")
    cfg = {"seed": 0, "dimension": {"input": str(dump)}}
    assert run(tmp_path, "dimension", cfg) == cli.EXIT_CONSTRUCTION


def test_dimension_synthetic_sources(tmp_path):
    assert run(tmp_path, "dimension", {"seed": 0, "dimension": {"source": "middle_thirds"}},
               "mt") == 0
    s = json.loads((tmp_path / "mt" / "summary.json").read_text())
    assert s["box_dimension"]["slope"] == pytest.approx(np.log(2) / np.log(3), abs=0.05)
    assert (tmp_path / "mt" / "box_counts.png").exists()
    rows = (tmp_path / "mt" / "box_counts.dat").read_text().splitlines()
    assert rows[0].startswith("#") and len(rows[1].split()) == 2


def test_fmt_uses_seventeen_digits():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert float(cli.fmt(np.pi)) == np.pi
    assert cli.fmt(3) == "3" and cli.fmt(True) == "true"


def test_overrides_beat_config(tmp_path):
    cfg = cli.load_config(write(tmp_path, "c.json", {"seed": 1, "depth": 2}), "construct",
                          {"depth": 3, "seed": None, "horizon": None, "tolerance": None})
    assert cfg["depth"] == 3 and cfg["seed"] == 1 and cfg["horizon"] == 2000


def test_invariants_bundle(tmp_path):
    cfg = {"seed": 0, "invariants": {"trials": 30}}
    assert run(tmp_path, "invariants", cfg) == 0
    with open(tmp_path / "out" / "checks.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["name"] for r in rows} >= {"expansion", "corollary_oscillation", "schwarz"}
    assert all(r["status"] == "pass" for r in rows)
