import json

import numpy as np
import pytest

from kinetic_brw import charfn
from kinetic_brw.cli import _points, main
from kinetic_brw.config import ConfigError, RunConfig, load_config
from kinetic_brw.io import read_csv

EVOLVE = {
    "kernel": {"name": "independent_uniform", "alpha": 1.0},
    "command": {"name": "evolve", "datum": {"kind": "gaussian", "variance": 1.0}, "times": [0.0, 0.5], "radii": [0.5, 1.0]},
    "seed": 7,
    "budgets": {"n_replicas": 2000, "cap": 100000},
}


def write(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def run(tmp_path, doc, sub, out="out", *extra):
    return main([sub, "--config", str(write(tmp_path, doc)), "--out", str(tmp_path / out), *extra])


def test_evolve_exit_zero_and_initial_datum(tmp_path):
    assert run(tmp_path, EVOLVE, "evolve") == 0
    cols, rows = read_csv(tmp_path / "out" / "points.csv")
    assert cols[:5] == ["t", "r", "o_hash", "re", "im"]
    phi0 = charfn.gaussian(1.0)
    at_zero = [row for row in rows if float(row[0]) == 0.0]
    points = _points(EVOLVE["command"])
    assert len(at_zero) == len(points)
    for row, p in zip(at_zero, points):
        assert row[2] == p.key() and complex(float(row[3]), float(row[4])) == phi0.at(p)
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["passed"] and summary["command"] == "evolve"


def test_csv_byte_identical_and_thread_invariant(tmp_path):
    assert run(tmp_path, EVOLVE, "evolve", "a", "--threads", "1") == 0
    assert run(tmp_path, EVOLVE, "evolve", "b", "--threads", "1") == 0
    assert run(tmp_path, EVOLVE, "evolve", "c", "--threads", "4") == 0
    a = (tmp_path / "a" / "points.csv").read_bytes()
    assert a == (tmp_path / "b" / "points.csv").read_bytes()
    assert a == (tmp_path / "c" / "points.csv").read_bytes()
    assert b"\r" not in a


def test_seed_override_changes_output(tmp_path):
    assert run(tmp_path, EVOLVE, "evolve", "a") == 0
    assert run(tmp_path, EVOLVE, "evolve", "b", "--seed", "8") == 0
    assert (tmp_path / "a" / "points.csv").read_bytes() != (tmp_path / "b" / "points.csv").read_bytes()


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("seed"),
    lambda d: d.update(seed=-1),
    lambda d: d.update(seed=True),
    lambda d: d.update(tolerances={"sigma_level": 5}),
    lambda d: d.update(budgets={"n_replicas": 0}),
    lambda d: d.update(extra=1),
    lambda d: d.update(kernel={"alpha": 1.0}),
    lambda d: d["command"].update(times=[-1.0]),
])
def test_config_errors_exit_two(tmp_path, mutate):
    doc = json.loads(json.dumps(EVOLVE))
    mutate(doc)
    assert run(tmp_path, doc, "evolve") == 2


def test_malformed_json_and_wrong_command(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["evolve", "--config", str(p)]) == 2
    assert run(tmp_path, EVOLVE, "embed") == 2
    assert main(["no-such-command"]) == 2


def test_m_identically_two_exits_one(tmp_path):
    doc = {"kernel": {"name": "config", "atoms": [{"r1": 1.0, "r2": 1.0}], "rotations": "identity"}, "command": {"name": "validate-kernel"}, "seed": 1,
           "budgets": {"n_mc": 1000}}
    assert run(tmp_path, doc, "validate-kernel") == 1


def test_cap_exceeded_exits_one(tmp_path):
    doc = json.loads(json.dumps(EVOLVE))
    doc["command"]["times"] = [5.0]
    doc["budgets"] = {"n_replicas": 50, "cap": 10}
    assert run(tmp_path, doc, "evolve") == 1


def test_stationary_file_round_trip(tmp_path):
    stat = {"kernel": {"name": "config", "atoms": [{"r1": 0.25, "r2": 0.25}], "rotations": "identity"},
            "command": {"name": "stationary", "kind": "stable", "alpha": 0.5, "sigma": 1.0, "radii": [0.5, 1.0], "n_samples": 20000},
            "seed": 3, "budgets": {"n_big": 6, "n_W": 16, "n_mc": 500}}
    assert run(tmp_path, stat, "stationary", "s") == 0
    sol = tmp_path / "s" / "solution.json"
    ev = {**EVOLVE, "kernel": stat["kernel"],
          "command": {"name": "evolve", "datum": {"kind": "stationary_file", "path": str(sol)}, "times": [0.7], "radii": [0.5, 1.0]}}
    assert run(tmp_path, ev, "evolve", "e") == 0
    _, rows = read_csv(tmp_path / "e" / "points.csv")
    # a stationary datum does not move under the flow
    for row in rows:
        r = float(row[1])
        assert abs(float(row[3]) - np.exp(-np.sqrt(r))) < 1e-12


def test_embed_and_martingale_small(tmp_path):
    emb = {"kernel": {"name": "independent_uniform", "alpha": 1.0},
           "command": {"name": "embed", "mode": "shared", "n": 3, "n_points": 20, "law": {"kind": "gaussian"}},
           "seed": 5}
    assert run(tmp_path, emb, "embed", "e") == 0
    mart = {"kernel": {"name": "independent_uniform", "alpha": 1.0},
            "command": {"name": "martingale", "alpha": 1.0, "n_max": 4, "check_n": [1, 4]},
            "seed": 5, "budgets": {"n_replicas": 500}}
    assert run(tmp_path, mart, "martingale", "m") == 0
    cols, rows = read_csv(tmp_path / "m" / "w_paths.csv")
    assert cols == ["seed", "n", "W"] and len(rows) > 0


def test_run_config_round_trip():
    cfg = RunConfig.from_dict(EVOLVE)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_load_config_overrides(tmp_path):
    cfg = load_config(write(tmp_path, EVOLVE), seed=11, output="x", command="evolve")
    assert cfg.seed == 11 and cfg.output == "x"
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, EVOLVE), command="stationary")
