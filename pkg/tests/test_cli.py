import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from lpminkowski.bodies import HPolytope
from lpminkowski.cli import EXIT_CHECK_FAILED, EXIT_DEGENERATE, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, main
from lpminkowski.measures import DiscreteMeasure, lp_measure
from lpminkowski.random_bodies import random_polytope, rng_for


@pytest.fixture
def cube_file(tmp_path):
    path = tmp_path / "cube.json"
    path.write_text(HPolytope.cube(3).to_json())
    return path


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_measure_of_cube_has_total_24(cube_file, tmp_path, capsys, p):
    out = tmp_path / "mu.json"
    assert main(["measure", str(cube_file), "--p", str(p), "--out", str(out)]) == EXIT_OK
    mu = DiscreteMeasure.from_dict(json.loads(out.read_text()))
    assert mu.total == pytest.approx(24)
    assert "total mass 24.0" in capsys.readouterr().out


def test_malformed_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 3,\n "normals" [[1, 0, 0]]}')
    assert main(["measure", str(bad)]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert "parse-error" in err and "line 2" in err and "column" in err


def test_missing_file(tmp_path, capsys):
    assert main(["measure", str(tmp_path / "nope.json")]) == EXIT_ERROR
    assert "error" in capsys.readouterr().err


def test_solve_cube_measure(tmp_path, cube_file):
    mu_path = tmp_path / "mu.json"
    main(["measure", str(cube_file), "--p", "0", "--out", str(mu_path)])
    out = tmp_path / "run"
    assert main(["solve", str(mu_path), "--p", "0", "--out", str(out)]) == EXIT_OK
    body = HPolytope.from_dict(json.loads((out / "body.json").read_text()))
    assert np.abs(body.offsets - 1).max() < 1e-5
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "converged"
    assert _read_csv(out / "trace.csv")[0].keys() == {"iteration", "objective", "residual", "min_offset"}


def test_solve_hemisphere_rejected(tmp_path, capsys):
    d = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [0.6, 0.8, 0]])
    path = tmp_path / "hemi.json"
    path.write_text(DiscreteMeasure(3, d, np.ones(4)).to_json())
    assert main(["solve", str(path), "--p", "0", "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert "hemisphere-violation" in capsys.readouterr().err


def test_solve_tiny_atom_rejected(tmp_path, capsys):
    u = np.vstack([np.eye(3), -np.eye(3)])
    path = tmp_path / "tiny.json"
    path.write_text(DiscreteMeasure(3, u, np.r_[np.full(5, 4.0), 1e-13]).to_json())
    assert main(["solve", str(path), "--p", "0", "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert "invalid-parameters" in capsys.readouterr().err


def test_solve_degenerate_exit_code(tmp_path):
    u = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [math.cos(4.6), math.sin(4.6)],
                  [math.cos(4.8), math.sin(4.8)]])
    path = tmp_path / "conc.json"
    path.write_text(DiscreteMeasure(2, u, np.array([10.0, 10.0, 0.1, 0.1, 0.1])).to_json())
    out = tmp_path / "o"
    assert main(["solve", str(path), "--p", "0", "--out", str(out)]) == EXIT_DEGENERATE
    assert "origin-to-boundary" in json.loads((out / "report.json").read_text())["degeneracyFlags"]


def test_solve_not_converged_exit_code(tmp_path):
    q = random_polytope(rng_for(1, 0), 3, 12)
    path = tmp_path / "mu.json"
    path.write_text(lp_measure(q, 0.5).to_json())
    out = tmp_path / "o"
    code = main(["solve", str(path), "--p", "0.5", "--tol", "1e-300", "--max-iter", "5", "--out", str(out)])
    assert code == EXIT_NOT_CONVERGED
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "not-converged"
    body = HPolytope.from_dict(report["terminalBody"])
    got = lp_measure(body, 0.5).masses
    assert np.max(np.abs(got - lp_measure(q, 0.5).masses) / got) < 1e-6


def test_experiment_construction_limit(tmp_path):
    out = tmp_path / "c"
    assert main(["experiment", "construction-limit", "--param", "caps=false", "--out", str(out)]) == EXIT_OK
    rows = [r for r in _read_csv(out / "construction.csv") if (r["n"], r["m"], r["p"]) == ("4", "2", "0.5")]
    assert abs(float(rows[-1]["phi"]) / 0.011814 - 1) < 1e-2
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["passed"] and all(c["passed"] for c in verdict["checks"])


def test_experiment_nonuniqueness(tmp_path):
    out = tmp_path / "nu"
    code = main(["experiment", "nonuniqueness", "--param", "factors=[1,2,4,8]", "--param", "count=3",
                 "--out", str(out)])
    rows = [r for r in _read_csv(out / "nonuniqueness.csv") if r["mode"] == "compress"]
    vals = [float(r["value"]) for r in rows]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    # four factors cannot reach the factor-two growth check
    assert code in (EXIT_OK, EXIT_CHECK_FAILED)


def test_experiment_failed_check_exit_code(tmp_path):
    code = main(["experiment", "nonuniqueness", "--param", "factors=[1,1.01]", "--param", "count=1",
                 "--out", str(tmp_path / "f")])
    assert code == EXIT_CHECK_FAILED


def test_experiment_spectrum(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["experiment", "spectrum", "--n", "3", "--p", "0", "--out", str(out)]) == EXIT_OK
    vals = [abs(float(r["computed"])) for r in _read_csv(out / "spectrum.csv")]
    assert min(vals) == pytest.approx(1, abs=5e-2)
    assert "PASS" in capsys.readouterr().out


def test_unknown_experiment(capsys):
    assert main(["experiment", "teleport"]) == EXIT_ERROR
    assert "unknown-experiment" in capsys.readouterr().err


def test_determinism_byte_identical(tmp_path):
    args = ["experiment", "identities", "--seed", "7", "--param", "count=10", "--param", "mahler_count=20"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    for name in ("identities.csv", "mahler.csv", "verdict.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    main(["experiment", "identities", "--seed", "8", "--param", "count=10", "--param", "mahler_count=20",
          "--out", str(tmp_path / "c")])
    assert (tmp_path / "a" / "identities.csv").read_bytes() != (tmp_path / "c" / "identities.csv").read_bytes()


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"parameters": {"ns": [2], "ps": [0.0]}}))
    out = tmp_path / "s"
    assert main(["experiment", "spectrum", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert {r["n"] for r in _read_csv(out / "spectrum.csv")} == {"2"}


def test_construct_and_spectrum_commands(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["construct", "--n", "4", "--m", "2", "--p", "0.5", "--out", str(out)]) == EXIT_OK
    rows = _read_csv(out)
    assert abs(float(rows[-1]["ratio"]) - 1) < 1e-3
    out2 = tmp_path / "sp.csv"
    assert main(["spectrum", "--n", "2", "--p", "1", "--out", str(out2)]) == EXIT_OK
    rows = _read_csv(out2)
    k1 = [float(r["computed"]) for r in rows if r["k"] == "1"]
    assert np.allclose(k1, 0, atol=1e-10)


def test_invalid_construction_parameters(capsys):
    assert main(["construct", "--n", "5", "--m", "2", "--p", "0.5"]) == EXIT_ERROR
    assert "invalid-parameters" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "lpminkowski", "construct", "--samples", "3"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "z_norm,phi,limit,ratio"
