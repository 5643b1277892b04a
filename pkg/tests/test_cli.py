import json

import numpy as np
import pytest

from poisson_sparse.cli import EXIT_DOMAIN, EXIT_IO, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def files(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 1, (40, 12))
    (tmp_path / "m.json").write_text(json.dumps({"base_rates": [1.0] * 40, "matrix": a.tolist()}))
    w = np.zeros(12)
    w[[2, 5]] = [2.0, 1.0]
    np.savetxt(tmp_path / "y.csv", rng.poisson(1 + a @ w), fmt="%d")
    (tmp_path / "one.json").write_text(json.dumps({"base_rates": [1.0], "matrix": [[1.0]]}))
    (tmp_path / "y1.csv").write_text("3\n")
    return tmp_path


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "tightness" in out and "bounds-report" in out


def test_solve_stdout(files, capsys):
    code = main(["solve", str(files / "one.json"), str(files / "y1.csv"), "--loss", "poisson",
                 "--s", "10"])
    assert code == EXIT_OK
    assert float(capsys.readouterr().out.strip()) == pytest.approx(2.0, abs=1e-6)


def test_solve_modes(files, tmp_path):
    out = tmp_path / "w.csv"
    code = main(["solve", str(files / "m.json"), str(files / "y.csv"), "--loss", "rlasso",
                 "--s", "3", "--mode", "eq", "--out", str(out)])
    assert code == EXIT_OK
    assert np.loadtxt(out).sum() == pytest.approx(3.0)


def test_bounds_table_order(files, capsys):
    code = main(["bounds", str(files / "m.json"), "--k", "2", "--s", "3", "--zeta", "0.1",
                 "--gamma-k", "0.05"])
    assert code == EXIT_OK
    keys = [line.split(":")[0] for line in capsys.readouterr().out.splitlines()]
    assert keys[:6] == ["kappa", "tau", "nu_n", "delta", "theorem1_value", "fano_value"]


def test_bounds_fano_json(files, capsys):
    code = main(["bounds", str(files / "m.json"), "--k", "9", "--s", "3", "--gamma-k", "0.05",
                 "--fano", "--json"])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["fano_value"] > 0 and doc["fano_I_ok"]


def test_exit_codes(files, tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["solve", str(files / "m.json"), str(files / "y.csv"), "--s", "-1"]) == EXIT_USAGE
    assert main(["solve", str(tmp_path / "missing.json"), str(files / "y.csv"), "--s", "1"]) == EXIT_IO
    (tmp_path / "bad.json").write_text(json.dumps({"schema_version": 1, "experiment": "nope"}))
    assert main(["run", str(tmp_path / "bad.json")]) == EXIT_USAGE
    (tmp_path / "broken.json").write_text("{")
    assert main(["run", str(tmp_path / "broken.json")]) == EXIT_IO
    # infeasible lower-bound regime (k < 9)
    assert main(["bounds", str(files / "m.json"), "--k", "3", "--s", "3", "--gamma-k", "0.1",
                 "--fano"]) == EXIT_DOMAIN
    # zero base rate with zero counts: the default start has rate 0
    (tmp_path / "z.json").write_text(json.dumps({"base_rates": [0.0], "matrix": [[0.0]]}))
    (tmp_path / "y0.csv").write_text("1\n")
    assert main(["solve", str(tmp_path / "z.json"), str(tmp_path / "y0.csv"), "--s", "1"]) == EXIT_DOMAIN


def test_run(tmp_path, capsys):
    cfg = {"schema_version": 1, "experiment": "bernstein-check", "trials": 3,
           "output_dir": str(tmp_path / "out")}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["run", str(tmp_path / "c.json"), "--workers", "1"]) == EXIT_OK
    assert (tmp_path / "out" / "summary.json").exists()
    out = capsys.readouterr().out
    assert "trials_csv" in out
