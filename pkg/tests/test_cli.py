import csv
import json

import numpy as np
import pytest

from surveyopt.cli import main


@pytest.fixture
def daycare_csv(tmp_path):
    r = np.random.default_rng(8)
    x = r.standard_normal((300, 36))
    y = x[:, 0] + 0.5 * x[:, 1] + r.standard_normal(300)
    path = tmp_path / "pre.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{j}" for j in range(36)])
        for yi, xi in zip(y, x):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])
    return path


def _design(csv_path, out, *extra):
    return main(["design", "--data", str(csv_path), "--outcome", "y", "--cost", "daycare",
                 "--grid", "500:4000:50", "--threads", "1", "--out", str(out), *extra])


def test_design_writes_outputs(daycare_csv, tmp_path, capsys):
    out = tmp_path / "o"
    assert _design(daycare_csv, out, "--reference-n", "1330") == 0
    for m in ("oga", "lasso", "post-lasso"):
        sel = json.loads((out / f"selection_{m}.json").read_text())
        assert {"n", "selected", "criterion", "rmse", "cost", "cost_over_budget", "path"} <= set(sel)
        assert sel["cost_over_budget"] <= 1.0
    rows = list(csv.DictReader(open(out / "comparison.csv")))
    assert [r["method"] for r in rows] == ["oga", "lasso", "post-lasso"]
    report = json.loads((out / "report.json").read_text())
    assert report["manifest"]["config"]["grid"] == "500:4000:50"
    assert len(report["selections"]["oga"]["path"]) >= 1
    assert "method" in capsys.readouterr().out


def test_design_grid_size(daycare_csv, tmp_path):
    out = tmp_path / "o"
    assert _design(daycare_csv, out, "--method", "oga") == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["selections"]["oga"]["n"] in range(500, 4001, 50)
    assert len(range(500, 4001, 50)) == 71


def test_design_forced(daycare_csv, tmp_path):
    out = tmp_path / "o"
    assert _design(daycare_csv, out, "--force", "x30", "--method", "oga,post-lasso") == 0
    for m in ("oga", "post-lasso"):
        sel = json.loads((out / f"selection_{m}.json").read_text())
        assert "x30" in sel["selected"]


def test_design_reruns_identical(daycare_csv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _design(daycare_csv, a, "--method", "oga") == 0
    assert _design(daycare_csv, b, "--method", "oga") == 0
    for name in ("report.json", "comparison.csv", "selection_oga.json"):
        ra = (a / name).read_text().replace(str(a), "")
        rb = (b / name).read_text().replace(str(b), "")
        assert ra == rb


def test_infeasible_budget_exit(daycare_csv, tmp_path):
    assert _design(daycare_csv, tmp_path / "o", "--budget", "1000") == 3


def test_eqb_requires_target(daycare_csv, tmp_path):
    args = ["eqb", "--data", str(daycare_csv), "--outcome", "y", "--cost", "daycare",
            "--grid", "500:4000:50"]
    assert main(args) == 2
    assert main(args + ["--reference-n", "1330", "--method", "oga", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "eqb.json").read_text())["methods"]
    assert rows[0]["relative_eqb"] < 1.0


def test_missing_inputs_exit_2(tmp_path):
    assert main(["design", "--outcome", "y", "--cost", "daycare"]) == 2
    assert main(["design", "--data", str(tmp_path / "nope.csv"), "--outcome", "y", "--cost", "daycare"]) == 2
    assert main(["nonsense"]) == 2


def test_power(capsys):
    assert main(["power", "--beta", "0", "--n", "400"]) == 0
    assert json.loads(capsys.readouterr().out)["power"] == pytest.approx(0.05, abs=1e-12)
    assert main(["power", "--beta", "0.28", "--n", "400"]) == 0
    assert json.loads(capsys.readouterr().out)["power"] == pytest.approx(0.80, abs=0.005)
    assert main(["power", "--beta", "0.28", "--n", "400", "--dbar", "1.1"]) == 2


def test_cost_preset_and_eval(tmp_path, capsys):
    path = tmp_path / "m.json"
    assert main(["cost", "preset", "--name", "daycare", "--out", str(path)]) == 0
    assert json.loads(path.read_text())
    assert main(["cost", "eval", "--cost", str(path), "--n", "1330"]) == 0
    from_file = json.loads(capsys.readouterr().out)
    assert main(["cost", "eval", "--cost", "daycare", "--n", "1330"]) == 0
    assert json.loads(capsys.readouterr().out) == from_file
    assert from_file["cost_over_budget"] == pytest.approx(1.0092, abs=5e-4)
    assert main(["cost", "eval", "--cost", "daycare", "--n", "10", "--items", "99"]) == 2


def _simulate(out, *extra):
    return main(["simulate", "--spec", "lin-sparse", "--kappa", "0,1", "--reps", "3", "--seed", "5",
                 "--grid", "500:4000:100", "--no-eqb", "--method", "oga", "--out", str(out), *extra])


def test_simulate_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _simulate(a, "--threads", "1") == 0
    assert _simulate(b, "--threads", "2") == 0
    assert (a / "simulation.csv").read_bytes() == (b / "simulation.csv").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    rows = list(csv.DictReader(open(a / "simulation.csv")))
    assert [r["scale"] for r in rows] == ["0.0", "1.0"]


def test_simulate_bad_spec(tmp_path):
    assert _simulate(tmp_path, "--spec", "cubic") == 2
