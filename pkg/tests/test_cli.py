import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hsicx.cli import EXIT_INPUT, EXIT_ORDER, EXIT_USAGE, main
from hsicx.dataset import Dataset, read_csv, write_csv


def test_simulate_writes_rows_and_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--model", "onedim", "--alpha", "1", "--zdist", "gaussian", "--f0", "lin", "--n", "1000", "--seed", "7"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "x1,y,z1" and len(lines) == 1001
    assert read_csv(a).n == 1000


@pytest.mark.parametrize("model", ["multidim", "dg", "nonadditive", "binarypoly", "indepz", "nonreducible", "civ"])
def test_simulate_models(tmp_path, model):
    out = tmp_path / "d.csv"
    assert main(["simulate", "--model", model, "--n", "20", "--out", str(out)]) == 0
    assert read_csv(out).n == 20


def test_negative_alpha_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--alpha", "-1", "--n", "10", "--out", "x.csv"])
    assert info.value.code == EXIT_USAGE
    assert "--alpha" in capsys.readouterr().err


def _write(tmp_path, x, y, z, w=None):
    path = tmp_path / "data.csv"
    write_csv(Dataset(x, y, z, w), path)
    return str(path)


def test_fit_ols_recovers_slope(tmp_path):
    x = np.linspace(-1, 1, 50)
    path = _write(tmp_path, x, 2 * x, x)
    out = tmp_path / "r.json"
    assert main(["fit", "--data", path, "--method", "ols", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["theta"] == pytest.approx([2.0])
    assert set(doc) >= {"method", "theta", "intercept", "pvalue", "restarts", "converged", "config", "seed"}


def test_fit_hsicx_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    z = rng.normal(size=200)
    x = z + rng.normal(size=200)
    path = _write(tmp_path, x, -2 * x + rng.normal(size=200), z)
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert main(["fit", "--data", path, "--method", "hsicx", "--seed", "7", "--max-cycles", "30", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["seed"] == 7


def test_fit_2sls_order_condition(tmp_path):
    x = np.random.default_rng(0).normal(size=40)
    path = _write(tmp_path, x, x, x)
    assert main(["fit", "--data", path, "--method", "2sls", "--basis", "polybump"]) == EXIT_ORDER


def test_fit_missing_file():
    assert main(["fit", "--data", "/nonexistent/d.csv", "--method", "ols"]) == EXIT_INPUT


@pytest.mark.parametrize("method", ["anchor", "hsicx-pen", "civ-res", "civ-joint"])
def test_fit_other_methods(tmp_path, method):
    rng = np.random.default_rng(1)
    n = 120
    w = rng.normal(size=n)
    z = w + rng.normal(size=n)
    x = z + rng.normal(size=n)
    path = _write(tmp_path, x, x + w + rng.normal(size=n), z, w)
    out = tmp_path / "r.json"
    assert main(["fit", "--data", path, "--method", method, "--max-cycles", "10", "--max-restarts", "1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["method"] == method and len(doc["theta"]) == 1
    if method == "civ-joint":
        assert len(doc["gamma"]) == 1


def test_test_and_region(tmp_path):
    path = tmp_path / "d.csv"
    main(["simulate", "--n", "300", "--seed", "1", "--out", str(path)])
    out = tmp_path / "t.json"
    assert main(["test", "--data", str(path), "--test", "ar", "--theta", "-2", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["test"] == "anderson-rubin"
    region = tmp_path / "r.csv"
    assert main(["region", "--data", str(path), "--test", "hsic-gamma", "--grid-range", "-3", "-1", "--points", "11", "--out", str(region)]) == 0
    rows = list(csv.reader(open(region)))
    assert rows[0] == ["theta_1", "pvalue", "accepted"] and len(rows) == 12


def test_experiment_smoke(tmp_path):
    assert main(["experiment", "--id", "fig3-dg", "--scale", "0.02", "--reps", "1", "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "fig3-dg_runs.csv")))
    assert rows[0] == ["setting", "method", "replication", "loss", "status"]
    # 2 functions x 4 methods x 8 intervention levels
    assert len(rows) == 1 + 2 * 4 * 8
    summary = list(csv.reader(open(tmp_path / "fig3-dg_summary.csv")))
    assert len(summary) == 1 + 2 * 4 * 8


def test_experiment_card_needs_csv(tmp_path):
    assert main(["experiment", "--id", "card", "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_card_missing_columns(tmp_path):
    path = tmp_path / "card.csv"
    path.write_text("lwage,educ\n1,2\n")
    assert main(["card", "--data", str(path), "--out", str(tmp_path / "o.csv")]) == EXIT_INPUT


def test_card_on_synthetic_data(tmp_path):
    rng = np.random.default_rng(0)
    n = 400
    exper = rng.uniform(0, 10, n)
    near = (rng.random(n) < 0.5).astype(float)
    u = rng.normal(size=n)
    educ = 12 + near + u + rng.normal(size=n)
    lwage = 0.1 * educ + 0.02 * exper + 0.3 * u + 0.2 * rng.normal(size=n)
    path = tmp_path / "card.csv"
    with open(path, "w") as fh:
        fh.write("lwage,educ,nearc4,exper\n")
        for row in zip(lwage, educ, near, exper):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    out = tmp_path / "o.csv"
    assert main(["card", "--data", str(path), "--w-cols", "exper", "--points", "51", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert [r[0] for r in rows] == ["method", "OLS", "2SLS", "HSIC-X"]


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hsicx.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "hsicx" in proc.stdout
