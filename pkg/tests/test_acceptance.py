"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. Criterion 10 needs the
Card (1993) extract; point ``HSICX_CARD_CSV`` at it or place it at
``data/card.csv``, otherwise the criterion is skipped as unverifiable.
"""

import csv
import os
from pathlib import Path

import numpy as np
import pytest

from hsicx.cli import main
from hsicx.civ import fit_joint_civ, fit_residualized_civ
from hsicx.dataset import Dataset
from hsicx.estimators import FitConfig, fit_2sls, fit_hsic_x, fit_hsic_x_pen, fit_ols, select_lambda
from hsicx.exceptions import SingularSystemError
from hsicx.funclass import LinearInBasis, Mlp, poly_bump_basis
from hsicx.indtest import hsic_gamma_test, hsic_permutation_test
from hsicx.inference import anderson_rubin_test, confidence_region_hsic
from hsicx.kernels import gaussian, hsic_biased, hsic_grad_residuals, kernel_matrix
from hsicx.optimize import objective_grad, objective_value
from hsicx.simulate import (
    CivExample,
    InterventionSpec,
    NonAdditiveZ,
    integrated_mse,
    intervene,
    make_dg,
    make_onedim,
    oos_loss,
    simulate,
)

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def _report(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return _report


def _triple_sum(K, L):
    n = K.shape[0]
    t1 = np.einsum("ij,ij->", K, L) / n**2
    t2 = K.sum() * L.sum() / n**4
    t3 = np.einsum("ij,iq->", K, L) / n**3
    return t1 + t2 - 2 * t3


def _triple_sum_loops(K, L):
    n = K.shape[0]
    t1 = t2k = t2l = t3 = 0.0
    for i in range(n):
        rk = K[i].sum()
        rl = L[i].sum()
        t3 += rk * rl
        t2k += rk
        t2l += rl
        for j in range(n):
            t1 += K[i, j] * L[i, j]
    return t1 / n**2 + t2k * t2l / n**4 - 2 * t3 / n**3


def test_criterion_01_hsic_oracle(report):
    rng = np.random.default_rng(101)
    worst = 0.0
    for inst in range(100):
        n = int(rng.integers(2, 51))
        r, z = rng.normal(size=n), rng.normal(size=(n, int(rng.integers(1, 4))))
        K = kernel_matrix(r, gaussian(float(rng.uniform(0.3, 3))))
        L = kernel_matrix(z, gaussian(float(rng.uniform(0.3, 3))))
        oracle = _triple_sum_loops(K, L) if inst < 10 else _triple_sum(K, L)
        worst = max(worst, abs(hsic_biased(K, L) - oracle))
    report(1, worst < 1e-10, f"max |trace form - triple sum| = {worst:.2e} over 100 instances (n <= 50)")


def _central_fd(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h * max(1.0, abs(x[k]))
        g[k] = (f(x + e) - f(x - e)) / (2 * e[k])
    return g


def _rel_err(g, fd):
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))


def test_criterion_02_gradients(report):
    rng = np.random.default_rng(202)
    worst = {"residuals": 0.0, "linear": 0.0, "mlp": 0.0}
    for inst in range(100):
        n, d = int(rng.integers(10, 31)), int(rng.integers(1, 3))
        X, z = rng.normal(size=(n, d)), rng.normal(size=n)
        y = X[:, 0] + rng.normal(size=n)
        L = kernel_matrix(z, gaussian(1.0))
        spec = gaussian(float(rng.uniform(0.5, 2.0)))
        lam = float(rng.choice([0.0, 0.3]))

        r = rng.normal(size=n)
        g = hsic_grad_residuals(r, L, spec)
        fd = _central_fd(lambda v: hsic_biased(kernel_matrix(v, spec), L), r)
        worst["residuals"] = max(worst["residuals"], _rel_err(g, fd))

        fc = LinearInBasis() if inst % 2 == 0 else LinearInBasis(poly_bump_basis())
        Xl = X[:, :1]
        theta = rng.normal(size=fc.n_params(1)) * 0.5
        g = objective_grad(theta, Xl, y, L, fc, spec, lam)
        fd = _central_fd(lambda t: objective_value(t, Xl, y, L, fc, spec, lam), theta)
        worst["linear"] = max(worst["linear"], _rel_err(g, fd))

        mlp = Mlp(input_dim=d, hidden=(5,), intercept=bool(inst % 2))
        theta = mlp.init_params(rng, d) * 0.5
        g = objective_grad(theta, X, y, L, mlp, spec, lam)
        fd = _central_fd(lambda t: objective_value(t, X, y, L, mlp, spec, lam), theta)
        worst["mlp"] = max(worst["mlp"], _rel_err(g, fd))
    ok = all(v < 1e-5 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(2, ok, f"max relative error vs central differences: {detail}")


def test_criterion_03_test_level(report):
    rng = np.random.default_rng(303)
    reps, n = 500, 300
    rej_gamma = rej_perm = 0
    for rep in range(reps):
        r, z = rng.normal(size=n), rng.normal(size=n)
        rej_gamma += hsic_gamma_test(r, z, alpha=0.05).reject
        rej_perm += hsic_permutation_test(r, z, B=199, seed=rep, alpha=0.05).reject
    rg, rp = rej_gamma / reps, rej_perm / reps
    ok = 0.02 <= rg <= 0.09 and 0.02 <= rp <= 0.09
    report(3, ok, f"rejection rate at alpha=0.05: gamma {rg:.3f}, permutation {rp:.3f} (500 reps, n=300)")


def test_criterion_04_consistency(report):
    spec = make_onedim(1.0, "gaussian", "lin")
    errs = {}
    for n in (200, 2000):
        errs[n] = float(
            np.median([abs(fit_hsic_x(simulate(spec, n, s).data, cfg=FitConfig(seed=s)).theta[0] + 2) for s in range(10)])
        )
    ok = errs[2000] < 0.15 and errs[2000] < errs[200]
    report(4, ok, f"median |theta - (-2)|: n=200 {errs[200]:.4f}, n=2000 {errs[2000]:.4f}")


def test_criterion_05_binary_nonlinear(report):
    basis = poly_bump_basis()
    fc = LinearInBasis(basis)
    mse = {"HSIC-X": [], "OLS": [], "2SLS": []}
    tsls_errors = 0
    for s in range(10):
        spec = make_onedim(0.0, "binary", "nonlin", seed=s)
        data = simulate(spec, 1000, s).data
        mse["HSIC-X"].append(integrated_mse(fit_hsic_x(data, fc, FitConfig(seed=s)), spec, seed=10_000 + s))
        mse["OLS"].append(integrated_mse(fit_ols(data, fc), spec, seed=10_000 + s))
        try:
            mse["2SLS"].append(integrated_mse(fit_2sls(data, basis, basis), spec, seed=10_000 + s))
        except SingularSystemError:
            # a failed estimator ranks below every finite one
            tsls_errors += 1
            mse["2SLS"].append(np.inf)
    med = {k: float(np.median(v)) for k, v in mse.items()}
    ok = med["HSIC-X"] < med["OLS"] < med["2SLS"]
    report(
        5,
        ok,
        f"median integrated MSE: HSIC-X {med['HSIC-X']:.3f}, OLS {med['OLS']:.3f}, "
        f"2SLS {med['2SLS']:.3f} ({tsls_errors}/10 first-stage singular)",
    )


def _within(sample, target, k=3.0):
    mean = float(sample.mean())
    se = float(sample.std(ddof=1) / np.sqrt(sample.size))
    return abs(mean - target) <= k * se, mean, se


def test_criterion_06_moment_fixtures(report):
    n = 1_000_000
    checks = []
    sim = simulate(NonAdditiveZ(), n, 606)
    z, u = sim.data.Z[:, 0], sim.hidden("U")
    ex, ey = sim.hidden("eps_X"), sim.hidden("eps_Y")
    for tau in (0.5, 1.0):
        k = u + tau * z * u + tau * ex + ey
        ok, m, se = _within(z**2 * k**2, 2 + 4 * tau**2)
        checks.append((ok, f"E[Z^2K^2] tau={tau}: {m:.3f} vs {2 + 4 * tau**2:.3f} (se {se:.3f})"))
        # product of two sample means: delta-method standard error
        a, b = z**2, k**2
        prod = a.mean() * b.mean()
        se_p = np.sqrt((b.mean() ** 2 * a.var() + a.mean() ** 2 * b.var() + 2 * a.mean() * b.mean() * np.cov(a, b)[0, 1]) / n)
        target = 2 + 2 * tau**2
        checks.append((abs(prod - target) <= 3 * se_p, f"E[Z^2]E[K^2] tau={tau}: {prod:.3f} vs {target:.3f} (se {se_p:.3f})"))
    sim = simulate(CivExample(), n, 607)
    z, x, w = sim.data.Z[:, 0], sim.data.X[:, 0], sim.data.W[:, 0]
    u, ey = sim.hidden("U"), sim.hidden("eps_Y")
    for t1, t2 in ((0.5, 1.0), (1.0, 0.5)):
        k = u + ey + t1 * x + t2 * w
        target = 12 + 114 * t1**2 + 30 * t2**2
        ok, m, se = _within(z**2 * k**2, target)
        checks.append((ok, f"CIV E[Z^2K^2] tau=({t1},{t2}): {m:.2f} vs {target:.2f} (se {se:.2f})"))
    report(6, all(c[0] for c in checks), "; ".join(c[1] for c in checks))


def test_criterion_07_invariance(report):
    spec = make_dg(0.5, "lin")
    n = 100_000
    causal = {}
    for k, i in enumerate((0.5, 1.0, 2.0, 3.0, 3.99)):
        causal[i] = oos_loss(spec.f0, intervene(spec, InterventionSpec({"i": i})), n, seed=700 + k, return_se=True)
    base, base_se = causal[0.5]
    invariant = all(abs(m - base) <= 3 * np.hypot(se, base_se) for m, se in causal.values())
    ols = fit_ols(simulate(spec, 10_000, 77).data)
    lo = oos_loss(ols, spec, n, seed=710)
    hi = oos_loss(ols, intervene(spec, InterventionSpec({"i": 3.99})), n, seed=711)
    losses = ", ".join(f"i={i}: {m:.4f}" for i, (m, _) in causal.items())
    report(7, invariant and hi > 1.1 * lo, f"causal {losses}; OLS i=0.5 {lo:.4f} vs i=3.99 {hi:.4f} (ratio {hi / lo:.2f})")


def test_criterion_08_coverage(report):
    spec = make_onedim(1.0, "gaussian", "lin")
    theta0 = np.array([[-2.0]])
    hsic_cover = ar_cover = 0
    for s in range(100):
        data = simulate(spec, 500, 800 + s).data
        # the region contains theta0 exactly when theta0 itself is accepted
        region = confidence_region_hsic(data, grid=theta0, alpha=0.05, method="permutation", B=199, seed=s)
        hsic_cover += region.contains(theta0[0])
        ar_cover += anderson_rubin_test(data, theta0[0], alpha=0.05).pvalue >= 0.05
    ok = hsic_cover >= 88 and ar_cover >= 91
    report(8, ok, f"coverage of theta0: HSIC permutation {hsic_cover}/100, Anderson-Rubin {ar_cover}/100")


def test_criterion_09_lambda_selection(report):
    top = max(FitConfig().lambda_grid)
    unconf = [select_lambda(simulate(make_onedim(1.0, "gaussian", "lin", confounded=False), 1000, s).data,
                            cfg=FitConfig(seed=s))[0] for s in range(10)]
    conf = [select_lambda(simulate(make_onedim(1.0, "gaussian", "lin"), 1000, s).data,
                          cfg=FitConfig(seed=s))[0] for s in range(10)]
    n_top = sum(lam == top for lam in unconf)
    n_smaller = sum(lam < top for lam in conf)
    report(9, n_top >= 9 and n_smaller >= 9,
           f"unconfounded: grid max in {n_top}/10 (lambdas {unconf}); confounded: smaller in {n_smaller}/10 (lambdas {conf})")


def _card_path():
    env = os.environ.get("HSICX_CARD_CSV")
    if env and Path(env).is_file():
        return Path(env)
    local = Path(__file__).resolve().parents[1] / "data" / "card.csv"
    return local if local.is_file() else None


def test_criterion_10_card(report, tmp_path, capsys):
    path = _card_path()
    if path is None:
        with capsys.disabled():
            print("\nCRITERION 10: SKIP | Card data not found (set HSICX_CARD_CSV); unverifiable")
        pytest.skip("Card data absent; criterion unverifiable")
    out = tmp_path / "card.csv"
    code = main(["card", "--data", str(path), "--out", str(out)])
    rows = {r["method"]: float(r["estimate"]) for r in csv.DictReader(open(out))}
    ok = (
        code == 0
        and abs(rows["OLS"] - 0.072) <= 0.001
        and abs(rows["2SLS"] - 0.142) <= 0.005
        and 0.097 <= rows["HSIC-X"] <= 0.208
    )
    report(10, ok, f"OLS {rows['OLS']:.4f}, 2SLS {rows['2SLS']:.4f}, HSIC-X {rows['HSIC-X']:.4f}")


def _run_twice(tmp_path, argv, out_name):
    blobs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir(exist_ok=True)
        args = [a.replace("{dir}", str(d)) for a in argv]
        assert main(args) == 0, argv
        blobs.append((d / out_name).read_bytes())
    return blobs[0] == blobs[1]


def test_criterion_11_determinism(report, tmp_path):
    data_path = tmp_path / "d.csv"
    main(["simulate", "--model", "onedim", "--n", "300", "--seed", "5", "--out", str(data_path)])
    civ_path = tmp_path / "civ.csv"
    main(["simulate", "--model", "civ", "--n", "300", "--seed", "5", "--out", str(civ_path)])
    commands = {
        "simulate": (["simulate", "--model", "dg", "--n", "500", "--seed", "3", "--out", "{dir}/s.csv"], "s.csv"),
        "fit hsicx": (["fit", "--data", str(data_path), "--method", "hsicx", "--seed", "3", "--out", "{dir}/f.json"], "f.json"),
        "fit hsicx-pen": (["fit", "--data", str(data_path), "--method", "hsicx-pen", "--max-cycles", "30", "--out", "{dir}/f.json"], "f.json"),
        "fit civ-joint": (["fit", "--data", str(civ_path), "--method", "civ-joint", "--max-cycles", "30", "--out", "{dir}/f.json"], "f.json"),
        "test": (["test", "--data", str(data_path), "--test", "hsic-perm", "--theta", "-2", "--out", "{dir}/t.json"], "t.json"),
        "region": (["region", "--data", str(data_path), "--test", "hsic-perm", "--grid-range", "-3", "-1", "--points", "5", "--out", "{dir}/r.csv"], "r.csv"),
        "experiment": (["experiment", "--id", "fig1", "--scale", "0.02", "--reps", "1", "--jobs", "2", "--out-dir", "{dir}"], "fig1_runs.csv"),
    }
    results = {name: _run_twice(tmp_path, argv, out) for name, (argv, out) in commands.items()}

    sim = simulate(make_onedim(1.0, "gaussian", "lin"), 400, 9)
    cfg = FitConfig(seed=9, max_cycles=40)
    fits = {
        "fit_hsic_x": lambda: fit_hsic_x(sim.data, cfg=cfg).theta,
        "fit_hsic_x mlp": lambda: fit_hsic_x(sim.data, Mlp(hidden=(8,)), cfg).theta,
        "fit_hsic_x_pen": lambda: fit_hsic_x_pen(sim.data, cfg=FitConfig(seed=9, max_cycles=40, lam=0.5)).theta,
        "residualized civ": lambda: fit_residualized_civ(simulate(CivExample(), 300, 1).data, cfg=cfg).theta,
        "joint civ": lambda: fit_joint_civ(simulate(CivExample(), 300, 1).data, cfg=cfg).theta,
    }
    for name, fn in fits.items():
        results[name] = np.array_equal(fn(), fn())
    bad = [k for k, v in results.items() if not v]
    report(11, not bad, f"{len(results)} commands/fits bit-identical" if not bad else f"differences in {bad}")
