"""Command-line interface: ``hsicx {simulate,fit,test,region,experiment,card}``.

Exit codes: 0 success, 2 invalid flags, 3 unreadable or invalid input,
4 order condition violated, 5 singular system, 6 numerical failure,
1 any other estimation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .civ import fit_joint_civ, fit_residualized_civ
from .dataset import Dataset, read_csv, write_csv
from .estimators import FitConfig, fit_2sls, fit_anchor, fit_hsic_x, fit_hsic_x_pen, fit_ols, select_lambda
from .exceptions import (
    HsicxError,
    InvalidInputError,
    InvalidParameterError,
    NumericalError,
    OrderConditionError,
    SingularSystemError,
)
from .funclass import LinearInBasis, Mlp, poly_bump_basis, radial_bump_basis, raw_basis
from .indtest import hsic_gamma_test, hsic_permutation_test
from .inference import (
    anderson_rubin_test,
    confidence_region_ar,
    confidence_region_hsic,
    default_grid,
    ols_standard_errors,
)
from .simulate import (
    DG,
    BinaryPoly,
    CivExample,
    IndepZ,
    NonAdditiveZ,
    NonReducible,
    integrated_mse,
    intervene,
    InterventionSpec,
    make_dg,
    make_multidim,
    make_onedim,
    oos_loss,
    simulate,
)

logger = logging.getLogger("hsicx")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_ORDER = 4
EXIT_SINGULAR = 5
EXIT_NUMERICAL = 6

METHODS = ("ols", "2sls", "anchor", "hsicx", "hsicx-pen", "civ-res", "civ-joint")
EXPERIMENTS = ("fig1", "fig2-nn", "multidim", "fig3-dg", "card")
FIG1_ALPHAS = (0.0, 0.5, 1.0, 1.5, 2.0)
DG_INDICES = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 3.99)


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ----------------------------------------------------------------------------
# flag types


def _nonneg_float(text):
    v = float(text)
    if not math.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {text}")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _unit_open(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _scale(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return v


def _lam(text):
    v = float(text)
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return v


def _dg_index(text):
    v = float(text)
    if not 0 < v < 4:
        raise argparse.ArgumentTypeError(f"must lie in (0, 4), got {text}")
    return v


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _points(text):
    """``"a:b,c:d"`` -> [[a, b], [c, d]]."""
    try:
        return [[float(v) for v in p.split(":")] for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected points like 0:1,2:3, got {text!r}") from None


# ----------------------------------------------------------------------------
# helpers


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if obj is None or isinstance(obj, (int, str)):
        return obj
    return str(obj)


def _dump_json(doc, path):
    text = json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load(path) -> Dataset:
    try:
        return read_csv(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_INPUT) from None


def _basis(kind, centers):
    if kind == "raw":
        return raw_basis()
    if kind == "polybump":
        return poly_bump_basis(None if centers is None else np.asarray(centers))
    if kind == "radial2d":
        if centers is None:
            raise CliError("--basis radial2d needs --centers x:y,...", EXIT_USAGE)
        return radial_bump_basis(np.asarray(centers))
    raise CliError(f"unknown basis {kind!r}", EXIT_USAGE)


def _function_class(args, d):
    if args.basis == "mlp":
        return Mlp(input_dim=d, hidden=(args.hidden,))
    return LinearInBasis(_basis(args.basis, args.centers))


def _config(args) -> FitConfig:
    return FitConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        alpha=args.alpha,
        max_restarts=args.max_restarts,
        max_cycles=args.max_cycles,
        lam=args.lam,
        seed=args.seed,
        kernel_z=args.kernel_z,
    )


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


# ----------------------------------------------------------------------------
# simulate


def _spec_from_args(args):
    model = args.model
    if model == "onedim":
        return make_onedim(args.alpha, args.zdist, args.f0, seed=args.seed, binary_coding=args.binary_coding)
    if model == "multidim":
        return make_multidim(args.dx, args.dz, seed=args.seed)
    if model == "dg":
        return make_dg(args.i, args.f0, seed=args.seed)
    return {
        "nonadditive": NonAdditiveZ,
        "binarypoly": BinaryPoly,
        "indepz": IndepZ,
        "nonreducible": NonReducible,
        "civ": CivExample,
    }[model]()


def cmd_simulate(args):
    sim = simulate(_spec_from_args(args), args.n, args.seed)
    try:
        write_csv(sim.data, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc.strerror}", EXIT_INPUT) from None
    print(f"wrote {sim.data.n} rows to {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# fit


def _result_doc(method, theta, intercept, pvalue, restarts, converged, cfg, seed, diagnostics=None, extra=None):
    doc = {
        "method": method,
        "theta": np.asarray(theta, dtype=float).tolist(),
        "intercept": float(intercept),
        "pvalue": pvalue,
        "restarts": int(restarts),
        "converged": bool(converged),
        "config": cfg,
        "seed": seed,
    }
    if diagnostics is not None:
        doc["diagnostics"] = diagnostics
    if extra:
        doc.update(extra)
    return doc


def run_fit(data: Dataset, args) -> dict:
    method = args.method
    cfg = _config(args)
    d = data.X.shape[1]
    if method == "ols":
        res = fit_ols(data, _function_class(args, d), cfg)
    elif method == "2sls":
        res = fit_2sls(data, _basis(args.basis, args.centers), _basis(args.instrument_basis, args.instrument_centers))
    elif method == "anchor":
        res = fit_anchor(data, args.gamma, _basis(args.basis, args.centers))
    elif method == "hsicx":
        res = fit_hsic_x(data, _function_class(args, d), cfg)
    elif method == "hsicx-pen":
        if args.auto_lambda:
            lam, res = select_lambda(data, _function_class(args, d), cfg)
            res.diagnostics["selected_lambda"] = lam
        else:
            res = fit_hsic_x_pen(data, _function_class(args, d), cfg)
    elif method == "civ-res":
        civ = fit_residualized_civ(data, _function_class(args, d), cfg)
        return _result_doc(
            method, civ.theta, civ.intercept, civ.pvalue, civ.fit.restarts, civ.fit.converged,
            cfg.to_dict(), args.seed, _diag(civ.fit.diagnostics) | civ.diagnostics,
        )
    else:
        civ = fit_joint_civ(data, _function_class(args, d), LinearInBasis(), cfg)
        return _result_doc(
            method, civ.theta, civ.intercept, civ.pvalue, civ.fit.restarts, civ.fit.converged,
            cfg.to_dict(), args.seed, _diag(civ.fit.diagnostics), {"gamma": civ.gamma.tolist()},
        )
    return _result_doc(
        method, res.theta, res.intercept, res.pvalue, res.restarts, res.converged,
        cfg.to_dict(), args.seed, _diag(res.diagnostics),
    )


def _diag(diagnostics):
    # the per-cycle bandwidth trace is long and uninformative in a result file
    return {k: v for k, v in diagnostics.items() if k != "bandwidths_r"}


def cmd_fit(args):
    data = _load(args.data)
    doc = run_fit(data, args)
    _dump_json(doc, args.out)
    theta = ", ".join(f"{v:.6g}" for v in doc["theta"])
    pv = doc["pvalue"]
    pv_text = "" if pv is None or (isinstance(pv, float) and math.isnan(pv)) else f"  p={pv:.4g}"
    print(f"{doc['method']}: theta=[{theta}] intercept={doc['intercept']:.6g}{pv_text}", file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


# ----------------------------------------------------------------------------
# test / region


def cmd_test(args):
    data = _load(args.data)
    theta = np.asarray(args.theta, dtype=float)
    if args.test == "ar":
        res = anderson_rubin_test(data, theta, _basis(args.basis, args.centers), _basis(args.instrument_basis, args.instrument_centers), args.alpha)
    else:
        r = data.Y - LinearInBasis(_basis(args.basis, args.centers)).evaluate(theta, data.X)
        if args.test == "hsic-gamma":
            res = hsic_gamma_test(r, data.Z, alpha=args.alpha)
        else:
            res = hsic_permutation_test(r, data.Z, B=args.B, seed=args.seed, alpha=args.alpha)
    doc = {"test": res.method, "statistic": res.statistic, "pvalue": res.pvalue, "alpha": res.alpha, "reject": res.reject}
    _dump_json(doc, args.out)
    return EXIT_OK


def _grid_from_args(args, data, fc):
    if args.grid is not None:
        if fc.n_params(data.X.shape[1]) == 1:
            return np.asarray(args.grid, dtype=float)[:, None]
        return np.asarray(args.grid, dtype=float).reshape(1, -1)
    if args.grid_range is not None:
        lo, hi = args.grid_range
        return np.linspace(lo, hi, args.points)[:, None]
    center = fit_hsic_x(data, fc, FitConfig(seed=args.seed)).theta if args.test != "ar" else fit_2sls(data, fc.basis).theta
    return default_grid(center, ols_standard_errors(data, fc), points=args.points)


def cmd_region(args):
    data = _load(args.data)
    fc = LinearInBasis(_basis(args.basis, args.centers))
    grid = _grid_from_args(args, data, fc)
    if args.test == "ar":
        region = confidence_region_ar(data, fc.basis, _basis(args.instrument_basis, args.instrument_centers), grid, args.alpha)
    else:
        method = "gamma" if args.test == "hsic-gamma" else "permutation"
        region = confidence_region_hsic(data, fc, grid, args.alpha, method, B=args.B, seed=args.seed)
    region.to_csv(args.out)
    for j, (lo, hi) in enumerate(region.intervals()):
        print(f"theta_{j + 1}: [{lo:.6g}, {hi:.6g}]")
    return EXIT_OK


# ----------------------------------------------------------------------------
# experiments


def _cell_seed(base, *keys):
    return int(np.random.SeedSequence([int(base), *[int(k) for k in keys]]).generate_state(1)[0])


def _scaled(value, scale):
    return max(1, int(round(value * scale)))


def _try(fn):
    try:
        return fn(), "ok"
    except HsicxError as exc:
        return float("nan"), f"error:{type(exc).__name__}"
    except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return float("nan"), f"error:{type(exc).__name__}"


def _fig1_cell(task):
    alpha, zdist, f0, rep, seed, n, nn = task
    spec = make_onedim(alpha, zdist, f0, seed=seed)
    data = simulate(spec, n, seed).data
    oracle_data = simulate(make_onedim(alpha, zdist, f0, seed=seed, confounded=False), n, seed).data
    cfg = FitConfig(seed=seed)
    rows = []
    if nn:
        fc = Mlp(input_dim=1, hidden=(64,))
        methods = {
            "OLS": lambda: fit_ols(data, fc, cfg),
            "HSIC-X": lambda: fit_hsic_x(data, fc, cfg),
            "HSIC-X-pen": lambda: select_lambda(data, fc, cfg)[1],
            "Oracle": lambda: fit_ols(oracle_data, fc, cfg),
        }
    else:
        basis = raw_basis() if f0 == "lin" else poly_bump_basis()
        fc = LinearInBasis(basis)
        theta0 = np.array([-2.0]) if f0 == "lin" else np.r_[1.5, -0.2, spec.weights]
        methods = {
            "OLS": lambda: fit_ols(data, fc),
            "2SLS": lambda: fit_2sls(data, basis, basis),
            "HSIC-X": lambda: fit_hsic_x(data, fc, cfg),
            "HSIC-Oracle": lambda: fit_hsic_x(data, fc, cfg, init=theta0),
            "Oracle": lambda: fit_ols(oracle_data, fc),
        }
    for name, fit in methods.items():
        mse, status = _try(lambda: integrated_mse(fit(), spec, seed=_cell_seed(seed, 99)))
        rows.append([f"alpha={alpha};z={zdist};f0={f0}", name, rep, mse, status])
    return rows


def _multidim_cell(task):
    d_x, d_z, rep, seed, n = task
    spec = make_multidim(d_x, d_z, seed=seed)
    data = simulate(spec, n, seed).data
    rows = []
    methods = {
        "OLS": lambda: fit_ols(data),
        "2SLS": lambda: fit_2sls(data),
        "HSIC-X": lambda: fit_hsic_x(data, cfg=FitConfig(seed=seed, kernel_z="gaussian")),
    }
    for name, fit in methods.items():
        mse, status = _try(lambda: integrated_mse(fit(), spec, seed=_cell_seed(seed, 99)))
        rows.append([f"dx={d_x};dz={d_z}", name, rep, mse, status])
    return rows


def _dg_cell(task):
    f0, rep, seed, n, n_test = task
    spec = make_dg(0.5, f0, seed=seed)
    data = simulate(spec, n, seed).data
    basis = raw_basis() if f0 == "lin" else radial_bump_basis(spec.centers)
    fc = LinearInBasis(basis)
    cfg = FitConfig(seed=seed, learning_rate=0.005)
    fits = {
        "HSIC-X-pen": lambda: select_lambda(data, fc, cfg)[1],
        "OLS": lambda: fit_ols(data, fc),
        "Anchor": lambda: fit_anchor(data, 100.0, basis),
        "Causal": lambda: spec.f0,
    }
    rows = []
    for name, fit in fits.items():
        predictor, status = _try(fit)
        for i in DG_INDICES:
            if status != "ok":
                rows.append([f"f0={f0};i={i}", name, rep, float("nan"), status])
                continue
            test_spec = intervene(spec, InterventionSpec({"i": i}))
            loss, st = _try(lambda: oos_loss(predictor, test_spec, n_test, _cell_seed(seed, 7, int(i * 100))))
            rows.append([f"f0={f0};i={i}", name, rep, loss, st])
    return rows


def _run_tasks(fn, tasks, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fn, tasks))
    else:
        results = [fn(t) for t in tasks]
    return [row for rows in results for row in rows]


def _summary(rows):
    groups: dict = {}
    for setting, method, _rep, value, status in rows:
        g = groups.setdefault((setting, method), {"values": [], "errors": 0})
        if status == "ok" and math.isfinite(value):
            g["values"].append(value)
        else:
            g["errors"] += 1
    out = []
    for (setting, method), g in groups.items():
        v = np.asarray(g["values"], dtype=float)
        if v.size:
            mean, med = float(v.mean()), float(np.median(v))
            half = 1.96 * float(v.std(ddof=1)) / math.sqrt(v.size) if v.size > 1 else float("nan")
        else:
            mean = med = half = float("nan")
        out.append([setting, method, v.size, g["errors"], mean, mean - half, mean + half, med])
    return out


def cmd_experiment(args):
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out_dir}: {exc.strerror}", EXIT_INPUT) from None
    exp, scale, seed = args.id, args.scale, args.seed
    if exp == "card":
        if args.card_csv is None:
            raise CliError("experiment card needs --card-csv", EXIT_USAGE)
        rows = run_card(args)
        _write_rows(out_dir / "card.csv", CARD_HEADER, rows)
        return EXIT_OK
    reps = _scaled(args.reps if args.reps else 10, scale)
    if exp in ("fig1", "fig2-nn"):
        nn = exp == "fig2-nn"
        n = _scaled(1000, scale)
        zdists = ("binary", "gaussian")
        f0s = ("nonlin",) if nn else ("lin", "nonlin")
        tasks = [
            (a, zd, f0, rep, _cell_seed(seed, k, rep), n, nn)
            for k, (a, zd, f0) in enumerate((a, zd, f0) for a in FIG1_ALPHAS for zd in zdists for f0 in f0s)
            for rep in range(reps)
        ]
        rows = _run_tasks(_fig1_cell, tasks, args.jobs)
        value = "mse"
    elif exp == "multidim":
        n = _scaled(1000, scale)
        settings = [(dx, dz) for dx in (3, 5) for dz in range(1, dx + 2)]
        tasks = [(dx, dz, rep, _cell_seed(seed, k, rep), n) for k, (dx, dz) in enumerate(settings) for rep in range(reps)]
        rows = _run_tasks(_multidim_cell, tasks, args.jobs)
        value = "mse"
    else:
        n = _scaled(3000, scale)
        n_test = _scaled(10000, scale)
        tasks = [(f0, rep, _cell_seed(seed, k, rep), n, n_test) for k, f0 in enumerate(("lin", "nonlin")) for rep in range(reps)]
        rows = _run_tasks(_dg_cell, tasks, args.jobs)
        value = "loss"
    _write_rows(out_dir / f"{exp}_runs.csv", ["setting", "method", "replication", value, "status"], rows)
    _write_rows(
        out_dir / f"{exp}_summary.csv",
        ["setting", "method", "n_ok", "n_failed", f"mean_{value}", "ci_low", "ci_high", f"median_{value}"],
        _summary(rows),
    )
    print(f"wrote {len(rows)} rows to {out_dir / f'{exp}_runs.csv'}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# Card


CARD_HEADER = ["method", "estimate", "lower", "upper"]


def _card_data(args) -> tuple[Dataset, list[str]]:
    try:
        with open(args.card_csv, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            wanted = [args.y_col, args.x_col, args.z_col, *args.w_cols]
            missing = [c for c in wanted if c not in header]
            if missing:
                raise CliError(f"{args.card_csv}: missing columns {missing}; available: {header}", EXIT_INPUT)
            rows = []
            for rec in reader:
                try:
                    rows.append([float(rec[c]) for c in wanted])
                except (TypeError, ValueError):
                    continue  # rows with missing entries are dropped
    except OSError as exc:
        raise CliError(f"cannot read {args.card_csv}: {exc.strerror}", EXIT_INPUT) from None
    arr = np.asarray(rows, dtype=float)
    if arr.shape[0] < 10:
        raise CliError(f"{args.card_csv}: too few complete rows ({arr.shape[0]})", EXIT_INPUT)
    W = arr[:, 3:] if args.w_cols else None
    return Dataset(arr[:, 1], arr[:, 0], arr[:, 2], W), wanted


def run_card(args):
    data, _ = _card_data(args)
    W = data.W if data.W is not None else np.zeros((data.n, 0))
    XW = np.hstack([data.X, W])
    ols = fit_ols(Dataset(XW, data.Y, data.Z))
    ols_se = ols_standard_errors(Dataset(XW, data.Y, data.Z))[0]
    tsls = fit_2sls(Dataset(XW, data.Y, np.hstack([data.Z, W])))
    cfg = FitConfig(seed=args.seed, alpha=args.alpha)
    if data.W is not None:
        hsic = fit_residualized_civ(data, LinearInBasis(), cfg)
        inst = data.Z - hsic.q1.predict(data.W)
    else:
        hsic = fit_hsic_x(data, LinearInBasis(), cfg)
        inst = data.Z
    # residualize Y on W so the W-effect does not enter the test residuals
    if data.W is not None:
        Wc = np.column_stack([np.ones(data.n), W])
        beta_w = np.linalg.lstsq(Wc, data.Y - hsic.theta[0] * data.X[:, 0], rcond=None)[0]
        y_adj = data.Y - Wc @ beta_w + beta_w[0]
    else:
        y_adj = data.Y
    grid = np.linspace(args.grid_range[0], args.grid_range[1], args.points)
    region = confidence_region_hsic(Dataset(data.X, y_adj, inst), LinearInBasis(), grid, args.alpha)
    ar = confidence_region_ar(data, grid=grid, alpha=args.alpha, covariates=data.W is not None)
    (h_lo, h_hi), = region.intervals()
    (a_lo, a_hi), = ar.intervals()
    z = 1.959963984540054
    return [
        ["OLS", ols.theta[0], ols.theta[0] - z * ols_se, ols.theta[0] + z * ols_se],
        ["2SLS", tsls.theta[0], a_lo, a_hi],
        ["HSIC-X", hsic.theta[0], h_lo, h_hi],
    ]


def cmd_card(args):
    args.card_csv = args.data
    rows = run_card(args)
    _write_rows(args.out, CARD_HEADER, rows)
    for row in rows:
        print(f"{row[0]:8s} {row[1]:.4f} [{row[2]:.4f}, {row[3]:.4f}]")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def _add_fit_flags(p):
    p.add_argument("--basis", choices=("raw", "polybump", "radial2d", "mlp"), default="raw")
    p.add_argument("--centers", type=str, default=None, help="bump centers: 1,2,3 (polybump) or 0:1,2:3 (radial2d)")
    p.add_argument("--hidden", type=_pos_int, default=64, help="hidden units for --basis mlp")
    p.add_argument("--instrument-basis", choices=("raw", "polybump", "radial2d"), default="raw")
    p.add_argument("--instrument-centers", type=str, default=None)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=_pos_int, default=256)
    p.add_argument("--alpha", type=_unit_open, default=0.05, help="test level")
    p.add_argument("--max-restarts", type=_pos_int, default=3)
    p.add_argument("--max-cycles", type=_pos_int, default=200)
    p.add_argument("--lam", type=_lam, default=0.0, help="penalty weight for hsicx-pen")
    p.add_argument("--auto-lambda", action="store_true", help="choose the penalty weight by the independence test")
    p.add_argument("--gamma", type=_nonneg_float, default=100.0, help="anchor regression gamma")
    p.add_argument("--kernel-z", choices=("auto", "gaussian", "delta"), default="auto")
    p.add_argument("--seed", type=int, default=0)


def _parse_centers(args):
    for name in ("centers", "instrument_centers"):
        text = getattr(args, name, None)
        if text is None:
            continue
        basis = args.basis if name == "centers" else args.instrument_basis
        setattr(args, name, _points(text) if basis == "radial2d" else _floats(text))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsicx", description="Instrumental-variable estimation with HSIC.")
    parser.add_argument("--version", action="version", version=f"hsicx {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset from a built-in model")
    p.add_argument("--model", choices=("onedim", "multidim", "dg", "nonadditive", "binarypoly", "indepz", "nonreducible", "civ"), default="onedim")
    p.add_argument("--alpha", type=_nonneg_float, default=1.0, help="instrument strength (onedim)")
    p.add_argument("--zdist", choices=("binary", "gaussian"), default="gaussian")
    p.add_argument("--f0", choices=("lin", "nonlin"), default="lin")
    p.add_argument("--binary-coding", choices=("01", "centered"), default="01")
    p.add_argument("--dx", type=_pos_int, default=3)
    p.add_argument("--dz", type=_pos_int, default=3)
    p.add_argument("--i", type=_dg_index, default=0.5, help="DG intervention index in (0, 4)")
    p.add_argument("--n", type=_pos_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit an estimator to a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    _add_fit_flags(p)
    p.add_argument("--out", default=None, help="JSON output path (default: standard output)")
    p.set_defaults(func=cmd_fit)

    for name, func, help_text in (
        ("test", cmd_test, "test a single parameter value"),
        ("region", cmd_region, "confidence region by test inversion"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True)
        p.add_argument("--test", choices=("hsic-gamma", "hsic-perm", "ar"), default="hsic-gamma")
        p.add_argument("--basis", choices=("raw", "polybump", "radial2d"), default="raw")
        p.add_argument("--centers", type=str, default=None)
        p.add_argument("--instrument-basis", choices=("raw", "polybump", "radial2d"), default="raw")
        p.add_argument("--instrument-centers", type=str, default=None)
        p.add_argument("--alpha", type=_unit_open, default=0.05)
        p.add_argument("--B", type=_pos_int, default=199, help="permutations")
        p.add_argument("--seed", type=int, default=0)
        if name == "test":
            p.add_argument("--theta", type=_floats, required=True)
            p.add_argument("--out", default=None)
        else:
            p.add_argument("--grid", type=_floats, default=None, help="explicit 1-D grid values")
            p.add_argument("--grid-range", type=float, nargs=2, default=None, metavar=("LO", "HI"))
            p.add_argument("--points", type=_pos_int, default=200)
            p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("experiment", help="reproduce a simulation study as CSV tables")
    p.add_argument("--id", choices=EXPERIMENTS, required=True)
    p.add_argument("--reps", type=_pos_int, default=None, help="replications before scaling (default 10)")
    p.add_argument("--scale", type=_scale, default=0.5, help="shrinks n and replications")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_pos_int, default=1)
    p.add_argument("--out-dir", required=True)
    _add_card_flags(p, required=False)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("card", help="returns-to-schooling analysis on a user-supplied CSV")
    p.add_argument("--data", required=True)
    _add_card_flags(p, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_card)
    return parser


def _add_card_flags(p, required):
    if not required:
        p.add_argument("--card-csv", default=None)
    p.add_argument("--y-col", default="lwage")
    p.add_argument("--x-col", default="educ")
    p.add_argument("--z-col", default="nearc4")
    p.add_argument("--w-cols", type=lambda s: [c for c in s.split(",") if c], default=["exper", "expersq", "black", "south", "smsa"])
    p.add_argument("--grid-range", type=float, nargs=2, default=(-0.1, 0.4), metavar=("LO", "HI"))
    p.add_argument("--points", type=_pos_int, default=501)
    if required or not any(a.dest == "alpha" for a in p._actions):
        p.add_argument("--alpha", type=_unit_open, default=0.05)


_EXIT_FOR = [
    (OrderConditionError, EXIT_ORDER),
    (SingularSystemError, EXIT_SINGULAR),
    (NumericalError, EXIT_NUMERICAL),
    (InvalidInputError, EXIT_INPUT),
    (InvalidParameterError, EXIT_USAGE),
]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        _parse_centers(args)
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"hsicx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CliError as exc:
        print(f"hsicx: error: {exc}", file=sys.stderr)
        return exc.code
    except HsicxError as exc:
        for cls, code in _EXIT_FOR:
            if isinstance(exc, cls):
                break
        else:
            code = EXIT_ERROR
        print(f"hsicx: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
