"""Fit procedures: OLS, 2SLS, anchor regression, HSIC-X and HSIC-X-pen."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .exceptions import (
    InvalidInputError,
    InvalidParameterError,
    OrderConditionError,
    SingularSystemError,
)
from .funclass import BasisSpec, LinearInBasis, raw_basis
from .indtest import hsic_gamma_test, residual_kernel
from .kernels import (
    KernelSpec,
    _grad_from_centered,
    center_gram,
    gaussian,
    instrument_kernel,
    kernel_matrix,
    median_heuristic,
)
from .optimize import BatchSampler, adam_init, adam_step

logger = logging.getLogger(__name__)

__all__ = [
    "FitConfig",
    "FitResult",
    "bias_correct",
    "fit_ols",
    "fit_2sls",
    "fit_anchor",
    "fit_hsic_x",
    "fit_hsic_x_pen",
    "select_lambda",
    "InstrumentKernel",
    "DEFAULT_LAMBDA_GRID",
]

DEFAULT_LAMBDA_GRID = (0.999, 0.99, 0.9, 0.5, 0.1, 0.01, 0.0)
# singular values below this fraction of the largest are treated as zero
_RCOND = 1e-4
_MAX_COND = 1e10
_MEDIAN_ROWS = 500


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the HSIC-X / HSIC-X-pen optimization loop.

    ``kernel_z`` is ``"auto"`` (Delta for discrete instruments, Gaussian
    otherwise), ``"gaussian"``, ``"delta"`` or a :class:`KernelSpec`;
    ``bandwidth_r`` is ``"median"`` (recomputed every cycle) or a fixed float.
    ``monitor_size`` caps the number of rows used for the per-cycle objective
    and the median heuristics.
    """

    learning_rate: float = 0.01
    batch_size: int = 256
    steps_per_cycle: int = 10
    alpha: float = 0.05
    max_restarts: int = 3
    max_cycles: int = 200
    tol: float = 1e-6
    lam: float = 0.0
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    seed: int = 0
    kernel_z: object = "auto"
    bandwidth_r: object = "median"
    monitor_size: int = 500

    def __post_init__(self):
        checks = [
            (self.learning_rate > 0, "learning_rate must be positive"),
            (self.batch_size >= 2, "batch_size must be at least 2"),
            (self.steps_per_cycle >= 1, "steps_per_cycle must be at least 1"),
            (0 < self.alpha < 1, "alpha must lie in (0, 1)"),
            (self.max_restarts >= 1, "max_restarts must be at least 1"),
            (self.max_cycles >= 1, "max_cycles must be at least 1"),
            (self.tol >= 0, "tol must be non-negative"),
            (0 <= self.lam < 1, "lam must lie in [0, 1)"),
            (all(0 <= g < 1 for g in self.lambda_grid), "lambda_grid values must lie in [0, 1)"),
            (self.monitor_size >= 2, "monitor_size must be at least 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidParameterError(msg)
        object.__setattr__(self, "lambda_grid", tuple(float(g) for g in self.lambda_grid))

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.kernel_z, KernelSpec):
            d["kernel_z"] = {"kind": self.kernel_z.kind, "bandwidth": self.kernel_z.bandwidth}
        return d


@dataclass
class FitResult:
    """Fitted function ``x -> f_theta(x) + intercept`` plus diagnostics."""

    method: str
    fc: object
    theta: np.ndarray
    intercept: float
    pvalue: float = float("nan")
    restarts: int = 0
    converged: bool = True
    trajectory: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        return self.fc.evaluate(self.theta, X) + self.intercept

    def __call__(self, X) -> np.ndarray:
        return self.predict(X)


def bias_correct(fc, theta, data: Dataset) -> float:
    """Mean residual ``(1/n) sum (y_i - f_theta(x_i))``, used as the intercept."""
    return float(np.mean(data.Y - fc.evaluate(theta, data.X)))


# ----------------------------------------------------------------------------
# closed-form baselines


def _lstsq(A, b, diagnostics, tag):
    """Minimum-norm least squares for ``A x = b`` with a relative singular-value cutoff.

    Directions of the design that barely vary in the sample (for example bump
    features centered far outside the data) are left at zero instead of being
    fit to noise.
    """
    if A.shape[1] == 0:
        return np.zeros(0)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > _RCOND * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, dtype=bool)
    rank = int(keep.sum())
    if rank < A.shape[1]:
        diagnostics[f"{tag}_rank"] = rank
        logger.info("%s: design has numerical rank %d < %d", tag, rank, A.shape[1])
    return Vt[keep].T @ ((U[:, keep].T @ b) / s[keep])


def _varying(Phi):
    scale = np.maximum(np.abs(Phi).max(axis=0), 1.0)
    return Phi.std(axis=0) > 1e-12 * scale


def _ols_linear(fc, X, y, diagnostics):
    Phi = fc.features(X)
    if fc.intercept:
        Phi = Phi[:, :-1]
    keep = _varying(Phi)
    mu = Phi.mean(axis=0)
    coef = np.zeros(Phi.shape[1])
    coef[keep] = _lstsq(Phi[:, keep] - mu[keep], y - y.mean(), diagnostics, "ols")
    icpt = float(y.mean() - mu @ coef)
    if fc.intercept:
        return np.append(coef, icpt), 0.0
    return coef, icpt


def fit_ols(data: Dataset, fc=None, cfg: FitConfig | None = None) -> FitResult:
    """Least squares of Y on f(X): closed form for linear classes, Adam otherwise."""
    fc = LinearInBasis() if fc is None else fc
    diagnostics: dict = {}
    if fc.is_linear:
        theta, icpt = _ols_linear(fc, data.X, data.Y, diagnostics)
        if fc.intercept:
            icpt = bias_correct(fc, theta, data)
        return FitResult("ols", fc, theta, icpt, diagnostics=diagnostics)
    cfg = FitConfig() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed)
    theta = fc.init_params(rng, data.X.shape[1])
    run = _Optimizer(data.X, data.Y, None, fc, cfg, 1.0, rng).run(theta)
    return FitResult(
        "ols",
        fc,
        run.theta,
        bias_correct(fc, run.theta, data),
        converged=run.converged,
        trajectory=run.trajectory,
        diagnostics=diagnostics,
    )


def _first_stage_projection(P, diagnostics):
    """Projection matrix factor: returns Q with orthonormal columns spanning centered P."""
    Pc = P - P.mean(axis=0)
    U, s, _ = np.linalg.svd(Pc, full_matrices=False)
    rank = int(np.sum(s > s.max() * 1e-10)) if s.size and s.max() > 0 else 0
    if rank < P.shape[1]:
        diagnostics["first_stage_rank"] = rank
    return U[:, :rank]


def fit_2sls(data: Dataset, basis: BasisSpec | None = None, instrument_map: BasisSpec | None = None) -> FitResult:
    """Two-stage least squares with intercepts in both stages.

    Raises :class:`OrderConditionError` when there are fewer instrument features
    than regressor features and :class:`SingularSystemError` when the projected
    regressors are (numerically) collinear.
    """
    basis = raw_basis() if basis is None else basis
    instrument_map = raw_basis() if instrument_map is None else instrument_map
    fc = LinearInBasis(basis)
    Phi = fc.features(data.X)
    P = instrument_map(data.Z)
    if P.shape[1] < Phi.shape[1]:
        raise OrderConditionError(P.shape[1], Phi.shape[1])
    diagnostics: dict = {}
    keep = _varying(Phi)
    Phic = Phi[:, keep] - Phi[:, keep].mean(axis=0)
    yc = data.Y - data.Y.mean()
    Q = _first_stage_projection(P, diagnostics)
    Phi_hat = Q @ (Q.T @ Phic)
    M = Phi_hat.T @ Phic
    cond = np.linalg.cond(M) if M.size else 1.0
    diagnostics["second_stage_condition"] = float(cond)
    if not np.isfinite(cond) or cond > _MAX_COND:
        raise SingularSystemError("2SLS: projected regressors are collinear", float(cond))
    coef = np.zeros(Phi.shape[1])
    coef[keep] = np.linalg.solve(M, Phi_hat.T @ yc)
    return FitResult("2sls", fc, coef, bias_correct(fc, coef, data), diagnostics=diagnostics)


def fit_anchor(data: Dataset, gamma: float, basis: BasisSpec | None = None) -> FitResult:
    """Anchor regression with the instruments as anchors.

    Minimizes ``||(I - P)(Y - phi(X) b)||^2 + gamma ||P (Y - phi(X) b)||^2`` over
    ``b`` and an intercept, where P projects onto the span of ``(1, Z)``.
    """
    if gamma < 0:
        raise InvalidParameterError(f"anchor gamma must be non-negative, got {gamma}")
    fc = LinearInBasis(raw_basis() if basis is None else basis)
    diagnostics: dict = {}
    Phi = fc.features(data.X)
    keep = _varying(Phi)
    Q = _first_stage_projection(data.Z, diagnostics)
    shrink = 1.0 - np.sqrt(gamma)

    def transform(A):
        Ac = A - A.mean(axis=0)
        return Ac - shrink * (Q @ (Q.T @ Ac))

    coef = np.zeros(Phi.shape[1])
    coef[keep] = _lstsq(transform(Phi[:, keep]), transform(data.Y[:, None])[:, 0], diagnostics, "anchor")
    return FitResult("anchor", fc, coef, bias_correct(fc, coef, data), diagnostics=diagnostics)


# ----------------------------------------------------------------------------
# HSIC-X


class InstrumentKernel:
    """Product kernel over column blocks of the instruments, evaluated on row subsets."""

    def __init__(self, blocks, specs):
        self.blocks = [np.asarray(b) for b in blocks]
        self.specs = list(specs)

    @classmethod
    def resolve(cls, Z, kind, sample_idx):
        spec = kind if isinstance(kind, KernelSpec) else instrument_kernel(Z[sample_idx], kind)
        return cls([Z], [spec])

    def gram(self, idx=None) -> np.ndarray:
        out = None
        for block, spec in zip(self.blocks, self.specs):
            G = kernel_matrix(block if idx is None else block[idx], spec)
            out = G if out is None else out * G
        return out

    def describe(self):
        return [{"kind": s.kind, "bandwidth": s.bandwidth} for s in self.specs]


@dataclass
class _Run:
    theta: np.ndarray
    converged: bool
    trajectory: list
    bandwidths: list


class _Optimizer:
    """Inner loop shared by HSIC-X, HSIC-X-pen and MLP least squares.

    ``lam == 1`` optimizes plain mean squared error and needs no instruments.
    """

    def __init__(self, X, y, L, fc, cfg: FitConfig, lam: float, rng: np.random.Generator):
        self.X, self.y, self.L, self.fc, self.cfg, self.lam, self.rng = X, y, L, fc, cfg, lam, rng
        n = y.shape[0]
        if n > cfg.monitor_size:
            self.mon = np.sort(rng.choice(n, cfg.monitor_size, replace=False))
        else:
            self.mon = np.arange(n)
        self.Lc_mon = None if lam >= 1 else center_gram(L[np.ix_(self.mon, self.mon)])

    def _spec_r(self, r):
        if self.cfg.bandwidth_r == "median":
            # the median of a few hundred points is stable to a few percent
            return gaussian(median_heuristic(r[:_MEDIAN_ROWS]))
        return gaussian(float(self.cfg.bandwidth_r))

    def _value(self, r, spec_r, Lc):
        v = 0.0
        if self.lam < 1:
            # sum(K * HLH) / n^2 equals trace(KHLH) / n^2
            v += (1 - self.lam) * float(np.sum(kernel_matrix(r, spec_r) * Lc)) / r.shape[0] ** 2
        if self.lam > 0:
            v += self.lam * float(np.mean(r**2))
        return v

    def _grad(self, theta, idx, spec_r):
        X, y = self.X[idx], self.y[idx]
        r = y - self.fc.evaluate(theta, X)
        g = np.zeros_like(r)
        if self.lam < 1:
            Lc = center_gram(self.L[idx][:, idx])
            g = (1 - self.lam) * _grad_from_centered(r, kernel_matrix(r, spec_r), Lc, spec_r.bandwidth)
        if self.lam > 0:
            g = g + self.lam * 2.0 * r / r.shape[0]
        return -self.fc.vjp(theta, X, g)

    def run(self, theta) -> _Run:
        cfg = self.cfg
        theta = np.asarray(theta, dtype=float).copy()
        state = adam_init(theta.shape[0], cfg.learning_rate)
        sampler = BatchSampler(self.y.shape[0], cfg.batch_size, self.rng)
        trajectory, bandwidths = [], []
        prev = None
        converged = False
        for _ in range(cfg.max_cycles):
            r_mon = self.y[self.mon] - self.fc.evaluate(theta, self.X[self.mon])
            spec_r = self._spec_r(r_mon)
            value = self._value(r_mon, spec_r, self.Lc_mon)
            trajectory.append(value)
            bandwidths.append(spec_r.bandwidth)
            if prev is not None:
                change = abs(value - prev)
                if change == 0 or change < cfg.tol * abs(prev):
                    converged = True
                    break
            prev = value
            for _ in range(cfg.steps_per_cycle):
                state, theta = adam_step(state, theta, self._grad(theta, sampler.next(), spec_r))
        return _Run(theta, converged, trajectory, bandwidths)


def _initial_theta(fc, data, cfg):
    if fc.is_linear:
        theta, _ = _ols_linear(fc, data.X, data.Y, {})
        return theta
    return fit_ols(data, fc, cfg).theta


def _hsic_fit(data: Dataset, fc, cfg: FitConfig, lam: float, init=None, inst=None, method="hsicx") -> FitResult:
    rng = np.random.default_rng(cfg.seed)
    n, d = data.X.shape
    if n < 2:
        raise InvalidInputError("need at least 2 samples")
    head = np.arange(min(n, cfg.monitor_size))
    if inst is None:
        inst = InstrumentKernel.resolve(data.Z, cfg.kernel_z, head)
    L_full = inst.gram()
    trials = []
    best = None
    for trial in range(cfg.max_restarts):
        if trial == 0:
            theta0 = _initial_theta(fc, data, cfg) if init is None else np.asarray(init, dtype=float)
        else:
            theta0 = fc.init_params(rng, d)
        run = _Optimizer(data.X, data.Y, L_full, fc, cfg, lam, rng).run(theta0)
        r = data.Y - fc.evaluate(run.theta, data.X)
        test = hsic_gamma_test(r, L_full, residual_kernel(r), "precomputed", cfg.alpha)
        trials.append({"pvalue": test.pvalue, "statistic": test.statistic, "cycles": len(run.trajectory)})
        logger.debug("trial %d: p=%.4g after %d cycles", trial, test.pvalue, len(run.trajectory))
        if best is None or test.pvalue > best[1]:
            best = (run, test.pvalue)
        if test.pvalue >= cfg.alpha:
            break
    run, pvalue = best
    accepted = pvalue >= cfg.alpha
    diagnostics = {
        "instrument_kernel": inst.describe(),
        "bandwidths_r": run.bandwidths,
        "trials": trials,
        "optimizer_converged": run.converged,
        "lam": lam,
    }
    return FitResult(
        method,
        fc,
        run.theta,
        bias_correct(fc, run.theta, data),
        pvalue=pvalue,
        restarts=len(trials),
        converged=bool(accepted),
        trajectory=run.trajectory,
        diagnostics=diagnostics,
    )


def fit_hsic_x(data: Dataset, fc=None, cfg: FitConfig | None = None, init=None) -> FitResult:
    """Minimize the empirical HSIC between residuals and instruments.

    The first trial starts at the least squares fit (or ``init`` when given) and
    later trials start from random parameters. A trial is accepted once the
    gamma HSIC test of its residuals against the instruments has p >= alpha; if
    none is accepted the trial with the largest p-value is returned with
    ``converged=False``. The intercept is the mean residual.
    """
    fc = LinearInBasis() if fc is None else fc
    cfg = FitConfig() if cfg is None else cfg
    return _hsic_fit(data, fc, cfg, 0.0, init=init)


def fit_hsic_x_pen(data: Dataset, fc=None, cfg: FitConfig | None = None, init=None) -> FitResult:
    """HSIC-X with the loss ``lam * mean squared error + (1 - lam) * HSIC``, ``lam = cfg.lam``."""
    fc = LinearInBasis() if fc is None else fc
    cfg = FitConfig() if cfg is None else cfg
    return _hsic_fit(data, fc, cfg, cfg.lam, init=init, method="hsicx-pen")


def select_lambda(data: Dataset, fc=None, cfg: FitConfig | None = None):
    """Largest grid value of lambda whose fit passes the independence test.

    Returns ``(lam, FitResult)``; falls back to ``lam = 0`` if every fit is rejected.
    """
    fc = LinearInBasis() if fc is None else fc
    cfg = FitConfig() if cfg is None else cfg
    grid = cfg.lambda_grid
    if list(grid) != sorted(grid, reverse=True):
        raise InvalidParameterError("lambda_grid must be sorted in descending order")
    fits = {}
    for lam in grid:
        res = fit_hsic_x_pen(data, fc, replace(cfg, lam=lam))
        res.diagnostics["lambda_path"] = {k: v.pvalue for k, v in fits.items()}
        fits[lam] = res
        if res.pvalue >= cfg.alpha:
            return lam, res
    if 0.0 in fits:
        return 0.0, fits[0.0]
    return 0.0, fit_hsic_x_pen(data, fc, replace(cfg, lam=0.0))
