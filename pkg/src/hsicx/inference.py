"""Confidence regions by inverting HSIC and Anderson-Rubin tests over parameter grids."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataset import Dataset
from .exceptions import InvalidInputError, InvalidParameterError, SingularSystemError
from .funclass import BasisSpec, LinearInBasis, raw_basis
from .indtest import TestResult, hsic_gamma_test, hsic_permutation_test, residual_kernel
from .kernels import instrument_kernel, kernel_matrix

__all__ = [
    "ConfidenceRegion",
    "confidence_region_hsic",
    "anderson_rubin_test",
    "confidence_region_ar",
    "default_grid",
    "ols_standard_errors",
]


@dataclass(frozen=True, eq=False)
class ConfidenceRegion:
    """Grid of candidate parameters with their p-values; ``accepted`` iff p >= alpha."""

    grid: np.ndarray
    pvalues: np.ndarray
    alpha: float
    method: str

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        pvalues = np.asarray(self.pvalues, dtype=float).reshape(-1)
        if grid.shape[0] != pvalues.shape[0]:
            raise InvalidInputError("one p-value per grid point is required")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "pvalues", pvalues)

    @property
    def accepted(self) -> np.ndarray:
        return self.pvalues >= self.alpha

    @property
    def is_empty(self) -> bool:
        return not bool(self.accepted.any())

    def intervals(self) -> np.ndarray:
        """Per-coordinate (min, max) of the accepted points; NaN rows if none is accepted."""
        acc = self.grid[self.accepted]
        if acc.shape[0] == 0:
            return np.full((self.grid.shape[1], 2), np.nan)
        return np.column_stack([acc.min(axis=0), acc.max(axis=0)])

    def contains(self, theta, atol=1e-12) -> bool:
        """True if a grid point within ``atol`` of ``theta`` is accepted."""
        theta = np.asarray(theta, dtype=float).reshape(1, -1)
        hit = np.all(np.abs(self.grid - theta) <= atol, axis=1)
        return bool(np.any(hit & self.accepted))

    def to_csv(self, path) -> None:
        p = self.grid.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"theta_{j + 1}" for j in range(p)] + ["pvalue", "accepted"])
            for row, pv, acc in zip(self.grid, self.pvalues, self.accepted):
                w.writerow([format(v, ".17g") for v in row] + [format(pv, ".17g"), int(acc)])


def _as_grid(grid, n_params):
    G = np.asarray(grid, dtype=float)
    if G.size == 0:
        raise InvalidInputError("the parameter grid is empty")
    if G.ndim == 1:
        G = G[:, None] if n_params == 1 else G[None, :]
    if G.ndim != 2 or G.shape[1] != n_params:
        raise InvalidInputError(f"grid points must have {n_params} coordinates, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise InvalidInputError("grid has non-finite entries")
    return G


def confidence_region_hsic(
    data: Dataset,
    fc: LinearInBasis | None = None,
    grid=None,
    alpha: float = 0.05,
    method: str = "gamma",
    B: int = 199,
    seed: int = 0,
    kernel_z="auto",
) -> ConfidenceRegion:
    """Set of grid points whose residuals ``y - phi(x)^T theta`` pass the HSIC test.

    No intercept is needed since the test is translation invariant. Every grid
    point uses the same permutation seed, so equal points get equal p-values.
    Gamma-based regions are approximate; permutation-based ones have
    finite-sample level.
    """
    fc = LinearInBasis() if fc is None else fc
    if not fc.is_linear or fc.intercept:
        raise InvalidParameterError("test inversion needs a linear-in-basis class without intercept")
    if grid is None:
        raise InvalidInputError("the parameter grid is empty")
    if method not in ("gamma", "permutation"):
        raise InvalidParameterError(f"unknown test {method!r}")
    Phi = fc.features(data.X)
    G = _as_grid(grid, Phi.shape[1])
    spec_z = kernel_z if not isinstance(kernel_z, str) else instrument_kernel(data.Z, kernel_z)
    L = kernel_matrix(data.Z, spec_z)
    pvalues = np.empty(G.shape[0])
    for i, theta in enumerate(G):
        r = data.Y - Phi @ theta
        if method == "gamma":
            res = hsic_gamma_test(r, L, residual_kernel(r), "precomputed", alpha)
        else:
            res = hsic_permutation_test(r, L, residual_kernel(r), "precomputed", B=B, seed=seed, alpha=alpha)
        pvalues[i] = res.pvalue
    return ConfidenceRegion(G, pvalues, alpha, f"hsic-{method}")


class _ArDesign:
    """Reusable QR of the centered instrument features.

    With ``covariates`` (data.W) the covariates are partialled out of both the
    instrument features and the residuals first.
    """

    def __init__(self, data: Dataset, basis: BasisSpec, instrument_map: BasisSpec, covariates: bool = False):
        self.Phi = LinearInBasis(basis).features(data.X)
        E = instrument_map(data.Z)
        Ec = E - E.mean(axis=0)
        n, k = Ec.shape
        self.Qw = None
        t = 0
        if covariates:
            if data.W is None:
                raise InvalidInputError("covariate adjustment needs W")
            Wc = data.W - data.W.mean(axis=0)
            self.Qw, _ = np.linalg.qr(Wc)
            t = Wc.shape[1]
            Ec = Ec - self.Qw @ (self.Qw.T @ Ec)
        if n - k - t - 1 < 1:
            raise InvalidInputError(f"need more than {k + 1} samples for the Anderson-Rubin test")
        s = np.linalg.svd(Ec, compute_uv=False)
        if s.size == 0 or s.min() <= s.max() * 1e-10 or s.max() == 0:
            cond = np.inf if s.size == 0 or s.min() == 0 else float(s.max() / s.min())
            raise SingularSystemError("instrument features are rank deficient", cond)
        self.Q, _ = np.linalg.qr(Ec)
        self.n, self.k, self.t = n, k, t
        self.y = data.Y

    def test(self, theta, alpha) -> TestResult:
        r = self.y - self.Phi @ np.asarray(theta, dtype=float)
        rc = r - r.mean()
        if self.Qw is not None:
            rc = rc - self.Qw @ (self.Qw.T @ rc)
        explained = float(np.sum((self.Q.T @ rc) ** 2))
        rss = float(rc @ rc) - explained
        df2 = self.n - self.k - self.t - 1
        if rss <= 0:
            F, p = np.inf, 0.0
        else:
            F = (explained / self.k) / (rss / df2)
            p = float(stats.f.sf(F, self.k, df2))
        return TestResult(float(F), p, "anderson-rubin", alpha)


def anderson_rubin_test(
    data: Dataset,
    theta,
    basis: BasisSpec | None = None,
    instrument_map: BasisSpec | None = None,
    alpha: float = 0.05,
    covariates: bool = False,
) -> TestResult:
    """F-test that ``y - phi(x)^T theta`` is unrelated to ``(1, eta(z))`` in a linear regression.

    The statistic has an F(k, n - k - 1) null distribution, with k the number of
    instrument features. ``covariates=True`` adds ``data.W`` as unpenalized
    controls to both regressions (degrees of freedom n - k - t - 1).
    """
    if not 0 < alpha < 1:
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha}")
    design = _ArDesign(
        data,
        raw_basis() if basis is None else basis,
        raw_basis() if instrument_map is None else instrument_map,
        covariates,
    )
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != design.Phi.shape[1]:
        raise InvalidInputError(f"theta must have {design.Phi.shape[1]} entries, got {theta.shape[0]}")
    return design.test(theta, alpha)


def confidence_region_ar(
    data: Dataset,
    basis: BasisSpec | None = None,
    instrument_map: BasisSpec | None = None,
    grid=None,
    alpha: float = 0.05,
    covariates: bool = False,
) -> ConfidenceRegion:
    if not 0 < alpha < 1:
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if grid is None:
        raise InvalidInputError("the parameter grid is empty")
    design = _ArDesign(
        data,
        raw_basis() if basis is None else basis,
        raw_basis() if instrument_map is None else instrument_map,
        covariates,
    )
    G = _as_grid(grid, design.Phi.shape[1])
    pvalues = np.array([design.test(theta, alpha).pvalue for theta in G])
    return ConfidenceRegion(G, pvalues, alpha, "anderson-rubin")


def ols_standard_errors(data: Dataset, fc: LinearInBasis | None = None) -> np.ndarray:
    """Homoskedastic OLS standard errors of the basis coefficients (intercept included in the fit)."""
    fc = LinearInBasis() if fc is None else fc
    Phi = fc.features(data.X)
    A = np.column_stack([Phi, np.ones(data.n)])
    coef, *_ = np.linalg.lstsq(A, data.Y, rcond=None)
    resid = data.Y - A @ coef
    dof = max(data.n - A.shape[1], 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.pinv(A.T @ A)
    return np.sqrt(np.diag(cov)[:-1])


def default_grid(center, se, width: float = 6.0, points: int = 200) -> np.ndarray:
    """Cartesian grid ``center_j +- width * se_j`` with ``points`` values per axis."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    se = np.atleast_1d(np.asarray(se, dtype=float))
    if center.shape != se.shape:
        raise InvalidInputError("center and se must have the same length")
    if points < 2 or width <= 0 or np.any(se < 0):
        raise InvalidParameterError("need points >= 2, width > 0 and non-negative se")
    axes = [np.linspace(c - width * s, c + width * s, points) for c, s in zip(center, se)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])
