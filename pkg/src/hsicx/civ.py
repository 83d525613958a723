"""Conditional IV with covariates W: residualized instruments and the joint (f, k) fit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .estimators import FitConfig, FitResult, InstrumentKernel, _hsic_fit, fit_hsic_x
from .exceptions import InvalidInputError, InvalidParameterError
from .funclass import Additive, LinearInBasis
from .kernels import gaussian, median_heuristic

__all__ = ["NadarayaWatson", "nadaraya_watson", "CivResult", "fit_residualized_civ", "fit_joint_civ"]

_CHUNK = 2048


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _bandwidths(W, bandwidth):
    n, t = W.shape
    if isinstance(bandwidth, str):
        if bandwidth == "median":
            return np.full(t, median_heuristic(W[:1000]))
        if bandwidth == "silverman":
            sd = W.std(axis=0, ddof=1) if n > 1 else np.ones(t)
            sd = np.where(sd > 0, sd, 1.0)
            return 1.06 * sd * n ** (-1.0 / (4 + t))
        raise InvalidParameterError(f"unknown bandwidth rule {bandwidth!r}")
    h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (t,)).copy()
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        raise InvalidParameterError(f"bandwidth must be positive, got {bandwidth!r}")
    return h


@dataclass(frozen=True, eq=False)
class NadarayaWatson:
    """Gaussian-kernel regression ``q(w) = sum_i k(w, w_i) z_i / sum_i k(w, w_i)``.

    ``bandwidth`` holds one scale per column of W.
    """

    W: np.ndarray
    Z: np.ndarray
    bandwidth: np.ndarray

    def predict(self, Wq, return_fallback: bool = False):
        """Predictions at the rows of ``Wq``.

        Queries whose kernel weights all underflow to zero get the response of
        the nearest training point; ``return_fallback=True`` also returns their mask.
        """
        Wq = _as_2d(Wq)
        if Wq.shape[1] != self.W.shape[1]:
            raise InvalidInputError(f"expected {self.W.shape[1]} columns, got {Wq.shape[1]}")
        A = self.W / self.bandwidth
        out = np.empty((Wq.shape[0], self.Z.shape[1]))
        fallback = np.zeros(Wq.shape[0], dtype=bool)
        for start in range(0, Wq.shape[0], _CHUNK):
            Q = Wq[start : start + _CHUNK] / self.bandwidth
            d2 = ((Q[:, None, :] - A[None, :, :]) ** 2).sum(axis=2)
            K = np.exp(-0.5 * d2)
            s = K.sum(axis=1)
            bad = s <= 0
            s[bad] = 1.0
            block = K @ self.Z / s[:, None]
            if bad.any():
                block[bad] = self.Z[np.argmin(d2[bad], axis=1)]
            out[start : start + _CHUNK] = block
            fallback[start : start + _CHUNK] = bad
        return (out, fallback) if return_fallback else out

    def __call__(self, Wq):
        return self.predict(Wq)


def nadaraya_watson(W, Z, bandwidth="silverman") -> NadarayaWatson:
    """Fit the kernel regression of Z on W.

    ``bandwidth`` is ``"silverman"`` (per-column rule of thumb), ``"median"``
    (median pairwise distance) or a positive number or per-column array.
    """
    W, Z = _as_2d(W), _as_2d(Z)
    if W.shape[0] != Z.shape[0]:
        raise InvalidInputError("W and Z must have the same number of rows")
    if W.shape[0] < 2:
        raise InvalidInputError("need at least 2 samples")
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(Z))):
        raise InvalidInputError("W and Z must be finite")
    return NadarayaWatson(W.copy(), Z.copy(), _bandwidths(W, bandwidth))


@dataclass
class CivResult:
    """Output of a conditional IV fit.

    ``gamma`` is set by the joint procedure, ``q1`` by the residualized one.
    """

    method: str
    theta: np.ndarray
    intercept: float
    pvalue: float
    fit: FitResult
    gamma: np.ndarray | None = None
    q1: NadarayaWatson | None = None
    diagnostics: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        """Prediction of the X part only, ``f(x) + intercept``."""
        fc = self.fit.fc.first if isinstance(self.fit.fc, Additive) else self.fit.fc
        return fc.evaluate(self.theta, X) + self.intercept


def _require_w(data: Dataset):
    if data.W is None:
        raise InvalidInputError("conditional IV needs covariates W")


def fit_residualized_civ(data: Dataset, fc=None, cfg: FitConfig | None = None, bandwidth="silverman") -> CivResult:
    """HSIC-X with instruments ``z - q1(w)``, where ``q1`` estimates E[Z | W]."""
    _require_w(data)
    q1 = nadaraya_watson(data.W, data.Z, bandwidth)
    zhat, fallback = q1.predict(data.W, return_fallback=True)
    fit = fit_hsic_x(data.with_z(data.Z - zhat), fc, cfg)
    diagnostics = {"nw_bandwidth": q1.bandwidth.tolist(), "nw_fallback": int(fallback.sum())}
    return CivResult("civ-res", fit.theta, fit.intercept, fit.pvalue, fit, q1=q1, diagnostics=diagnostics)


def fit_joint_civ(data: Dataset, fc_x=None, fc_w=None, cfg: FitConfig | None = None) -> CivResult:
    """Minimize HSIC between ``y - f(x) - k(w)`` and ``(z, w)`` over both functions.

    The instrument kernel is a product of Gaussian kernels on Z and on W, each
    with its own median-heuristic bandwidth.
    """
    _require_w(data)
    fc_x = LinearInBasis() if fc_x is None else fc_x
    fc_w = LinearInBasis() if fc_w is None else fc_w
    cfg = FitConfig() if cfg is None else cfg
    d = data.X.shape[1]
    fc = Additive(fc_x, fc_w, d)
    joint = Dataset(np.hstack([data.X, data.W]), data.Y, np.hstack([data.Z, data.W]))
    head = slice(0, cfg.monitor_size)
    inst = InstrumentKernel(
        [data.Z, data.W],
        [gaussian(median_heuristic(data.Z[head])), gaussian(median_heuristic(data.W[head]))],
    )
    fit = _hsic_fit(joint, fc, cfg, 0.0, inst=inst, method="civ-joint")
    n_x = fc_x.n_params(d)
    theta, gamma = fit.theta[:n_x], fit.theta[n_x:]
    return CivResult("civ-joint", theta, fit.intercept, fit.pvalue, fit, gamma=gamma)
