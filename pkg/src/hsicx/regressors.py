"""scikit-learn compatible wrappers around the estimators.

Instruments are passed to ``fit`` as the keyword argument ``Z``::

    est = HSICXRegressor(basis="polybump").fit(X, y, Z=Z)
    est.predict(X_new)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import Dataset
from .estimators import FitConfig, fit_2sls, fit_anchor, fit_hsic_x, fit_hsic_x_pen, fit_ols, select_lambda
from .exceptions import InvalidParameterError
from .funclass import LinearInBasis, Mlp, poly_bump_basis, radial_bump_basis, raw_basis

__all__ = [
    "BasisFeatures",
    "OLSRegressor",
    "TwoStageLeastSquares",
    "AnchorRegressor",
    "HSICXRegressor",
]


def _make_basis(kind, centers=None):
    if kind == "raw":
        return raw_basis()
    if kind == "polybump":
        return poly_bump_basis(centers)
    if kind == "radial2d":
        if centers is None:
            raise InvalidParameterError("the radial basis needs centers")
        return radial_bump_basis(centers)
    raise InvalidParameterError(f"unknown basis {kind!r}")


def _dataset(X, y, Z):
    X, y = check_X_y(X, y, y_numeric=True)
    if Z is None:
        raise InvalidParameterError("instruments Z are required")
    Z = check_array(Z, ensure_2d=False)
    return Dataset(X, y, Z)


class BasisFeatures(TransformerMixin, BaseEstimator):
    """Stateless feature map ``x -> phi(x)``."""

    def __init__(self, kind="raw", centers=None):
        self.kind = kind
        self.centers = centers

    def fit(self, X, y=None):
        X = check_array(X)
        self.basis_ = _make_basis(self.kind, self.centers)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return self.basis_(check_array(X))


class _LinearRegressorBase(RegressorMixin, BaseEstimator):
    def _store(self, result, n_features):
        self.result_ = result
        self.coef_ = np.asarray(result.theta, dtype=float)
        self.intercept_ = float(result.intercept)
        self.n_features_in_ = n_features
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.result_.predict(check_array(X))


class OLSRegressor(_LinearRegressorBase):
    def __init__(self, basis="raw", centers=None):
        self.basis = basis
        self.centers = centers

    def fit(self, X, y, Z=None):
        X, y = check_X_y(X, y, y_numeric=True)
        data = Dataset(X, y, np.zeros((X.shape[0], 1)))
        return self._store(fit_ols(data, LinearInBasis(_make_basis(self.basis, self.centers))), X.shape[1])


class TwoStageLeastSquares(_LinearRegressorBase):
    """2SLS with ``phi`` on X and ``eta`` on Z (both default to the identity)."""

    def __init__(self, basis="raw", centers=None, instrument_basis="raw", instrument_centers=None):
        self.basis = basis
        self.centers = centers
        self.instrument_basis = instrument_basis
        self.instrument_centers = instrument_centers

    def fit(self, X, y, Z=None):
        data = _dataset(X, y, Z)
        res = fit_2sls(
            data,
            _make_basis(self.basis, self.centers),
            _make_basis(self.instrument_basis, self.instrument_centers),
        )
        return self._store(res, data.X.shape[1])


class AnchorRegressor(_LinearRegressorBase):
    def __init__(self, gamma=1.0, basis="raw", centers=None):
        self.gamma = gamma
        self.basis = basis
        self.centers = centers

    def fit(self, X, y, Z=None):
        data = _dataset(X, y, Z)
        res = fit_anchor(data, self.gamma, _make_basis(self.basis, self.centers))
        return self._store(res, data.X.shape[1])


class HSICXRegressor(RegressorMixin, BaseEstimator):
    """HSIC-X (``penalty=None``), HSIC-X-pen with fixed weight (float in [0, 1)),
    or HSIC-X-pen with the weight chosen by the independence test (``"auto"``).

    ``basis="mlp"`` fits a one-hidden-layer network with ``hidden`` units.
    """

    def __init__(
        self,
        basis="raw",
        centers=None,
        hidden=64,
        penalty=None,
        learning_rate=0.01,
        batch_size=256,
        alpha=0.05,
        max_restarts=3,
        max_cycles=200,
        kernel_z="auto",
        seed=0,
    ):
        self.basis = basis
        self.centers = centers
        self.hidden = hidden
        self.penalty = penalty
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.alpha = alpha
        self.max_restarts = max_restarts
        self.max_cycles = max_cycles
        self.kernel_z = kernel_z
        self.seed = seed

    def _function_class(self, d):
        if self.basis == "mlp":
            return Mlp(input_dim=d, hidden=(int(self.hidden),))
        return LinearInBasis(_make_basis(self.basis, self.centers))

    def fit(self, X, y, Z=None):
        data = _dataset(X, y, Z)
        cfg = FitConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            alpha=self.alpha,
            max_restarts=self.max_restarts,
            max_cycles=self.max_cycles,
            kernel_z=self.kernel_z,
            seed=self.seed,
            lam=0.0 if self.penalty in (None, "auto") else float(self.penalty),
        )
        fc = self._function_class(data.X.shape[1])
        if self.penalty is None:
            res = fit_hsic_x(data, fc, cfg)
            self.penalty_ = 0.0
        elif self.penalty == "auto":
            self.penalty_, res = select_lambda(data, fc, cfg)
        else:
            res = fit_hsic_x_pen(data, fc, cfg)
            self.penalty_ = cfg.lam
        self.result_ = res
        self.coef_ = np.asarray(res.theta, dtype=float)
        self.intercept_ = float(res.intercept)
        self.pvalue_ = float(res.pvalue)
        self.n_features_in_ = data.X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.result_.predict(check_array(X))
