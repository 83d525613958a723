"""Hypothesis spaces: linear combinations of basis functions and small MLPs.

A parameter vector is a flat float array. Every function class exposes
``n_params``, ``evaluate``, ``jacobian``, ``vjp`` (vector-Jacobian product) and
``init_params``; linear classes also expose ``features``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError

__all__ = [
    "BasisSpec",
    "raw_basis",
    "poly_bump_basis",
    "radial_bump_basis",
    "custom_basis",
    "LinearInBasis",
    "Mlp",
    "Additive",
    "evaluate",
    "jacobian",
    "default_bump_centers",
]


def default_bump_centers() -> np.ndarray:
    """Ten equally spaced centers covering [-7, 7]."""
    return np.linspace(-7.0, 7.0, 10)


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidInputError(f"X must be 1-D or 2-D, got shape {X.shape}")
    return X


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Feature map phi.

    kind is one of ``raw`` (identity), ``polybump`` (``[x, x^2, exp(-(x-c_j)^2)]``
    for scalar x), ``radial2d`` (``[1, exp(-||x-c_j||^2/3)]`` for x in R^2) or
    ``custom`` (user callable with declared output dimension).
    """

    kind: str
    centers: np.ndarray | None = None
    func: Callable | None = None
    dim: int | None = None

    def __post_init__(self):
        if self.kind not in ("raw", "polybump", "radial2d", "custom"):
            raise InvalidParameterError(f"unknown basis kind {self.kind!r}")
        if self.kind in ("polybump", "radial2d") and self.centers is None:
            raise InvalidParameterError(f"{self.kind} basis needs centers")
        if self.kind == "custom" and (self.func is None or self.dim is None):
            raise InvalidParameterError("custom basis needs func and dim")

    def output_dim(self, d: int) -> int:
        if self.kind == "raw":
            return d
        if self.kind == "polybump":
            return 2 + len(self.centers)
        if self.kind == "radial2d":
            return 1 + len(self.centers)
        return int(self.dim)

    def input_dim(self) -> int | None:
        return {"polybump": 1, "radial2d": 2}.get(self.kind)

    def __call__(self, X) -> np.ndarray:
        X = _as_2d(X)
        expected = self.input_dim()
        if expected is not None and X.shape[1] != expected:
            raise InvalidInputError(f"{self.kind} basis expects {expected} input column(s), got {X.shape[1]}")
        if self.kind == "raw":
            return X
        if self.kind == "polybump":
            x = X[:, 0]
            c = np.asarray(self.centers, dtype=float)
            return np.column_stack([x, x**2, np.exp(-((x[:, None] - c[None, :]) ** 2))])
        if self.kind == "radial2d":
            c = np.asarray(self.centers, dtype=float).reshape(-1, 2)
            sq = ((X[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
            return np.column_stack([np.ones(X.shape[0]), np.exp(-sq / 3.0)])
        out = np.asarray(self.func(X), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        if out.shape != (X.shape[0], self.dim):
            raise InvalidInputError(f"custom basis returned shape {out.shape}, declared ({X.shape[0]}, {self.dim})")
        return out


def raw_basis() -> BasisSpec:
    return BasisSpec("raw")


def poly_bump_basis(centers=None) -> BasisSpec:
    return BasisSpec("polybump", centers=default_bump_centers() if centers is None else np.asarray(centers, float))


def radial_bump_basis(centers) -> BasisSpec:
    return BasisSpec("radial2d", centers=np.asarray(centers, dtype=float).reshape(-1, 2))


def custom_basis(func, dim) -> BasisSpec:
    return BasisSpec("custom", func=func, dim=int(dim))


def _check_theta(theta, n_params) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != n_params:
        raise InvalidInputError(f"parameter vector has length {theta.shape[0]}, expected {n_params}")
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("parameter vector has non-finite entries")
    return theta


@dataclass(frozen=True, eq=False)
class LinearInBasis:
    """``f(x) = phi(x)^T theta`` (plus ``theta[-1]`` if ``intercept``)."""

    basis: BasisSpec = field(default_factory=raw_basis)
    intercept: bool = False
    is_linear = True

    def n_features(self, d: int) -> int:
        return self.basis.output_dim(d)

    def n_params(self, d: int) -> int:
        return self.n_features(d) + int(self.intercept)

    def features(self, X) -> np.ndarray:
        """Design matrix, including the intercept column when enabled."""
        X = _as_2d(X)
        Phi = self.basis(X)
        if self.intercept:
            Phi = np.column_stack([Phi, np.ones(X.shape[0])])
        return Phi

    def evaluate(self, theta, X) -> np.ndarray:
        X = _as_2d(X)
        theta = _check_theta(theta, self.n_params(X.shape[1]))
        return self.features(X) @ theta

    def jacobian(self, theta, X) -> np.ndarray:
        X = _as_2d(X)
        _check_theta(theta, self.n_params(X.shape[1]))
        return self.features(X)

    def vjp(self, theta, X, v) -> np.ndarray:
        return self.jacobian(theta, X).T @ np.asarray(v, dtype=float)

    def init_params(self, rng: np.random.Generator, d: int) -> np.ndarray:
        return rng.standard_normal(self.n_params(d))


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a**2),
    "relu": (lambda h: np.maximum(h, 0.0), lambda a: (a > 0).astype(float)),
}


@dataclass(frozen=True)
class Mlp:
    """Fully connected network with scalar output.

    Parameters are stored layer by layer as ``W`` (fan_in x fan_out, row-major)
    followed by ``b``; the output bias is present only when ``intercept``.
    """

    input_dim: int = 1
    hidden: tuple = (64,)
    activation: str = "tanh"
    intercept: bool = False
    is_linear = False

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise InvalidParameterError(f"unknown activation {self.activation!r}")
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise InvalidParameterError("layer sizes must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def _layer_shapes(self):
        sizes = (self.input_dim, *self.hidden, 1)
        shapes = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            shapes.append((a, b, not last or self.intercept))
        return shapes

    def n_params(self, d: int | None = None) -> int:
        if d is not None and d != self.input_dim:
            raise InvalidInputError(f"Mlp expects {self.input_dim} input columns, got {d}")
        return sum(a * b + (b if has_b else 0) for a, b, has_b in self._layer_shapes())

    def _unpack(self, theta):
        layers, pos = [], 0
        for a, b, has_b in self._layer_shapes():
            W = theta[pos : pos + a * b].reshape(a, b)
            pos += a * b
            bias = None
            if has_b:
                bias = theta[pos : pos + b]
                pos += b
            layers.append((W, bias))
        return layers

    def _forward(self, theta, X):
        X = _as_2d(X)
        theta = _check_theta(theta, self.n_params(X.shape[1]))
        act, _ = _ACTIVATIONS[self.activation]
        layers = self._unpack(theta)
        acts = [X]
        h = X
        for i, (W, b) in enumerate(layers):
            h = h @ W
            if b is not None:
                h = h + b
            if i < len(layers) - 1:
                h = act(h)
            acts.append(h)
        return layers, acts

    def evaluate(self, theta, X) -> np.ndarray:
        _, acts = self._forward(theta, X)
        return acts[-1][:, 0]

    def _backward(self, layers, acts, delta_out, per_sample):
        _, dact = _ACTIVATIONS[self.activation]
        grads = []
        delta = delta_out  # (n, 1)
        for i in range(len(layers) - 1, -1, -1):
            W, b = layers[i]
            a_prev = acts[i]
            if per_sample:
                gW = (a_prev[:, :, None] * delta[:, None, :]).reshape(a_prev.shape[0], -1)
                gb = delta if b is not None else None
            else:
                gW = (a_prev.T @ delta).reshape(-1)
                gb = delta.sum(axis=0) if b is not None else None
            grads.append((gW, gb))
            if i > 0:
                delta = (delta @ W.T) * dact(acts[i])
        pieces = []
        for gW, gb in reversed(grads):
            pieces.append(gW)
            if gb is not None:
                pieces.append(gb)
        return np.concatenate(pieces, axis=1 if per_sample else 0)

    def jacobian(self, theta, X) -> np.ndarray:
        layers, acts = self._forward(theta, X)
        n = acts[0].shape[0]
        return self._backward(layers, acts, np.ones((n, 1)), per_sample=True)

    def vjp(self, theta, X, v) -> np.ndarray:
        layers, acts = self._forward(theta, X)
        v = np.asarray(v, dtype=float).reshape(-1, 1)
        return self._backward(layers, acts, v, per_sample=False)

    def init_params(self, rng: np.random.Generator, d: int | None = None) -> np.ndarray:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
        pieces = []
        for a, b, has_b in self._layer_shapes():
            bound = 1.0 / np.sqrt(a)
            pieces.append(rng.uniform(-bound, bound, size=a * b))
            if has_b:
                pieces.append(rng.uniform(-bound, bound, size=b))
        return np.concatenate(pieces)


@dataclass(frozen=True, eq=False)
class Additive:
    """``f(x) + k(w)`` on the column split ``[x | w]`` of the input.

    ``split`` is the number of leading columns fed to ``first``.
    """

    first: object
    second: object
    split: int

    @property
    def is_linear(self):
        return self.first.is_linear and self.second.is_linear

    @property
    def intercept(self):
        return self.first.intercept or self.second.intercept

    def _parts(self, X):
        X = _as_2d(X)
        if not 0 < self.split < X.shape[1]:
            raise InvalidInputError(f"cannot split {X.shape[1]} columns at {self.split}")
        return X[:, : self.split], X[:, self.split :]

    def _n(self, d):
        return self.first.n_params(self.split), self.second.n_params(d - self.split)

    def n_params(self, d: int) -> int:
        return sum(self._n(d))

    def _thetas(self, theta, X):
        n1, n2 = self._n(X.shape[1])
        theta = _check_theta(theta, n1 + n2)
        return theta[:n1], theta[n1:]

    def features(self, X) -> np.ndarray:
        A, B = self._parts(X)
        return np.column_stack([self.first.features(A), self.second.features(B)])

    def evaluate(self, theta, X) -> np.ndarray:
        X = _as_2d(X)
        t1, t2 = self._thetas(theta, X)
        A, B = self._parts(X)
        return self.first.evaluate(t1, A) + self.second.evaluate(t2, B)

    def jacobian(self, theta, X) -> np.ndarray:
        X = _as_2d(X)
        t1, t2 = self._thetas(theta, X)
        A, B = self._parts(X)
        return np.column_stack([self.first.jacobian(t1, A), self.second.jacobian(t2, B)])

    def vjp(self, theta, X, v) -> np.ndarray:
        X = _as_2d(X)
        t1, t2 = self._thetas(theta, X)
        A, B = self._parts(X)
        return np.concatenate([self.first.vjp(t1, A, v), self.second.vjp(t2, B, v)])

    def init_params(self, rng, d):
        return np.concatenate([self.first.init_params(rng, self.split), self.second.init_params(rng, d - self.split)])


def evaluate(fc, theta, X) -> np.ndarray:
    """Predictions ``f_theta(x_i)`` for every row of ``X``."""
    return fc.evaluate(theta, X)


def jacobian(fc, theta, X) -> np.ndarray:
    """Matrix whose row i is the gradient of ``f_theta(x_i)`` in ``theta``."""
    return fc.jacobian(theta, X)
