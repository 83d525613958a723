"""Structural causal models used in the experiments, interventions on Z, and metrics.

Each model is a small frozen dataclass with a ``sample(n, rng)`` method and the
causal function ``f0``. Random ingredients of a model (bump weights, mixing
matrices) are drawn once by the ``make_*`` helpers and stored on the spec, so
``simulate(spec, n, seed)`` is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .dataset import Dataset
from .exceptions import DominationError, InvalidInputError, InvalidParameterError
from .funclass import default_bump_centers

__all__ = [
    "OneDim",
    "MultiDim",
    "DG",
    "NonAdditiveZ",
    "BinaryPoly",
    "IndepZ",
    "NonReducible",
    "CivExample",
    "make_onedim",
    "make_multidim",
    "make_dg",
    "InterventionSpec",
    "SimOutput",
    "simulate",
    "intervene",
    "integrated_mse",
    "oos_loss",
]


def _bumps(x, weights, centers):
    return np.exp(-((x[:, None] - centers[None, :]) ** 2)) @ weights


@dataclass(frozen=True, eq=False)
class OneDim:
    """``X := Z eps_X + alpha Z + U``, ``Y := f0(X) - 4U + eps_Y``.

    ``zdist`` is ``"binary"`` or ``"gaussian"``. Binary instruments take values
    {0, 1} by default (``binary_coding="centered"`` gives {-1/2, 1/2}).
    ``confounded=False`` drops U from the assignment of X (oracle data).
    ``z_scale``/``z_prob`` parametrize the instrument law for interventions.
    """

    alpha: float = 1.0
    zdist: str = "gaussian"
    f0_kind: str = "lin"
    weights: np.ndarray | None = None
    centers: np.ndarray = field(default_factory=default_bump_centers)
    binary_coding: str = "01"
    confounded: bool = True
    z_scale: float = 1.0
    z_prob: float = 0.5

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidParameterError(f"alpha must be non-negative, got {self.alpha}")
        if self.zdist not in ("binary", "gaussian"):
            raise InvalidParameterError(f"unknown instrument distribution {self.zdist!r}")
        if self.f0_kind not in ("lin", "nonlin"):
            raise InvalidParameterError(f"unknown causal function {self.f0_kind!r}")
        if self.f0_kind == "nonlin" and (self.weights is None or len(self.weights) != len(self.centers)):
            raise InvalidParameterError("nonlinear f0 needs one weight per center")
        if self.binary_coding not in ("01", "centered"):
            raise InvalidParameterError(f"unknown binary coding {self.binary_coding!r}")
        if self.z_scale <= 0 or not 0 < self.z_prob < 1:
            raise InvalidParameterError("z_scale must be positive and z_prob in (0, 1)")

    def f0(self, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        if self.f0_kind == "lin":
            return -2.0 * x
        return 1.5 * x - 0.2 * x**2 + _bumps(x, np.asarray(self.weights), np.asarray(self.centers))

    def sample(self, n, rng):
        if self.zdist == "binary":
            z = (rng.random(n) < self.z_prob).astype(float)
            if self.binary_coding == "centered":
                z = z - 0.5
        else:
            z = self.z_scale * rng.standard_normal(n)
        u = rng.standard_normal(n)
        ex = rng.standard_normal(n)
        ey = rng.standard_normal(n)
        x = z * ex + self.alpha * z + (u if self.confounded else 0.0)
        y = self.f0(x) - 4.0 * u + ey
        return {"X": x, "Y": y, "Z": z, "U": u}


def make_onedim(alpha=1.0, zdist="gaussian", f0="lin", seed=0, **kwargs) -> OneDim:
    """OneDim model; for ``f0="nonlin"`` the bump weights are drawn i.i.d. N(0, 2) from ``seed``."""
    weights = None
    if f0 == "nonlin":
        weights = np.random.default_rng(seed).normal(0.0, np.sqrt(2.0), size=10)
    return OneDim(alpha=alpha, zdist=zdist, f0_kind=f0, weights=weights, **kwargs)


@dataclass(frozen=True, eq=False)
class MultiDim:
    """``X := J (Z^2 * eps_X) + B Z + U``, ``Y := beta^T X - 2U + eps_Y``.

    Z ~ N(0, I_dz), eps_X ~ N(0, I_dx); U and eps_Y are scalar N(0, 1) and U
    enters every coordinate of X. ``J Z^2`` is multiplied elementwise with eps_X.
    """

    J: np.ndarray
    B: np.ndarray
    beta: np.ndarray
    confounded: bool = True

    def __post_init__(self):
        J, B = np.atleast_2d(self.J), np.atleast_2d(self.B)
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if J.shape != B.shape or beta.shape[0] != J.shape[0]:
            raise InvalidParameterError(f"inconsistent shapes J {J.shape}, B {B.shape}, beta {beta.shape}")
        object.__setattr__(self, "J", J.astype(float))
        object.__setattr__(self, "B", B.astype(float))
        object.__setattr__(self, "beta", beta)

    @property
    def d_x(self):
        return self.J.shape[0]

    @property
    def d_z(self):
        return self.J.shape[1]

    def f0(self, X):
        return np.asarray(X, dtype=float).reshape(-1, self.d_x) @ self.beta

    def sample(self, n, rng):
        z = rng.standard_normal((n, self.d_z))
        u = rng.standard_normal(n)
        ex = rng.standard_normal((n, self.d_x))
        ey = rng.standard_normal(n)
        x = ((z**2) @ self.J.T) * ex + z @ self.B.T
        if self.confounded:
            x = x + u[:, None]
        y = x @ self.beta - 2.0 * u + ey
        return {"X": x, "Y": y, "Z": z, "U": u}


def make_multidim(d_x=3, d_z=3, seed=0, **kwargs) -> MultiDim:
    """J all ones, B_ij ~ Uniform(-4, 4), beta ~ N(0, I), drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    B = rng.uniform(-4.0, 4.0, size=(d_x, d_z))
    beta = rng.standard_normal(d_x)
    return MultiDim(np.ones((d_x, d_z)), B, beta, **kwargs)


@dataclass(frozen=True, eq=False)
class DG:
    """Distribution-generalization model indexed by the intervention ``i`` in (0, 4).

    Z is a mixture: with probability ``i/4`` uniform on (i, 4), else uniform on
    (0, i). ``X1 := U1 1(Z <= 3.5) + 0.1 Z + 2 Z eps_X1``, ``X2 := U2 + eps_X2``,
    ``Y := f0(X1, X2) + U1 + U2``.
    """

    i: float = 0.5
    f0_kind: str = "lin"
    weights: np.ndarray | None = None
    centers: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.i < 4:
            raise DominationError(f"intervention index must lie in (0, 4), got {self.i}")
        if self.f0_kind not in ("lin", "nonlin"):
            raise InvalidParameterError(f"unknown causal function {self.f0_kind!r}")
        if self.f0_kind == "nonlin" and (self.weights is None or self.centers is None):
            raise InvalidParameterError("nonlinear DG model needs weights and centers")

    def f0(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        if self.f0_kind == "lin":
            return X[:, 0] + X[:, 1]
        c = np.asarray(self.centers).reshape(-1, 2)
        sq = ((X[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-sq / 3.0) @ np.asarray(self.weights)

    def sample(self, n, rng):
        k = rng.random(n) < self.i / 4.0
        w1 = rng.uniform(0.0, self.i, n)
        w2 = rng.uniform(self.i, 4.0, n)
        z = np.where(k, w2, w1)
        u1 = rng.standard_normal(n)
        u2 = rng.standard_normal(n)
        ex1 = rng.standard_normal(n)
        ex2 = rng.standard_normal(n)
        x1 = u1 * (z <= 3.5) + 0.1 * z + 2.0 * z * ex1
        x2 = u2 + ex2
        x = np.column_stack([x1, x2])
        y = self.f0(x) + u1 + u2
        return {"X": x, "Y": y, "Z": z, "U": np.column_stack([u1, u2])}


def make_dg(i=0.5, f0="lin", seed=0) -> DG:
    """DG model; the nonlinear variant draws w ~ N(0, 4) and centers uniform on [-5, 5]^2."""
    if f0 == "lin":
        return DG(i=i)
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 2.0, size=10)
    centers = rng.uniform(-5.0, 5.0, size=(10, 2))
    return DG(i=i, f0_kind="nonlin", weights=weights, centers=centers)


@dataclass(frozen=True)
class NonAdditiveZ:
    """``X := Z U + eps_X``, ``Y := X + U + eps_Y`` with standard Gaussian noises."""

    def f0(self, X):
        return np.asarray(X, dtype=float).reshape(-1)

    def sample(self, n, rng):
        z, u, ex, ey = rng.standard_normal((4, n))
        x = z * u + ex
        return {"X": x, "Y": x + u + ey, "Z": z, "U": u, "eps_X": ex, "eps_Y": ey}


@dataclass(frozen=True)
class BinaryPoly:
    """``Z ~ Unif{0..k-1}``, ``X := Z + U + eps_X``, ``Y := sum_i a_i X^i + U + eps_Y``."""

    coefs: tuple = (1.0, 1.0, 1.0)
    k: int = 2

    def __post_init__(self):
        if self.k < 2 or len(self.coefs) < 1:
            raise InvalidParameterError("need k >= 2 and at least one coefficient")

    def f0(self, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        return sum(a * x ** (j + 1) for j, a in enumerate(self.coefs))

    def sample(self, n, rng):
        z = rng.integers(0, self.k, n).astype(float)
        u, ex, ey = rng.standard_normal((3, n))
        x = z + u + ex
        return {"X": x, "Y": self.f0(x) + u + ey, "Z": z, "U": u}


@dataclass(frozen=True)
class IndepZ:
    """``Z ~ Ber(1/2)``, ``X := 2 Z U - U + eps_X``, ``Y := X + U + eps_Y`` (Z independent of X)."""

    def f0(self, X):
        return np.asarray(X, dtype=float).reshape(-1)

    def sample(self, n, rng):
        z = (rng.random(n) < 0.5).astype(float)
        u, ex, ey = rng.standard_normal((3, n))
        x = 2 * z * u - u + ex
        return {"X": x, "Y": x + u + ey, "Z": z, "U": u}


@dataclass(frozen=True)
class NonReducible:
    """``Z ~ Ber(1/2)``, ``X := 2 Z U + eps_X``, ``Y := X - U + eps_Y``.

    Every nonzero multiple of X has a Z-dependent second moment, while
    ``-U + X`` (the noise of Y shifted by X) does too, so the second-moment
    condition on ``tau X`` holds but the one on ``h(U, eps_Y) + tau X`` fails at ``tau = 1``.
    """

    def f0(self, X):
        return np.asarray(X, dtype=float).reshape(-1)

    def sample(self, n, rng):
        z = (rng.random(n) < 0.5).astype(float)
        u, ex, ey = rng.standard_normal((3, n))
        x = 2 * z * u + ex
        return {"X": x, "Y": x - u + ey, "Z": z, "U": u}


@dataclass(frozen=True)
class CivExample:
    """Conditional IV model: ``W := V + eps_W``, ``Z := W + V + eps_Z``,
    ``X := Z U + eps_X``, ``Y := X + W + U + eps_Y``."""

    def f0(self, X):
        return np.asarray(X, dtype=float).reshape(-1)

    def sample(self, n, rng):
        v, u, ew, ez, ex, ey = rng.standard_normal((6, n))
        w = v + ew
        z = w + v + ez
        x = z * u + ex
        y = x + w + u + ey
        return {"X": x, "Y": y, "Z": z, "W": w, "U": u, "V": v, "eps_X": ex, "eps_Y": ey}


@dataclass(frozen=True, eq=False)
class SimOutput:
    """Simulated dataset plus ground truth. Hidden variables stay out of ``data``."""

    data: Dataset
    spec: object
    _hidden: dict = field(repr=False)

    def f0(self, X):
        return self.spec.f0(X)

    def hidden(self, name="U"):
        """Realized latent variable, for diagnostics only."""
        return self._hidden[name]

    @property
    def params(self) -> dict:
        out = {}
        for f in fields(self.spec):
            val = getattr(self.spec, f.name)
            if isinstance(val, np.ndarray):
                out[f.name] = val.copy()
        return out


def simulate(spec, n: int, seed: int = 0) -> SimOutput:
    """Draw ``n`` i.i.d. observations from ``spec``."""
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    draw = spec.sample(int(n), np.random.default_rng(seed))
    data = Dataset(draw["X"], draw["Y"], draw["Z"], draw.get("W"))
    hidden = {k: v for k, v in draw.items() if k not in ("X", "Y", "Z", "W")}
    return SimOutput(data, spec, hidden)


@dataclass(frozen=True)
class InterventionSpec:
    """Replacement of the instrument law.

    ``params`` maps spec fields to new values: ``i`` for DG, ``z_scale``
    (Gaussian) or ``z_prob`` (binary) for OneDim. ``subset`` records the indices
    of predictors affected by Z.
    """

    params: dict = field(default_factory=dict)
    subset: tuple = ()


_INTERVENABLE = {DG: {"i"}, OneDim: {"z_scale", "z_prob"}}


def intervene(spec, iv: InterventionSpec):
    """Return ``spec`` with its instrument assignment replaced according to ``iv``."""
    if not iv.params:
        return spec
    allowed = _INTERVENABLE.get(type(spec))
    if allowed is None:
        raise InvalidParameterError(f"{type(spec).__name__} does not support interventions on Z")
    unknown = set(iv.params) - allowed
    if unknown:
        raise InvalidParameterError(f"cannot intervene on {sorted(unknown)} for {type(spec).__name__}")
    if isinstance(spec, DG):
        i = iv.params["i"]
        if not 0 < i < 4:
            raise DominationError(f"intervention index {i} would extend the support (0, 4) of Z")
    if isinstance(spec, OneDim):
        if "z_scale" in iv.params and spec.zdist != "gaussian":
            raise InvalidParameterError("z_scale applies to Gaussian instruments only")
        if "z_prob" in iv.params and spec.zdist != "binary":
            raise InvalidParameterError("z_prob applies to binary instruments only")
    return replace(spec, **iv.params)


def _predict(predictor, X):
    return np.asarray(predictor(X), dtype=float).reshape(-1)


def integrated_mse(predictor, spec, n_test: int = 10000, seed: int = 0) -> float:
    """Monte Carlo estimate of ``E[(fhat(X) - f0(X))^2]`` on a fresh sample."""
    X = simulate(spec, n_test, seed).data.X
    return float(np.mean((_predict(predictor, X) - spec.f0(X)) ** 2))


_LOSSES = {
    "squared": lambda r: r**2,
    "absolute": np.abs,
}


def oos_loss(predictor, spec, n: int = 10000, seed: int = 0, loss: str = "squared", return_se: bool = False):
    """Mean prediction loss of ``predictor`` on a fresh sample from ``spec``.

    With ``return_se`` also returns the Monte Carlo standard error.
    """
    if loss not in _LOSSES:
        raise InvalidParameterError(f"unknown loss {loss!r}")
    data = simulate(spec, n, seed).data
    values = _LOSSES[loss](data.Y - _predict(predictor, data.X))
    mean = float(values.mean())
    if return_se:
        return mean, float(values.std(ddof=1) / np.sqrt(n))
    return mean
