"""Adam updates, mini-batching and gradients of the (penalized) HSIC objective."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError, NumericalError
from .kernels import KernelSpec, hsic_biased, hsic_grad_residuals, kernel_matrix

__all__ = [
    "AdamState",
    "adam_init",
    "adam_step",
    "BatchSampler",
    "objective_value",
    "objective_grad",
]


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidParameterError(f"learning rate must be positive, got {self.lr}")
        if self.m.shape != self.v.shape:
            raise InvalidInputError("moment accumulators differ in shape")


def adam_init(n_params: int, lr: float = 0.01, **kwargs) -> AdamState:
    return AdamState(np.zeros(n_params), np.zeros(n_params), 0, lr, **kwargs)


def adam_step(state: AdamState, theta, grad):
    """One bias-corrected Adam update. Returns ``(new_state, new_theta)``."""
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != theta.shape or grad.shape != state.m.shape:
        raise InvalidInputError(f"shape mismatch: theta {theta.shape}, grad {grad.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad**2
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, t=t), theta


class BatchSampler:
    """Seeded mini-batches; each epoch is a fresh permutation split into near-equal chunks."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if batch_size < 2:
            raise InvalidParameterError(f"batch size must be at least 2, got {batch_size}")
        if n < 2:
            raise InvalidInputError("need at least 2 samples")
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._queue: list[np.ndarray] = []

    def _new_epoch(self):
        if self.batch_size >= self.n:
            self._queue = [np.arange(self.n)]
            return
        perm = self.rng.permutation(self.n)
        n_chunks = -(-self.n // self.batch_size)
        self._queue = list(np.array_split(perm, n_chunks))

    def next(self) -> np.ndarray:
        if not self._queue:
            self._new_epoch()
        return self._queue.pop(0)


def _residuals(fc, theta, X, y):
    return np.asarray(y, dtype=float) - fc.evaluate(theta, X)


def objective_value(theta, X, y, L, fc, spec_r: KernelSpec, lam: float = 0.0) -> float:
    """``(1 - lam) * HSIC_b(r, Z) + lam * mean(r^2)`` with ``r = y - f_theta(X)``."""
    r = _residuals(fc, theta, X, y)
    value = 0.0
    if lam < 1:
        value += (1 - lam) * hsic_biased(kernel_matrix(r, spec_r), L)
    if lam > 0:
        value += lam * float(np.mean(r**2))
    return value


def objective_grad(theta, X, y, L, fc, spec_r: KernelSpec, lam: float = 0.0) -> np.ndarray:
    """Gradient of :func:`objective_value` in ``theta``.

    ``L`` is the instrument Gram matrix of the batch. Only squared error is
    supported as the prediction loss.
    """
    if not 0 <= lam < 1:
        raise InvalidParameterError(f"penalty weight must lie in [0, 1), got {lam}")
    r = _residuals(fc, theta, X, y)
    g = (1 - lam) * hsic_grad_residuals(r, L, spec_r)
    if lam > 0:
        g = g + lam * 2.0 * r / r.shape[0]
    # r = y - f, so dr/dtheta = -J
    return -fc.vjp(theta, X, g)
