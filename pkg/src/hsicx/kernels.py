"""Gram matrices, the median heuristic and the biased HSIC statistic.

All functions take plain arrays. A one-dimensional array of length ``n`` is
treated as ``n`` scalar points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .exceptions import InvalidInputError, InvalidParameterError, UnsupportedOperationError

__all__ = [
    "KernelSpec",
    "gaussian",
    "delta",
    "kernel_matrix",
    "product_kernel_matrix",
    "median_heuristic",
    "is_discrete",
    "instrument_kernel",
    "center_gram",
    "hsic_biased",
    "hsic_grad_residuals",
]


@dataclass(frozen=True)
class KernelSpec:
    """A Gaussian kernel with fixed bandwidth or the Delta (indicator) kernel."""

    kind: str
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.bandwidth is None or not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
                raise InvalidParameterError(
                    f"Gaussian bandwidth must be a positive finite number, got {self.bandwidth!r}"
                )
            object.__setattr__(self, "bandwidth", float(self.bandwidth))
        elif self.kind == "delta":
            if self.bandwidth is not None:
                raise InvalidParameterError("the Delta kernel takes no bandwidth")
        else:
            raise InvalidParameterError(f"unknown kernel kind {self.kind!r}")

    @property
    def is_gaussian(self) -> bool:
        return self.kind == "gaussian"


def gaussian(bandwidth: float) -> KernelSpec:
    return KernelSpec("gaussian", bandwidth)


def delta() -> KernelSpec:
    return KernelSpec("delta")


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points)
    if arr.ndim == 0:
        raise InvalidInputError("points must be a sequence, got a scalar")
    if arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise InvalidInputError(f"points must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InvalidInputError("points must be non-empty")
    return arr


def kernel_matrix(points, spec: KernelSpec) -> np.ndarray:
    """Gram matrix of ``points`` under ``spec``.

    Gaussian entries are ``exp(-||p_i - p_j||^2 / (2 sigma^2))``; Delta entries
    are 1 where two points are exactly equal and 0 otherwise.
    """
    P = _as_points(points)
    if spec.kind == "delta":
        # row labels make the comparison work for any comparable dtype
        _, labels = np.unique(P, axis=0, return_inverse=True)
        labels = labels.reshape(-1)
        return (labels[:, None] == labels[None, :]).astype(float)
    P = P.astype(float)
    if not np.all(np.isfinite(P)):
        raise InvalidInputError("Gaussian kernel requires finite inputs")
    if P.shape[1] == 1:
        x = P[:, 0]
        sq = (x[:, None] - x[None, :]) ** 2
    else:
        sq = cdist(P, P, "sqeuclidean")
    return np.exp(-sq / (2.0 * spec.bandwidth**2))


def product_kernel_matrix(blocks, specs) -> np.ndarray:
    """Elementwise product of Gram matrices, one per column block."""
    if len(blocks) != len(specs) or not blocks:
        raise InvalidInputError("need one kernel spec per non-empty list of blocks")
    out = kernel_matrix(blocks[0], specs[0])
    for block, spec in zip(blocks[1:], specs[1:]):
        G = kernel_matrix(block, spec)
        if G.shape != out.shape:
            raise InvalidInputError("all blocks must have the same number of rows")
        out = out * G
    return out


def median_heuristic(points) -> float:
    """Median of the nonzero pairwise Euclidean distances (1.0 if there are none)."""
    P = _as_points(points).astype(float)
    if P.shape[0] < 2:
        raise InvalidInputError("the median heuristic needs at least 2 points")
    d = pdist(P)
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return float(np.median(d))


def is_discrete(points, max_levels: int = 10) -> bool:
    """True if ``points`` take at most ``max_levels`` distinct values (rows)."""
    P = _as_points(points)
    return np.unique(P, axis=0).shape[0] <= max_levels


def instrument_kernel(points, kind: str = "auto", max_points: int | None = None) -> KernelSpec:
    """Delta kernel for discrete instruments, median-bandwidth Gaussian otherwise.

    ``max_points`` caps the number of leading rows used by the median heuristic.
    """
    if kind == "delta" or (kind == "auto" and is_discrete(points)):
        return delta()
    if kind not in ("auto", "gaussian"):
        raise InvalidParameterError(f"unknown instrument kernel {kind!r}")
    P = _as_points(points)
    if max_points is not None:
        P = P[:max_points]
    return gaussian(median_heuristic(P))


def center_gram(G: np.ndarray) -> np.ndarray:
    """Return ``H G H`` with ``H = I - 11^T/n``."""
    row = G.mean(axis=0, keepdims=True)
    col = G.mean(axis=1, keepdims=True)
    return G - row - col + G.mean()


def _check_pair(K, L):
    K = np.asarray(K, dtype=float)
    L = np.asarray(L, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidInputError(f"K must be square, got shape {K.shape}")
    if L.shape != K.shape:
        raise InvalidInputError(f"Gram matrices differ in size: {K.shape} vs {L.shape}")
    if K.shape[0] < 2:
        raise InvalidInputError("HSIC needs at least 2 samples")
    return K, L


def hsic_biased(K, L) -> float:
    """Biased HSIC V-statistic ``trace(K H L H) / n^2``."""
    K, L = _check_pair(K, L)
    n = K.shape[0]
    return float(np.sum(center_gram(K) * L) / n**2)


def hsic_grad_residuals(residuals, L, spec_r: KernelSpec) -> np.ndarray:
    """Gradient of ``hsic_biased(K(r), L)`` with respect to the residuals ``r``.

    The bandwidth of ``spec_r`` is held fixed.
    """
    if not spec_r.is_gaussian:
        raise UnsupportedOperationError("residual gradients need a differentiable (Gaussian) kernel")
    r = np.asarray(residuals, dtype=float).reshape(-1)
    K = kernel_matrix(r, spec_r)
    K, L = _check_pair(K, L)
    return _grad_from_centered(r, K, center_gram(L), spec_r.bandwidth)


def _grad_from_centered(r, K, Lc, bandwidth):
    # d/dr_a sum_ij K_ij Lc_ij = 2 sum_j Lc_aj dK_aj/dr_a
    n = r.shape[0]
    M = K * Lc
    return -2.0 / (n**2 * bandwidth**2) * (r * M.sum(axis=1) - M @ r)
