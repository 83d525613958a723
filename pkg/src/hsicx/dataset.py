"""Observed samples (X, Y, Z and optional W) and their CSV format."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError

__all__ = ["Dataset", "read_csv", "write_csv"]


def _block(a, n, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] != n:
        raise InvalidInputError(f"{name} must have {n} rows, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed sample. ``X`` is n x d, ``Y`` length n, ``Z`` n x r, ``W`` n x t or None."""

    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        n = Y.shape[0]
        if n == 0:
            raise InvalidInputError("dataset is empty")
        if not np.all(np.isfinite(Y)):
            raise InvalidInputError("Y has non-finite entries")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", _block(self.X, n, "X"))
        object.__setattr__(self, "Z", _block(self.Z, n, "Z"))
        if self.W is not None:
            object.__setattr__(self, "W", _block(self.W, n, "W"))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def columns(self) -> list[str]:
        cols = [f"x{j + 1}" for j in range(self.X.shape[1])] + ["y"]
        cols += [f"z{j + 1}" for j in range(self.Z.shape[1])]
        if self.W is not None:
            cols += [f"w{j + 1}" for j in range(self.W.shape[1])]
        return cols

    def subset(self, idx) -> "Dataset":
        W = None if self.W is None else self.W[idx]
        return Dataset(self.X[idx], self.Y[idx], self.Z[idx], W)

    def with_y(self, Y) -> "Dataset":
        return Dataset(self.X, Y, self.Z, self.W)

    def with_z(self, Z) -> "Dataset":
        return Dataset(self.X, self.Y, Z, self.W)

    def to_array(self) -> np.ndarray:
        blocks = [self.X, self.Y[:, None], self.Z]
        if self.W is not None:
            blocks.append(self.W)
        return np.hstack(blocks)


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` with header ``x1..xd,y,z1..zr[,w1..wt]`` and 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.columns)
        for row in data.to_array():
            writer.writerow([format(v, ".17g") for v in row])


def read_csv(path) -> Dataset:
    """Inverse of :func:`write_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        try:
            rows = [[float(v) for v in row] for row in reader if row]
        except ValueError as exc:
            raise InvalidInputError(f"{path}: {exc}") from None
    header = [h.strip().lower() for h in header]
    if "y" not in header:
        raise InvalidInputError(f"{path}: header has no 'y' column")
    arr = np.asarray(rows, dtype=float).reshape(len(rows), len(header))

    def cols(prefix):
        idx = [i for i, h in enumerate(header) if h.startswith(prefix) and h[1:].isdigit()]
        idx.sort(key=lambda i: int(header[i][1:]))
        return idx

    ix, iz, iw = cols("x"), cols("z"), cols("w")
    if not ix or not iz:
        raise InvalidInputError(f"{path}: need at least one x and one z column")
    W = arr[:, iw] if iw else None
    return Dataset(arr[:, ix], arr[:, header.index("y")], arr[:, iz], W)
