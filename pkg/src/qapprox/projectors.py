"""Projections onto the fixed-rank set: truncated SVD and randomized SVD.

A rank-r matrix is carried as a FactoredMatrix (left m x r, right n x r,
representing left @ right.T) so that single entries, row blocks and column
blocks cost O(r) per entry. Error and negative-part norms stream over row
blocks and never allocate a dense m x n intermediate.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .linalg import SvdError, as_matrix, qr_orthonormal, svd

__all__ = [
    "FactoredMatrix",
    "RsvdConfig",
    "svd_truncate",
    "rsvd_truncate",
    "frobenius_error",
    "negative_part_norms",
    "save_factored",
    "load_factored",
]

FACTORED_MAGIC = b"QAPF"

_BLOCK_ENTRIES = 1 << 20


@dataclass
class FactoredMatrix:
    """Rank-r matrix stored as left @ right.T."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = np.ascontiguousarray(self.left, dtype=np.float64)
        self.right = np.ascontiguousarray(self.right, dtype=np.float64)
        if self.left.ndim != 2 or self.right.ndim != 2:
            raise ValueError("factors must be matrices")
        if self.left.shape[1] != self.right.shape[1]:
            raise ValueError(
                f"factor ranks differ: {self.left.shape[1]} vs {self.right.shape[1]}"
            )

    @property
    def shape(self):
        return (self.left.shape[0], self.right.shape[0])

    @property
    def rank(self):
        """Number of factor columns (an upper bound on the matrix rank)."""
        return self.left.shape[1]

    def entry(self, i, j):
        """Single entry in O(r)."""
        return float(self.left[i] @ self.right[j])

    def rows(self, idx):
        """Row block at the given indices, shape (len(idx), n)."""
        return self.left[np.asarray(idx)] @ self.right.T

    def cols(self, idx):
        """Column block at the given indices, shape (m, len(idx))."""
        return self.left @ self.right[np.asarray(idx)].T

    def materialize(self):
        """Dense m x n matrix."""
        return self.left @ self.right.T

    def row_blocks(self, block_entries=_BLOCK_ENTRIES):
        """Yield (start, stop, dense block) over row slices of bounded size."""
        m, n = self.shape
        step = max(1, block_entries // max(n, 1))
        for start in range(0, m, step):
            stop = min(start + step, m)
            yield start, stop, self.left[start:stop] @ self.right.T


@dataclass
class RsvdConfig:
    """Randomized range finder parameters: oversampling p >= 1, power iterations q >= 0."""

    oversampling: int = 2
    power_iterations: int = 0

    def __post_init__(self):
        if self.oversampling < 1:
            raise ValueError("oversampling must be at least 1")
        if self.power_iterations < 0:
            raise ValueError("power_iterations must be nonnegative")


def svd_truncate(x, r):
    """Best rank-r approximation in the Frobenius norm.

    The left factor absorbs the singular values: left = U_r diag(s_1..s_r).
    When rank(X) < r the factors keep r columns with a zero tail so
    downstream shapes stay fixed.

    Parameters
    ----------
    x : array_like
    r : int
        Target rank, 0 <= r <= min(m, n).

    Returns
    -------
    FactoredMatrix
    """
    x = as_matrix(x, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SvdError("matrix entries must be finite")
    if not 0 <= r <= min(x.shape):
        raise ValueError(f"rank {r} not admissible for shape {x.shape}")
    res = svd(x)
    return FactoredMatrix(
        res.u[:, :r] * res.singular_values[:r], res.vt[:r].T.copy()
    )


def rsvd_truncate(x, r, cfg=None, rng=None):
    """Rank-r approximation by the randomized range finder.

    Draws a Gaussian test matrix with r + p columns, runs q power
    iterations, orthonormalizes the range (QR of (XX')^q X Omega), and
    truncates the projected matrix Q'X to rank r.

    Parameters
    ----------
    x : array_like
    r : int
        Target rank; r + cfg.oversampling <= min(m, n).
    cfg : RsvdConfig
    rng : RngStream

    Returns
    -------
    FactoredMatrix
    """
    x = as_matrix(x, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SvdError("matrix entries must be finite")
    cfg = RsvdConfig() if cfg is None else cfg
    if rng is None:
        raise ValueError("rsvd_truncate needs an RngStream")
    if r + cfg.oversampling > min(x.shape):
        raise ValueError(
            f"rank {r} + oversampling {cfg.oversampling} exceeds min{x.shape}"
        )
    omega = rng.generator.standard_normal((x.shape[1], r + cfg.oversampling))
    y = x @ omega
    for _ in range(cfg.power_iterations):
        y = x @ (x.T @ y)
    q = qr_orthonormal(y)
    inner = svd_truncate(q.T @ x, r)
    return FactoredMatrix(q @ inner.left, inner.right)


def frobenius_error(x, y):
    """Frobenius norm of X - Y for dense X and factored Y, streamed over row blocks."""
    x = as_matrix(x, check_finite=False)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    acc = 0.0
    for start, stop, block in y.row_blocks():
        diff = x[start:stop] - block
        acc += float(np.dot(diff.ravel(), diff.ravel()))
    return float(np.sqrt(acc))


def negative_part_norms(y):
    """Frobenius and max norms of the negative part min(0, Y).

    Streams over row blocks; no dense m x n allocation.

    Returns
    -------
    (float, float)
        (||min(0, Y)||_F, ||min(0, Y)||_max)
    """
    acc = 0.0
    worst = 0.0
    for _, _, block in y.row_blocks():
        neg = np.minimum(block, 0.0)
        acc += float(np.dot(neg.ravel(), neg.ravel()))
        worst = max(worst, float(-neg.min()) if neg.size else 0.0)
    return float(np.sqrt(acc)), worst


def save_factored(path, y):
    """Write a FactoredMatrix: magic "QAPF", u64 m, n, r, then the left and
    right factors row-major little-endian f64."""
    m, n = y.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sQQQ", FACTORED_MAGIC, m, n, y.rank))
        fh.write(y.left.astype("<f8", copy=False).tobytes(order="C"))
        fh.write(y.right.astype("<f8", copy=False).tobytes(order="C"))


def load_factored(path):
    """Read a FactoredMatrix written by save_factored."""
    with open(path, "rb") as fh:
        header = fh.read(28)
        if len(header) != 28:
            raise ValueError(f"truncated factored file: {path}")
        magic, m, n, r = struct.unpack("<4sQQQ", header)
        if magic != FACTORED_MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        left = np.frombuffer(fh.read(8 * m * r), dtype="<f8")
        right = np.frombuffer(fh.read(8 * n * r), dtype="<f8")
        if left.size != m * r or right.size != n * r:
            raise ValueError(f"truncated factor data in {path}")
    return FactoredMatrix(left.reshape(m, r).copy(), right.reshape(n, r).copy())
