"""Dense linear algebra primitives shared by every other module.

SVD with a deterministic sign convention, thin QR, Moore-Penrose
pseudoinverse with a relative rank cutoff, Gaussian and Haar random
matrices driven by a splittable counter-based random stream, and matrix
I/O (binary and CSV).
"""

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SvdError",
    "SvdResult",
    "RngStream",
    "as_matrix",
    "svd",
    "qr_orthonormal",
    "pseudoinverse",
    "gaussian_matrix",
    "haar_orthogonal",
    "haar_columns",
    "save_matrix",
    "load_matrix",
    "save_matrix_csv",
    "load_matrix_csv",
]

MATRIX_MAGIC = b"QAPM"


class SvdError(ValueError):
    """Raised when an SVD cannot be computed.

    Covers both non-finite input and LAPACK non-convergence, so callers
    that need to recover from a failed factorization have one exception
    to watch for.
    """


def as_matrix(a, check_finite=True):
    """Coerce input to a C-contiguous float64 matrix.

    Parameters
    ----------
    a : array_like
        Two-dimensional input.
    check_finite : bool
        Reject NaN/Inf entries when True.

    Returns
    -------
    ndarray
        float64 array of shape (m, n), row-major.
    """
    x = np.ascontiguousarray(a, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a matrix, got {x.ndim} dimensions")
    if check_finite and not np.all(np.isfinite(x)):
        raise ValueError("matrix entries must be finite")
    return x


@dataclass
class SvdResult:
    """Thin SVD factors X = U diag(s) Vt.

    u has orthonormal columns, vt orthonormal rows, singular_values is
    nonincreasing and nonnegative.
    """

    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def truncation_error(self, r):
        """Frobenius error of the best rank-r truncation, sqrt(sum_{i>r} s_i^2)."""
        tail = self.singular_values[r:]
        return float(np.sqrt(np.sum(tail**2)))


class RngStream:
    """Deterministic random stream on a counter-based bit generator.

    A fixed seed yields a bit-identical sequence across runs and platforms
    (Philox). Parallel trials must not share a stream: `split` derives
    independent child streams deterministically.
    """

    def __init__(self, seed, _seq=None):
        self.seed = int(seed)
        self._seq = np.random.SeedSequence(self.seed) if _seq is None else _seq
        self.generator = np.random.Generator(np.random.Philox(self._seq))

    def split(self, n):
        """Return n independent child streams; advances the parent's spawn state."""
        return [RngStream(self.seed, _seq=c) for c in self._seq.spawn(n)]

    def __repr__(self):
        return f"RngStream(seed={self.seed}, spawn_key={self._seq.spawn_key})"


def svd(x):
    """Thin SVD with a deterministic sign convention.

    Each left singular vector is flipped so that its largest-magnitude
    entry is positive; the corresponding right vector is flipped with it.
    This makes factors comparable across runs without changing the product.

    Parameters
    ----------
    x : array_like
        Matrix with finite entries.

    Returns
    -------
    SvdResult

    Raises
    ------
    SvdError
        If the input contains NaN/Inf or the LAPACK iteration does not
        converge; the message carries the diagnostic.
    """
    x = as_matrix(x, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SvdError("matrix entries must be finite")
    try:
        u, s, vt = np.linalg.svd(x, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD failed to converge: {exc}") from exc
    k = s.shape[0]
    cols = np.arange(k)
    signs = np.sign(u[np.argmax(np.abs(u), axis=0), cols])
    signs[signs == 0] = 1.0
    return SvdResult(u=u * signs, singular_values=s, vt=vt * signs[:, None])


def qr_orthonormal(x):
    """Orthonormal factor Q of the thin QR decomposition.

    Q spans range(X) when X has full column rank; for rank-deficient input
    the remaining columns are an arbitrary orthonormal completion, so
    Q'Q = I holds regardless.

    Parameters
    ----------
    x : array_like
        Matrix with rows >= cols.

    Returns
    -------
    ndarray
        m x n matrix with orthonormal columns.
    """
    x = as_matrix(x)
    m, n = x.shape
    if m < n:
        raise ValueError(f"need rows >= cols, got {m} < {n}")
    q, _ = np.linalg.qr(x)
    return q


def pseudoinverse(x, rank_tol=1e-12):
    """Moore-Penrose pseudoinverse with a relative rank cutoff.

    Singular values below rank_tol * sigma_max are treated as exact zeros.

    Parameters
    ----------
    x : array_like
    rank_tol : real
        Nonnegative relative cutoff; default 1e-12.

    Returns
    -------
    ndarray
        The n x m pseudoinverse.
    """
    if rank_tol < 0:
        raise ValueError("rank_tol must be nonnegative")
    res = svd(x)
    s = res.singular_values
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((res.vt.shape[1], res.u.shape[0]))
    keep = s >= rank_tol * s[0]
    return (res.vt[keep].T / s[keep]) @ res.u[:, keep].T


def gaussian_matrix(m, n, stddev, rng):
    """Matrix of i.i.d. normal entries with mean 0 and the given stddev.

    Advances the stream.
    """
    if stddev <= 0:
        raise ValueError("stddev must be positive")
    return stddev * rng.generator.standard_normal((m, n))


def haar_orthogonal(n, rng):
    """Orthogonal n x n matrix drawn from the Haar distribution.

    QR of a Gaussian matrix with the R diagonal sign fixed, which corrects
    the raw QR factor to the uniform distribution on the orthogonal group.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    return haar_columns(n, n, rng)


def haar_columns(m, r, rng):
    """m x r matrix with orthonormal columns, Haar-uniform on the Stiefel manifold."""
    if not 1 <= r <= m:
        raise ValueError(f"need 1 <= r <= m, got r={r}, m={m}")
    z = rng.generator.standard_normal((m, r))
    q, rr = np.linalg.qr(z)
    d = np.sign(np.diagonal(rr)).copy()
    d[d == 0] = 1.0
    return q * d


def save_matrix(path, x):
    """Write a matrix in the binary format: magic "QAPM", u64 rows, u64 cols,
    then row-major little-endian f64 data."""
    x = as_matrix(x)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sQQ", MATRIX_MAGIC, x.shape[0], x.shape[1]))
        fh.write(x.astype("<f8", copy=False).tobytes(order="C"))


def load_matrix(path):
    """Read a matrix written by save_matrix."""
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) != 20:
            raise ValueError(f"truncated matrix file: {path}")
        magic, rows, cols = struct.unpack("<4sQQ", header)
        if magic != MATRIX_MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        data = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
        if data.size != rows * cols:
            raise ValueError(f"truncated matrix data in {path}")
    return data.reshape(rows, cols).astype(np.float64)


def save_matrix_csv(path, x):
    """Write a matrix as CSV, one row per line, '.' decimal separator.

    The %.17g format round-trips float64 exactly.
    """
    np.savetxt(path, as_matrix(x), delimiter=",", fmt="%.17g")


def load_matrix_csv(path):
    """Read a CSV matrix written by save_matrix_csv."""
    return as_matrix(np.loadtxt(path, delimiter=",", ndmin=2))
