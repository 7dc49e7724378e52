"""Cross approximation driven by locally maximal (projective) volume.

A rank-r cross approximation interpolates r rows and columns of a matrix
seen only through an entry oracle: X ~ C X(I,J)^{-1} R with C = X(:,J)
and R = X(I,:). Index sets are improved by row swaps that increase the
pivot volume (maxvol), or the projective volume for rectangular pivots
(maxvol_rect / dominant_r), until no single swap wins more than a factor
nu. Entry oracles compose entrywise transforms, so a constraint step can
be evaluated lazily on O((m+n)r) entries per sweep instead of densely.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import svd
from .projectors import FactoredMatrix

__all__ = [
    "CrossError",
    "EvalCounter",
    "EntryOracle",
    "CountingOracle",
    "dense_oracle",
    "factored_oracle",
    "clamp_nonneg",
    "absolute",
    "shift",
    "indent",
    "arccot",
    "CrossState",
    "maxvol",
    "maxvol_rect",
    "dominant_r",
    "cross_project_vol",
    "cross_project_pvol",
    "estimate_min_entry",
]

DEFAULT_NU = 1.05
DEFAULT_MAX_SWEEPS = 20

_PIVOT_RANK_TOL = 1e-12


class CrossError(Exception):
    """Volume iteration failure; carries the current index set."""

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices


def clamp_nonneg(values):
    """Entrywise max(0, x)."""
    return np.maximum(values, 0.0)


def absolute(values):
    """Entrywise |x|."""
    return np.abs(values)


def shift(alpha):
    """Entrywise x + alpha."""

    def apply(values):
        return values + alpha

    return apply


def indent(alpha):
    """Entrywise max(alpha, x)."""

    def apply(values):
        return np.maximum(values, alpha)

    return apply


def arccot(values):
    """Principal arccotangent, mapping the reals onto (0, pi) monotone
    decreasing, so the largest transformed value marks the most negative
    input entry."""
    return np.arctan2(1.0, values)


class EntryOracle:
    """Matrix entries on demand with a composed entrywise transform."""

    def __init__(self, shape, rows_fn, cols_fn, submatrix_fn, transforms=()):
        self.shape = tuple(shape)
        self._rows_fn = rows_fn
        self._cols_fn = cols_fn
        self._submatrix_fn = submatrix_fn
        self.transforms = tuple(transforms)

    def transformed(self, fn):
        """New oracle with fn appended to the transform chain (applied last)."""
        return EntryOracle(
            self.shape,
            self._rows_fn,
            self._cols_fn,
            self._submatrix_fn,
            self.transforms + (fn,),
        )

    def _apply(self, block):
        for fn in self.transforms:
            block = fn(block)
        return block

    def rows(self, idx):
        """Transformed row block, shape (len(idx), n)."""
        return self._apply(self._rows_fn(np.asarray(idx, dtype=np.intp)))

    def cols(self, idx):
        """Transformed column block, shape (m, len(idx))."""
        return self._apply(self._cols_fn(np.asarray(idx, dtype=np.intp)))

    def submatrix(self, row_idx, col_idx):
        """Transformed submatrix, shape (len(row_idx), len(col_idx))."""
        return self._apply(
            self._submatrix_fn(
                np.asarray(row_idx, dtype=np.intp), np.asarray(col_idx, dtype=np.intp)
            )
        )

    def entry(self, i, j):
        """Single transformed entry."""
        return float(self.submatrix([i], [j])[0, 0])


def dense_oracle(x):
    """Oracle over a dense matrix."""
    x = np.asarray(x, dtype=np.float64)

    return EntryOracle(
        x.shape,
        lambda idx: x[idx],
        lambda idx: x[:, idx],
        lambda ri, ci: x[np.ix_(ri, ci)],
    )


def factored_oracle(y):
    """Oracle over a FactoredMatrix; every access costs O(r) per entry."""

    return EntryOracle(
        y.shape,
        y.rows,
        y.cols,
        lambda ri, ci: y.left[ri] @ y.right[ci].T,
    )


@dataclass
class EvalCounter:
    """Running count of oracle entries evaluated."""

    entries: int = 0


class CountingOracle:
    """Wrapper that counts entry evaluations; shared across transformed views."""

    def __init__(self, inner, counter=None):
        self.inner = inner
        self.counter = EvalCounter() if counter is None else counter

    @property
    def shape(self):
        return self.inner.shape

    @property
    def entries_evaluated(self):
        return self.counter.entries

    def transformed(self, fn):
        return CountingOracle(self.inner.transformed(fn), self.counter)

    def rows(self, idx):
        block = self.inner.rows(idx)
        self.counter.entries += block.size
        return block

    def cols(self, idx):
        block = self.inner.cols(idx)
        self.counter.entries += block.size
        return block

    def submatrix(self, row_idx, col_idx):
        block = self.inner.submatrix(row_idx, col_idx)
        self.counter.entries += block.size
        return block

    def entry(self, i, j):
        self.counter.entries += 1
        return self.inner.entry(i, j)


@dataclass
class CrossState:
    """Index sets carried between warm-started cross calls.

    rows/cols are the interpolation sets I and J; aux_rows/aux_cols are the
    auxiliary rank-r subsets used only by the projective-volume variant.
    effective_rank drops below the requested rank when the pivot block is
    numerically singular; swaps counts the row/column exchanges performed
    by the most recent call.
    """

    rows: np.ndarray
    cols: np.ndarray
    aux_rows: np.ndarray | None = None
    aux_cols: np.ndarray | None = None
    nu: float = DEFAULT_NU
    effective_rank: int | None = None
    swaps: int = 0

    def __post_init__(self):
        self.nu = _validate_nu(self.nu)
        self.rows = np.asarray(self.rows, dtype=np.intp)
        self.cols = np.asarray(self.cols, dtype=np.intp)
        if self.aux_rows is not None:
            self.aux_rows = np.asarray(self.aux_rows, dtype=np.intp)
        if self.aux_cols is not None:
            self.aux_cols = np.asarray(self.aux_cols, dtype=np.intp)
        for name in ("rows", "cols", "aux_rows", "aux_cols"):
            idx = getattr(self, name)
            if idx is not None and len(np.unique(idx)) != len(idx):
                raise ValueError(f"duplicate indices in {name}")

    def to_text(self):
        """Small text block for experiment checkpointing."""
        lines = [f"nu {self.nu!r}"]
        for name in ("rows", "cols", "aux_rows", "aux_cols"):
            idx = getattr(self, name)
            if idx is not None:
                lines.append(name + " " + " ".join(str(int(i)) for i in idx))
        if self.effective_rank is not None:
            lines.append(f"effective_rank {self.effective_rank}")
        lines.append(f"swaps {self.swaps}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        fields = {}
        for line in text.strip().splitlines():
            key, _, rest = line.partition(" ")
            fields[key] = rest
        kwargs = {"nu": float(fields["nu"])}
        for name in ("rows", "cols", "aux_rows", "aux_cols"):
            if name in fields:
                kwargs[name] = np.array(
                    [int(tok) for tok in fields[name].split()], dtype=np.intp
                )
        if "effective_rank" in fields:
            kwargs["effective_rank"] = int(fields["effective_rank"])
        if "swaps" in fields:
            kwargs["swaps"] = int(fields["swaps"])
        return cls(**kwargs)


def _pivot_rows_lu(a, k):
    """First k partial-pivoting LU rows of a tall matrix; the deterministic
    repair for singular starting submatrices."""
    perm = scipy.linalg.lu(a, p_indices=True)[0]
    return np.array(perm[:k], dtype=np.intp)


def _validate_nu(nu):
    if not nu >= 1.0:
        raise ValueError(f"volume slack factor must be >= 1, got {nu}")
    return float(nu)


def _validate_start(idx, r, bound, name):
    idx = np.asarray(idx, dtype=np.intp)
    if idx.shape != (r,):
        raise ValueError(f"{name} must hold {r} indices, got shape {idx.shape}")
    if len(np.unique(idx)) != r:
        raise ValueError(f"{name} has duplicate indices")
    if idx.size and (idx.min() < 0 or idx.max() >= bound):
        raise ValueError(f"{name} out of range [0, {bound})")
    return idx


def _maxvol_impl(a, start_rows, nu, max_swaps):
    """Square maxvol; returns (sorted rows, swap count)."""
    m, r = a.shape
    if m < r:
        raise ValueError(f"need rows >= cols, got {a.shape}")
    nu = _validate_nu(nu)
    idx = _validate_start(start_rows, r, m, "start_rows").copy()
    if max_swaps is None:
        max_swaps = 10 * m
    if m == r:
        return np.arange(m, dtype=np.intp), 0

    def coefficients(rows):
        try:
            b = np.linalg.solve(a[rows].T, a.T).T
        except np.linalg.LinAlgError:
            return None
        return b if np.all(np.isfinite(b)) else None

    b = coefficients(idx)
    if b is None:
        idx = _pivot_rows_lu(a, r)
        b = coefficients(idx)
        if b is None:
            # Rank-deficient input: every submatrix is singular, nothing to improve.
            return np.sort(idx), 0
    # Selected rows carry identity coefficients in exact arithmetic; masking
    # them keeps a near-singular pivot from re-selecting a held row.
    selected = np.zeros(m, dtype=bool)
    selected[idx] = True
    swaps = 0
    while True:
        scores = np.abs(b)
        scores[selected] = -np.inf
        flat = np.argmax(scores)
        i, j = divmod(flat, r)
        if scores[i, j] <= nu:
            break
        if swaps >= max_swaps:
            raise CrossError(
                f"maxvol did not settle within {max_swaps} swaps", indices=np.sort(idx)
            )
        coeff_col = b[:, j].copy()
        coeff_row = b[i].copy()
        coeff_row[j] -= 1.0
        b -= np.outer(coeff_col, coeff_row / b[i, j])
        selected[idx[j]] = False
        idx[j] = i
        selected[i] = True
        swaps += 1
    return np.sort(idx), swaps


def maxvol(a, start_rows, nu=DEFAULT_NU, max_swaps=None):
    """Rows of a locally maximal-volume r x r submatrix of a tall m x r matrix.

    Performs row interchanges, each at the entry of largest modulus of
    A A(I,:)^{-1}, until no single-row swap can increase |det| of the
    selected submatrix by more than the factor nu.

    Parameters
    ----------
    a : array_like
        Tall matrix, m >= r.
    start_rows : index set
        r distinct starting rows; a singular starting submatrix is repaired
        by partial-pivoted LU row selection before iterating.
    nu : real
        Volume slack factor >= 1.
    max_swaps : int
        Swap budget, default 10 m; exceeding it raises CrossError with the
        current index set attached.

    Returns
    -------
    ndarray
        Sorted row indices.
    """
    idx, _ = _maxvol_impl(np.asarray(a, dtype=np.float64), start_rows, nu, max_swaps)
    return idx


def _greedy_extend(a, idx, k):
    """Grow idx to k rows, one row at a time by largest residual leverage."""
    chosen = list(idx)
    for _ in range(k - len(chosen)):
        sub = a[np.array(chosen, dtype=np.intp)]
        gram = sub.T @ sub
        t = a @ np.linalg.pinv(gram)
        lev = np.einsum("ij,ij->i", t, a)
        lev[np.array(chosen, dtype=np.intp)] = -np.inf
        chosen.append(int(np.argmax(lev)))
    return np.array(chosen, dtype=np.intp)


def _rect_ratios(a, idx):
    """Volume-squared gain (1+q_jj)(1-q_ii) + q_ij^2 for swapping row idx[t]
    out and row j in, where q_ab = a_a' G^{-1} a_b with G the selected Gram
    matrix. Returns None when G is singular."""
    sub = a[idx]
    gram = sub.T @ sub
    try:
        chol = scipy.linalg.cho_factor(gram, check_finite=False)
    except scipy.linalg.LinAlgError:
        return None
    t = scipy.linalg.cho_solve(chol, a.T, check_finite=False).T
    if not np.all(np.isfinite(t)):
        return None
    qdiag = np.einsum("ij,ij->i", t, a)
    qcross = t @ sub.T
    gains = (1.0 + qdiag)[:, None] * (1.0 - qdiag[idx])[None, :] + qcross**2
    gains[idx, :] = -np.inf
    return gains


def _maxvol_rect_impl(a, k, start_rows, nu, max_swaps):
    """Rectangular maxvol; returns (sorted rows, swap count)."""
    m, r = a.shape
    if not r <= k <= m:
        raise ValueError(f"need r <= k <= m, got k={k} for shape {a.shape}")
    nu = _validate_nu(nu)
    idx = _validate_start(start_rows, k, m, "start_rows").copy()
    if max_swaps is None:
        max_swaps = 10 * m
    if k == m:
        return np.arange(m, dtype=np.intp), 0
    nu_sq = nu * nu
    swaps = 0
    repaired = False
    while True:
        gains = _rect_ratios(a, idx)
        if gains is None:
            if repaired:
                # Input rank below r: projective volume is identically zero.
                return np.sort(idx), swaps
            idx = _greedy_extend(a, _pivot_rows_lu(a, r), k)
            repaired = True
            continue
        flat = np.argmax(gains)
        j, t = divmod(flat, k)
        if gains[j, t] <= nu_sq:
            break
        if swaps >= max_swaps:
            raise CrossError(
                f"maxvol_rect did not settle within {max_swaps} swaps",
                indices=np.sort(idx),
            )
        idx[t] = j
        swaps += 1
    return np.sort(idx), swaps


def maxvol_rect(a, k, start_rows, nu=DEFAULT_NU, max_swaps=None):
    """k >= r rows of a tall m x r matrix with locally maximal projective volume.

    The selected k x r submatrix admits no single-row swap that increases
    its projective volume (product of its r singular values) by more than
    the factor nu. With k = r this coincides with the square maxvol
    criterion.

    Returns sorted row indices.
    """
    idx, _ = _maxvol_rect_impl(
        np.asarray(a, dtype=np.float64), k, start_rows, nu, max_swaps
    )
    return idx


def _dominant_r_impl(a, start_cols, nu, max_swaps):
    """Locally dominant column subset; returns (sorted cols, swap count)."""
    k, n = a.shape
    r = len(np.asarray(start_cols))
    if r > n:
        raise ValueError(f"cannot select {r} columns from {n}")
    nu = _validate_nu(nu)
    idx = _validate_start(start_cols, r, n, "start_cols").copy()
    if max_swaps is None:
        max_swaps = 10 * n
    if r == n:
        return np.arange(n, dtype=np.intp), 0
    col_sq = np.einsum("ij,ij->j", a, a)
    nu_sq = nu * nu
    swaps = 0
    repaired = False
    while True:
        best_gain = -np.inf
        best = None
        degenerate = False
        for t in range(r):
            others = np.delete(idx, t)
            q, _ = np.linalg.qr(a[:, others])
            proj = q.T @ a
            resid = np.maximum(col_sq - np.einsum("ij,ij->j", proj, proj), 0.0)
            denom = resid[idx[t]]
            if denom <= 1e-300:
                degenerate = True
                break
            gains = resid / denom
            gains[idx] = -np.inf
            j = int(np.argmax(gains))
            if gains[j] > best_gain:
                best_gain = gains[j]
                best = (t, j)
        if degenerate:
            if repaired:
                # Row block rank below r: every selection has zero volume.
                return np.sort(idx), swaps
            idx = np.array(
                scipy.linalg.qr(a, pivoting=True, mode="r")[-1][:r], dtype=np.intp
            )
            repaired = True
            continue
        if best_gain <= nu_sq:
            break
        if swaps >= max_swaps:
            raise CrossError(
                f"dominant_r did not settle within {max_swaps} swaps",
                indices=np.sort(idx),
            )
        idx[best[0]] = best[1]
        swaps += 1
    return np.sort(idx), swaps


def dominant_r(a, start_cols, nu=DEFAULT_NU, max_swaps=None):
    """r columns of a wide k x n matrix with locally maximal r-projective volume.

    The r-projective volume of the selected k x r submatrix (product of its
    top r singular values) admits no single-column swap improving it by
    more than the factor nu. A swap of column u for column v multiplies the
    squared volume by the ratio of their squared residuals against the
    span of the other r-1 selected columns, which is what the sweep
    evaluates exactly.

    Returns sorted column indices.
    """
    idx, _ = _dominant_r_impl(np.asarray(a, dtype=np.float64), start_cols, nu, max_swaps)
    return idx


def _draw_distinct(rng, bound, count):
    return np.sort(rng.generator.choice(bound, size=count, replace=False).astype(np.intp))


class _BlockMemo:
    """Per-call cache of sampled row/column blocks keyed by index tuples."""

    def __init__(self, oracle):
        self.oracle = oracle
        self._rows = {}
        self._cols = {}

    def rows(self, idx):
        key = tuple(int(i) for i in idx)
        if key not in self._rows:
            self._rows[key] = self.oracle.rows(idx)
        return self._rows[key]

    def cols(self, idx):
        key = tuple(int(j) for j in idx)
        if key not in self._cols:
            self._cols[key] = self.oracle.cols(idx)
        return self._cols[key]


def _pivot_svd(pivot, r):
    """SVD of the pivot block plus the count of top-r singular values above
    the relative rank cutoff; the count drops below r only for numerically
    singular pivots."""
    res = svd(pivot)
    s = res.singular_values[:r]
    if s.size == 0 or s[0] == 0.0:
        return res, 0
    return res, int(np.count_nonzero(s >= _PIVOT_RANK_TOL * s[0]))


def _truncated_pinv(pivot, r):
    """Pseudoinverse of the best rank-r part of the pivot block.

    Returns (pinv, effective_rank); singular values below the relative
    cutoff are dropped without perturbation so the fallback is deterministic.
    """
    res, eff = _pivot_svd(pivot, r)
    if eff == 0:
        return np.zeros((pivot.shape[1], pivot.shape[0])), 0
    s = res.singular_values[:eff]
    return (res.vt[:eff].T / s) @ res.u[:, :eff].T, eff


def cross_project_vol(
    oracle, r, state=None, rng=None, nu=DEFAULT_NU, max_sweeps=DEFAULT_MAX_SWEEPS
):
    """Rank-r cross approximation with square maxvol pivot search.

    Alternates I <- maxvol over sampled columns X(:,J) and J <- maxvol over
    sampled rows X(I,:) until both index sets are stable or max_sweeps is
    reached, then returns the interpolation C X(I,J)^{-1} R as a
    FactoredMatrix together with the final state for warm restarts. Each
    sweep evaluates O((m+n) r) oracle entries; an exactly singular pivot
    block drops to its numerical rank, reported in state.effective_rank.

    Parameters
    ----------
    oracle : EntryOracle
    r : int
        Target rank, r <= min(m, n).
    state : CrossState or None
        Warm-start index sets; None draws fresh uniform sets from rng.
    rng : RngStream
        Required when state is None.

    Returns
    -------
    (FactoredMatrix, CrossState)
    """
    m, n = oracle.shape
    if not 1 <= r <= min(m, n):
        raise ValueError(f"rank {r} not admissible for shape {oracle.shape}")
    if state is None:
        if rng is None:
            raise ValueError("fresh start needs an RngStream")
        row_idx = _draw_distinct(rng, m, r)
        col_idx = _draw_distinct(rng, n, r)
    else:
        row_idx = _validate_start(state.rows, r, m, "state.rows")
        col_idx = _validate_start(state.cols, r, n, "state.cols")
        nu = state.nu
    memo = _BlockMemo(oracle)
    swaps = 0
    for _ in range(max_sweeps):
        col_block = memo.cols(col_idx)
        new_rows, s_r = _maxvol_impl(col_block, row_idx, nu, None)
        row_block = memo.rows(new_rows)
        new_cols, s_c = _maxvol_impl(row_block.T, col_idx, nu, None)
        swaps += s_r + s_c
        stable = np.array_equal(new_rows, row_idx) and np.array_equal(new_cols, col_idx)
        row_idx, col_idx = new_rows, new_cols
        if stable:
            break
    col_block = memo.cols(col_idx)
    row_block = memo.rows(row_idx)
    pivot = col_block[row_idx]
    pinv, eff = _truncated_pinv(pivot, r)
    approx = FactoredMatrix(col_block @ pinv, row_block.T.copy())
    out_state = CrossState(
        rows=row_idx,
        cols=col_idx,
        nu=nu,
        effective_rank=eff,
        swaps=swaps,
    )
    return approx, out_state


def cross_project_pvol(
    oracle,
    r,
    k_r,
    k_c,
    state=None,
    rng=None,
    nu=DEFAULT_NU,
    max_sweeps=DEFAULT_MAX_SWEEPS,
):
    """Rank-r cross approximation with rectangular k_r x k_c pivot blocks.

    The index sets I (k_r rows) and J (k_c columns) are steered by the
    auxiliary rank-r subsets: I <- maxvol_rect against X(:, J_r), then
    J_r <- dominant_r on X(I, :), and the symmetric pass updates J and I_r.
    The output is C [best rank-r of X(I,J)]^+ R, a rank-r FactoredMatrix.

    Parameters and return as in cross_project_vol; k_r = k_c = r reproduces
    square-pivot behavior.
    """
    m, n = oracle.shape
    if not (1 <= r <= k_r <= m and r <= k_c <= n):
        raise ValueError(
            f"need r <= k_r <= m and r <= k_c <= n, got r={r}, k_r={k_r}, "
            f"k_c={k_c}, shape {oracle.shape}"
        )
    if state is None:
        if rng is None:
            raise ValueError("fresh start needs an RngStream")
        row_idx = _draw_distinct(rng, m, k_r)
        col_idx = _draw_distinct(rng, n, k_c)
        aux_rows = _draw_distinct(rng, m, r)
        aux_cols = _draw_distinct(rng, n, r)
    else:
        row_idx = _validate_start(state.rows, k_r, m, "state.rows")
        col_idx = _validate_start(state.cols, k_c, n, "state.cols")
        aux_rows = _validate_start(state.aux_rows, r, m, "state.aux_rows")
        aux_cols = _validate_start(state.aux_cols, r, n, "state.aux_cols")
        nu = state.nu
    memo = _BlockMemo(oracle)
    swaps = 0
    for _ in range(max_sweeps):
        new_rows, s1 = _maxvol_rect_impl(memo.cols(aux_cols), k_r, row_idx, nu, None)
        new_aux_cols, s2 = _dominant_r_impl(memo.rows(new_rows), aux_cols, nu, None)
        new_cols, s3 = _maxvol_rect_impl(memo.rows(aux_rows).T, k_c, col_idx, nu, None)
        new_aux_rows, s4 = _dominant_r_impl(memo.cols(new_cols).T, aux_rows, nu, None)
        swaps += s1 + s2 + s3 + s4
        stable = (
            np.array_equal(new_rows, row_idx)
            and np.array_equal(new_cols, col_idx)
            and np.array_equal(new_aux_rows, aux_rows)
            and np.array_equal(new_aux_cols, aux_cols)
        )
        row_idx, col_idx = new_rows, new_cols
        aux_rows, aux_cols = new_aux_rows, new_aux_cols
        if stable:
            break
    col_block = memo.cols(col_idx)
    row_block = memo.rows(row_idx)
    pivot = col_block[row_idx]
    res, eff = _pivot_svd(pivot, r)
    left = np.zeros((m, r))
    right = np.zeros((n, r))
    if eff > 0:
        s = res.singular_values[:eff]
        left[:, :eff] = col_block @ (res.vt[:eff].T / s)
        right[:, :eff] = row_block.T @ res.u[:, :eff]
    approx = FactoredMatrix(left, right)
    out_state = CrossState(
        rows=row_idx,
        cols=col_idx,
        aux_rows=aux_rows,
        aux_cols=aux_cols,
        nu=nu,
        effective_rank=eff,
        swaps=swaps,
    )
    return approx, out_state


def estimate_min_entry(oracle, rng, nu=1.0, max_sweeps=DEFAULT_MAX_SWEEPS):
    """Surrogate for the most negative entry of an oracle.

    Runs rank-1 cross approximation on the arccot-transformed oracle from a
    random start; the pivot chases the largest transformed value, which is
    the most negative input entry along the sampled rows and columns. The
    default nu accepts every strict improvement, since this is an extremum
    chase rather than a basis selection. The result is a heuristic and may
    miss the global minimum.

    Returns
    -------
    (i, j, value)
        Pivot location and the untransformed oracle value there.
    """
    _, state = cross_project_vol(
        oracle.transformed(arccot), 1, state=None, rng=rng, nu=nu, max_sweeps=max_sweeps
    )
    i = int(state.rows[0])
    j = int(state.cols[0])
    return i, j, oracle.entry(i, j)
