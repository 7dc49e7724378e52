"""Alternating projection schemes for nonnegative low-rank approximation.

Each cycle applies a constraint step toward the nonnegative orthant and
then a low-rank projector. The constraint step is one of four entrywise
maps: clamping (AP), reflection by absolute value (RP), shifting by
alpha_k (SP), or indenting at alpha_k (IP), with alpha_k proportional to
the magnitude of the most negative entry. Dense projectors (SVD, RSVD,
TT-SVD) consume the transformed iterate densely; cross projectors receive
it as a composed entry oracle, so a cycle touches only O((m+n)r) entries.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from .cross import (
    CrossError,
    absolute,
    clamp_nonneg,
    cross_project_pvol,
    cross_project_vol,
    dense_oracle,
    estimate_min_entry,
    factored_oracle,
    indent,
    shift,
)
from .linalg import RngStream, SvdError
from .projectors import (
    FactoredMatrix,
    RsvdConfig,
    frobenius_error,
    negative_part_norms,
    rsvd_truncate,
    svd_truncate,
)
from .tt import TTTensor, tt_materialize, tt_unfolding_oracle, ttsvd

__all__ = [
    "SCHEMES",
    "PROJECTORS",
    "CROSS_PROJECTORS",
    "SchemeError",
    "SchemeConfig",
    "TraceRow",
    "IterationTrace",
    "constraint_step",
    "compute_alpha",
    "run_scheme",
    "run_scheme_tt",
]

SCHEMES = ("AP", "RP", "SP", "IP")
PROJECTORS = ("SVD", "RSVD", "VOL_warm", "VOL_cold", "PVOL_warm", "PVOL_cold", "TTSVD")
CROSS_PROJECTORS = ("VOL_warm", "VOL_cold", "PVOL_warm", "PVOL_cold")

TRACE_COLUMNS = ("iter", "neg_fro", "neg_max", "rel_err", "alpha", "swaps")


class SchemeError(Exception):
    """Projector failure inside an iteration; carries the iteration index."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


def default_alpha_mode(projector):
    """Exact scans where a dense pass happens anyway, surrogate for cross."""
    return "surrogate" if projector in CROSS_PROJECTORS else "exact"


@dataclass
class SchemeConfig:
    """One scheme run: what to project onto, how, and for how long.

    rank is an integer for matrix projectors; for TTSVD it is either the
    internal rank vector or a relative tolerance in (0, 1), in which case
    the initial projection picks the ranks and later cycles keep them
    fixed. k_rows/k_cols size the rectangular index sets of PVOL (default
    3 x rank, clipped to the matrix sides). alpha_mode None defers to
    default_alpha_mode.
    """

    scheme: str
    projector: str
    rank: object
    beta: float | None = None
    max_iters: int = 100
    seed: int = 0
    alpha_mode: str | None = None
    nu: float = 1.05
    k_rows: int | None = None
    k_cols: int | None = None
    rsvd: RsvdConfig = field(default_factory=RsvdConfig)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.projector not in PROJECTORS:
            raise ValueError(
                f"unknown projector {self.projector!r}, expected one of {PROJECTORS}"
            )
        if self.scheme in ("SP", "IP"):
            if self.beta is None or self.beta < 0:
                raise ValueError(f"{self.scheme} needs beta >= 0, got {self.beta}")
        elif self.beta is not None:
            raise ValueError(f"{self.scheme} does not take beta")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.alpha_mode not in (None, "exact", "surrogate"):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")
        if not self.nu >= 1.0:
            raise ValueError(f"volume slack factor must be >= 1, got {self.nu}")

    @property
    def resolved_alpha_mode(self):
        return self.alpha_mode or default_alpha_mode(self.projector)


@dataclass
class TraceRow:
    k: int
    neg_fro: float
    neg_max: float
    rel_err: float
    alpha: float
    swaps: int


@dataclass
class IterationTrace:
    """Per-cycle convergence record; row 0 describes the initial projection."""

    rows: list

    def __post_init__(self):
        for expected, row in enumerate(self.rows):
            if row.k != expected:
                raise ValueError(f"iteration numbers must run 0.., got {row.k}")
            if row.neg_fro < 0:
                raise ValueError("neg_fro must be nonnegative")

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([getattr(row, name if name != "iter" else "k") for row in self.rows])

    def to_csv_text(self):
        out = io.StringIO()
        out.write(",".join(TRACE_COLUMNS) + "\n")
        for row in self.rows:
            out.write(
                f"{row.k},{row.neg_fro:.17g},{row.neg_max:.17g},"
                f"{row.rel_err:.17g},{row.alpha:.17g},{row.swaps}\n"
            )
        return out.getvalue()

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text):
        lines = text.strip().splitlines()
        if lines[0] != ",".join(TRACE_COLUMNS):
            raise ValueError(f"unexpected trace header {lines[0]!r}")
        rows = []
        for line in lines[1:]:
            k, nf, nm, re_, al, sw = line.split(",")
            rows.append(
                TraceRow(int(k), float(nf), float(nm), float(re_), float(al), int(sw))
            )
        return cls(rows)

    @classmethod
    def read_csv(cls, path):
        with open(path) as fh:
            return cls.from_csv_text(fh.read())


def transform_for(scheme, alpha=0.0):
    """Entrywise map of the scheme's constraint step."""
    if scheme == "AP":
        return clamp_nonneg
    if scheme == "RP":
        return absolute
    if scheme in ("SP", "IP"):
        if alpha < 0:
            raise ValueError(f"{scheme} needs alpha >= 0, got {alpha}")
        return shift(alpha) if scheme == "SP" else indent(alpha)
    raise ValueError(f"unknown scheme {scheme!r}")


def constraint_step(y, scheme, alpha=0.0, as_oracle=False):
    """Constraint step toward the nonnegative orthant.

    Dense inputs (arrays, factored matrices, tensor trains) return a dense
    array; with as_oracle=True a factored matrix or entry oracle returns a
    lazily transformed EntryOracle instead, which is how cross projectors
    consume the step.
    """
    fn = transform_for(scheme, alpha)
    if as_oracle:
        if isinstance(y, FactoredMatrix):
            return factored_oracle(y).transformed(fn)
        if hasattr(y, "transformed"):
            return y.transformed(fn)
        return dense_oracle(np.asarray(y, dtype=np.float64)).transformed(fn)
    if isinstance(y, FactoredMatrix):
        return fn(y.materialize())
    if isinstance(y, TTTensor):
        return fn(tt_materialize(y))
    return fn(np.asarray(y, dtype=np.float64))


def _min_entry_exact(y):
    if isinstance(y, FactoredMatrix):
        # neg_max equals max(0, -min entry) only when the minimum is negative,
        # so scan the streamed blocks for the true minimum.
        lowest = np.inf
        for _, _, block in y.row_blocks():
            lowest = min(lowest, float(block.min()))
        return lowest
    if isinstance(y, TTTensor):
        return float(tt_materialize(y).min())
    return float(np.asarray(y).min())


def compute_alpha(y, beta, mode="exact", rng=None):
    """Shift magnitude beta * ||min(0, Y)||_max.

    Exact mode scans all entries (streamed for factored matrices);
    surrogate mode locates the most negative entry with a rank-1 cross
    chase and needs an rng.
    """
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    if mode == "exact":
        lowest = _min_entry_exact(y)
    elif mode == "surrogate":
        if rng is None:
            raise ValueError("surrogate alpha needs an RngStream")
        if isinstance(y, FactoredMatrix):
            oracle = factored_oracle(y)
        elif isinstance(y, TTTensor):
            oracle = tt_unfolding_oracle(y, split=max(1, y.order // 2))
        else:
            dense = np.asarray(y, dtype=np.float64)
            if dense.ndim != 2:
                # Dense tensors chase their balanced sequential unfolding.
                split = max(1, dense.ndim // 2)
                rows = int(np.prod(dense.shape[:split], dtype=np.int64))
                dense = dense.reshape(rows, -1)
            oracle = dense_oracle(dense)
        _, _, lowest = estimate_min_entry(oracle, rng)
    else:
        raise ValueError(f"unknown alpha mode {mode!r}")
    return beta * max(0.0, -lowest)


_PROJECTOR_FAILURES = (CrossError, SvdError, np.linalg.LinAlgError)


def _relative_error(num, denom):
    if denom > 0.0:
        return num / denom
    return 1.0 if num == 0.0 else np.inf


def run_scheme(x, cfg):
    """Alternating projections on a dense matrix.

    Returns the final FactoredMatrix and the IterationTrace with
    max_iters + 1 rows (row 0 is the initial low-rank projection of X, on
    which no constraint step has acted yet). No early stopping: fixed
    budgets keep runs comparable across schemes and projectors.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {x.shape}")
    if cfg.projector == "TTSVD":
        raise ValueError("TTSVD projector drives tensors; use run_scheme_tt")
    r = int(cfg.rank)
    rng = RngStream(cfg.seed)
    m, n = x.shape
    is_cross = cfg.projector in CROSS_PROJECTORS
    warm = cfg.projector.endswith("_warm")
    pvol = cfg.projector.startswith("PVOL")
    k_rows = cfg.k_rows if cfg.k_rows is not None else min(3 * r, m)
    k_cols = cfg.k_cols if cfg.k_cols is not None else min(3 * r, n)

    def project_dense(z):
        if cfg.projector == "SVD":
            return svd_truncate(z, r)
        return rsvd_truncate(z, r, cfg.rsvd, rng=rng)

    def project_oracle(oracle, state):
        if pvol:
            return cross_project_pvol(
                oracle, r, k_rows, k_cols, state=state, rng=rng, nu=cfg.nu
            )
        return cross_project_vol(oracle, r, state=state, rng=rng, nu=cfg.nu)

    state = None
    try:
        if is_cross:
            y, state = project_oracle(dense_oracle(x), None)
            swaps = state.swaps
        else:
            y = project_dense(x)
            swaps = 0
    except _PROJECTOR_FAILURES as exc:
        raise SchemeError(f"projector failed at iteration 0: {exc}", 0) from exc
    denom = frobenius_error(x, y)
    neg_fro, neg_max = negative_part_norms(y)
    rows = [TraceRow(0, neg_fro, neg_max, _relative_error(denom, denom), np.nan, swaps)]

    for k in range(1, cfg.max_iters + 1):
        if cfg.scheme in ("SP", "IP"):
            alpha = compute_alpha(y, cfg.beta, cfg.resolved_alpha_mode, rng)
        else:
            alpha = np.nan
        try:
            if is_cross:
                oracle = constraint_step(
                    y, cfg.scheme, 0.0 if np.isnan(alpha) else alpha, as_oracle=True
                )
                y, state = project_oracle(oracle, state if warm else None)
                swaps = state.swaps
            else:
                z = constraint_step(y, cfg.scheme, 0.0 if np.isnan(alpha) else alpha)
                y = project_dense(z)
                swaps = 0
        except _PROJECTOR_FAILURES as exc:
            raise SchemeError(f"projector failed at iteration {k}: {exc}", k) from exc
        neg_fro, neg_max = negative_part_norms(y)
        rel = _relative_error(frobenius_error(x, y), denom)
        rows.append(TraceRow(k, neg_fro, neg_max, rel, alpha, swaps))
    return y, IterationTrace(rows)


def run_scheme_tt(x, cfg):
    """Alternating projections on a dense tensor with the TT-SVD projector.

    The constraint step is dense (the TT-SVD consumes a dense tensor
    anyway). A tolerance-valued rank picks the internal ranks at the
    initial projection and keeps that manifold fixed afterwards.
    """
    x = np.asarray(x, dtype=np.float64)
    if cfg.projector != "TTSVD":
        raise ValueError("run_scheme_tt requires the TTSVD projector")
    rng = RngStream(cfg.seed)
    try:
        y = ttsvd(x, cfg.rank if np.isscalar(cfg.rank) else tuple(cfg.rank))
    except SvdError as exc:
        raise SchemeError(f"projector failed at iteration 0: {exc}", 0) from exc
    ranks = y.ranks
    y_dense = tt_materialize(y)
    denom = float(np.linalg.norm(x - y_dense))
    neg = np.minimum(y_dense, 0.0)
    rows = [
        TraceRow(
            0,
            float(np.linalg.norm(neg)),
            float(np.abs(neg).max()),
            _relative_error(denom, denom),
            np.nan,
            0,
        )
    ]
    for k in range(1, cfg.max_iters + 1):
        if cfg.scheme in ("SP", "IP"):
            alpha = compute_alpha(y_dense, cfg.beta, cfg.resolved_alpha_mode, rng)
        else:
            alpha = np.nan
        z = transform_for(cfg.scheme, 0.0 if np.isnan(alpha) else alpha)(y_dense)
        try:
            y = ttsvd(z, ranks)
        except SvdError as exc:
            raise SchemeError(f"projector failed at iteration {k}: {exc}", k) from exc
        y_dense = tt_materialize(y)
        neg = np.minimum(y_dense, 0.0)
        rel = _relative_error(float(np.linalg.norm(x - y_dense)), denom)
        rows.append(
            TraceRow(k, float(np.linalg.norm(neg)), float(np.abs(neg).max()), rel, alpha, 0)
        )
    return y, IterationTrace(rows)
