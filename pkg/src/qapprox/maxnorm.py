"""Low-rank approximation in the maximum norm via binary search on radii.

The best achievable max-norm error of a rank-r approximation is bracketed
by an interval (eps_minus, eps_plus]. Each outer step picks the midpoint
eps, runs alternating projections between the rank-r set and the entrywise
ball B_eps(X), shrinks eps_plus to the error the inner run achieved, and
nudges eps_minus up by a tenth of the gap. The final eps_plus certifies an
upper bound on the infimum, witnessed by the returned iterate.
"""

import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, haar_columns
from .projectors import FactoredMatrix, RsvdConfig, rsvd_truncate, svd_truncate
from .tt import tt_materialize, ttsvd

__all__ = [
    "RadiusInterval",
    "ball_project",
    "initial_iterate",
    "inner_ap",
    "maxnorm_approximate",
    "maxnorm_approximate_tt",
    "udell_rank",
]

DEFAULT_DELTA = 1e-3
DEFAULT_INNER_ITERS = 500
Y0_POLICIES = ("haar", "gaussian", "svd")


@dataclass
class RadiusInterval:
    """Bracket (eps_minus, eps_plus] with the iterate that certifies eps_plus.

    best_y achieves a max-norm error of at most eps_plus; eps_minus is a
    search device, not a certified lower bound.
    """

    eps_minus: float
    eps_plus: float
    best_y: object

    def __post_init__(self):
        self.eps_minus = float(self.eps_minus)
        self.eps_plus = float(self.eps_plus)
        if not (math.isfinite(self.eps_minus) and math.isfinite(self.eps_plus)):
            raise ValueError("interval endpoints must be finite")
        if self.eps_minus < 0:
            raise ValueError(f"eps_minus must be >= 0, got {self.eps_minus}")
        if not self.eps_minus < self.eps_plus:
            raise ValueError(
                f"need eps_minus < eps_plus, got [{self.eps_minus}, {self.eps_plus}]"
            )

    @property
    def gap(self):
        return self.eps_plus - self.eps_minus

    @property
    def midpoint(self):
        return 0.5 * (self.eps_minus + self.eps_plus)

    def updated(self, err, y):
        """Interval after an inner run that achieved max-norm error err.

        eps_plus drops to err when that improves it (stashing y as the new
        witness); eps_minus then moves up by a tenth of the remaining gap.
        Returns None when the bracket collapses, which signals the caller
        to stop searching.
        """
        if err < self.eps_plus:
            plus, best = float(err), y
        else:
            plus, best = self.eps_plus, self.best_y
        minus = self.eps_minus + (plus - self.eps_minus) / 10.0
        if not minus < plus:
            return None
        return RadiusInterval(minus, plus, best)


def ball_project(y, x, eps):
    """Metric projection of Y onto the max-norm ball of radius eps around X.

    Entries of Y within the ball are returned verbatim; the rest are
    clipped to X +- eps. Rounding in that addition can land one ulp
    outside the ball, so offending entries are pulled back until a direct
    scan of the result confirms membership.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {x.shape}")
    eps = float(eps)
    if not (math.isfinite(eps) and eps >= 0):
        raise ValueError(f"eps must be finite and >= 0, got {eps}")
    d = y - x
    res = np.where(d > eps, x + eps, np.where(d < -eps, x - eps, y))
    over = np.abs(res - x) > eps
    while np.any(over):
        res = np.where(over, np.nextafter(res, x), res)
        over = np.abs(res - x) > eps
    return res


def _max_error(x, y):
    """Max-norm distance between a dense matrix/tensor and an iterate."""
    return float(np.abs(x - _dense(y)).max())


def _dense(y):
    if isinstance(y, FactoredMatrix):
        return y.materialize()
    return tt_materialize(y)


def initial_iterate(x, r, policy, rng=None):
    """Starting rank-r iterate for the search.

    policy is one of "haar" (product of factors with Haar-orthonormal
    columns), "gaussian" (factors with i.i.d. entries of variance 1/r),
    "svd" (truncated SVD of X), or an explicit FactoredMatrix to use as
    is. The best rank-r approximation is a poor start for targets like
    the identity, where it makes the inner iterations cycle, hence the
    random policies.
    """
    if isinstance(policy, FactoredMatrix):
        return policy
    x = as_matrix(x)
    m, n = x.shape
    if policy == "svd":
        return svd_truncate(x, r)
    if policy not in Y0_POLICIES:
        raise ValueError(f"unknown Y0 policy {policy!r}")
    if rng is None:
        raise ValueError(f"policy {policy!r} needs an RngStream")
    if policy == "haar":
        return FactoredMatrix(haar_columns(m, r, rng), haar_columns(n, r, rng))
    scale = 1.0 / math.sqrt(r)
    gen = rng.generator
    return FactoredMatrix(
        scale * gen.standard_normal((m, r)), scale * gen.standard_normal((n, r))
    )


def _lowrank_projector(r, projector, rng):
    """Dense-to-FactoredMatrix rank-r projection step for the inner loop."""
    if projector == "SVD":
        return lambda z: svd_truncate(z, r)
    if projector == "RSVD":
        if rng is None:
            raise ValueError("RSVD projector needs an RngStream")
        cfg = RsvdConfig()
        return lambda z: rsvd_truncate(z, r, cfg, rng)
    raise ValueError(f"unknown projector {projector!r}")


def _inner_ap(x, eps, y0, project, delta, max_iters, trace=None):
    """Alternate ball_project and the low-rank projector until errors stall.

    Improvement by less than a factor (1 + delta) between consecutive
    iterates stops the loop; so does an exact zero error. Returns the last
    iterate, its max-norm error, and the number of iterations taken.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if not max_iters >= 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    y = y0
    err = _max_error(x, y)
    if trace is not None:
        trace.append(err)
    iters = 0
    for _ in range(max_iters):
        z = ball_project(_dense(y), x, eps)
        y = project(z)
        err_new = _max_error(x, y)
        iters += 1
        if trace is not None:
            trace.append(err_new)
        stalled = err < (1.0 + delta) * err_new
        err = err_new
        if stalled or err == 0.0:
            break
    return y, err, iters


def inner_ap(
    x,
    r,
    eps,
    y0,
    delta=DEFAULT_DELTA,
    max_iters=DEFAULT_INNER_ITERS,
    projector="SVD",
    rng=None,
    trace=None,
):
    """One alternating-projection run at a fixed ball radius.

    Parameters
    ----------
    x : array_like
        Dense target matrix.
    r : int
        Rank of the approximation set.
    eps : real
        Radius of the max-norm ball around x.
    y0 : FactoredMatrix
        Starting iterate.
    delta : real
        Relative stall threshold: stop once the error improves by less
        than a factor (1 + delta).
    max_iters : int
        Iteration cap for one run.
    projector : str
        "SVD" or "RSVD".
    rng : RngStream
        Required for "RSVD".
    trace : list, optional
        Receives the max-norm error of every iterate, starting with y0.

    Returns
    -------
    (FactoredMatrix, float)
        Last iterate and its max-norm error.
    """
    x = as_matrix(x)
    project = _lowrank_projector(r, projector, rng)
    y, err, _ = _inner_ap(x, eps, y0, project, delta, max_iters, trace)
    return y, err


def _search(x, y0, project, delta, interval_stop, max_iters, stats):
    """Binary search over ball radii shared by the matrix and TT variants."""
    err0 = _max_error(x, y0)
    outer = 0
    inner_total = 0
    best_y, best_err = y0, err0
    if err0 > 0:
        if interval_stop is None:
            interval_stop = 1e-3 * err0
        if not interval_stop > 0:
            raise ValueError(f"interval_stop must be positive, got {interval_stop}")
        interval = RadiusInterval(0.0, err0, y0)
        while interval.gap >= interval_stop:
            y, err, iters = _inner_ap(
                x, interval.midpoint, interval.best_y, project, delta, max_iters
            )
            outer += 1
            inner_total += iters
            nxt = interval.updated(err, y)
            if nxt is None:
                if err < interval.eps_plus:
                    best_y, best_err = y, float(err)
                else:
                    best_y, best_err = interval.best_y, interval.eps_plus
                break
            interval = nxt
            best_y, best_err = interval.best_y, interval.eps_plus
    if stats is not None:
        stats["outer_steps"] = outer
        stats["inner_iters_total"] = inner_total
    return best_y, best_err


def maxnorm_approximate(
    x,
    r,
    delta=DEFAULT_DELTA,
    interval_stop=None,
    y0_policy="svd",
    rng=None,
    projector="SVD",
    max_iters=DEFAULT_INNER_ITERS,
    stats=None,
):
    """Certified upper bound on the best rank-r max-norm approximation.

    Runs the radius binary search from an initial iterate chosen by
    y0_policy. The initial eps_plus is the max-norm error of that iterate
    and eps_minus starts at zero; interval_stop defaults to 1e-3 times the
    initial eps_plus. Every inner run starts from the current witness, so
    progress made at one radius carries over to the next.

    Returns
    -------
    (FactoredMatrix, float)
        Witness Y and eps_certified with ||x - Y||_max <= eps_certified,
        an upper bound on the infimum over the rank-r set.
    """
    x = as_matrix(x)
    y0 = initial_iterate(x, r, y0_policy, rng)
    project = _lowrank_projector(r, projector, rng)
    return _search(x, y0, project, delta, interval_stop, max_iters, stats)


def maxnorm_approximate_tt(
    x,
    ranks,
    delta=DEFAULT_DELTA,
    interval_stop=None,
    rng=None,
    max_iters=DEFAULT_INNER_ITERS,
    stats=None,
):
    """Tensor-train analogue of maxnorm_approximate.

    The inner projector is the TT-SVD at the ranks the initial
    decomposition settles on (a tolerance-valued ranks argument picks them
    once, then the manifold stays fixed). The iterate is kept in TT form
    and densified only for the entrywise ball projection.

    Returns
    -------
    (TTTensor, float)
        Witness in TT form and the certified max-norm bound.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("tensor entries must be finite")
    y0 = ttsvd(x, ranks)
    fixed = y0.ranks

    def project(z):
        return ttsvd(z, fixed)

    return _search(x, y0, project, delta, interval_stop, max_iters, stats)


def udell_rank(n, eps):
    """Rank at which any n x n sign-bounded matrix admits eps max-norm error.

    Evaluates ceil(72 ln(1 + 2n) / eps^2), the explicit bound for matrices
    with entries in [-1, 1]; useful as a yardstick for how far below this
    worst-case rank the search gets on structured targets.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    eps = float(eps)
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    return math.ceil(72.0 * math.log1p(2 * n) / (eps * eps))
