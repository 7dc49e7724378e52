"""Riemannian matrix completion with optional nonnegativity regularization.

Gradient descent on the fixed-rank manifold: the sampled residual is
projected onto the tangent space at the current point, an exact line
search picks the step, and a structured rank-2r factorization retracts
back to the manifold. No dense m x n matrix is ever formed; each
iteration costs O(max(m,n) r^2 + |omega| r). Optionally, one warm-started
volume-cross projection of the clamped iterate runs after every gradient
step, pulling the iterates toward the nonnegative orthant at no change in
asymptotic cost.
"""

import math
from dataclasses import dataclass

import numpy as np

from .cross import (
    CountingOracle,
    EvalCounter,
    clamp_nonneg,
    cross_project_vol,
    factored_oracle,
)
from .linalg import haar_columns, svd
from .projectors import FactoredMatrix

__all__ = [
    "CompletionProblem",
    "ManifoldPoint",
    "StagnationError",
    "TangentVector",
    "complete",
    "line_search_step",
    "point_from_factored",
    "retract",
    "sample_problem",
    "sparse_residual",
    "tangent_project",
]

DEFAULT_MAX_ITERS = 1000
DEFAULT_SUCCESS_TOL = 1e-6
_CHECK_EVERY = 25


class StagnationError(Exception):
    """Raised when the search direction vanishes on the sampling set.

    The sampled objective is then stationary along the tangent direction
    and the exact line search has no finite minimizer.
    """


@dataclass
class CompletionProblem:
    """Observed entries of a rank-r matrix plus a starting iterate.

    omega may contain duplicate pairs (sampling with replacement);
    duplicates collapse to a single constraint so that the sampled
    objective matches the entrywise projection P_omega exactly.
    """

    m: int
    n: int
    r: int
    omega: np.ndarray
    observed: np.ndarray
    x0: FactoredMatrix

    def __post_init__(self):
        self.m, self.n, self.r = int(self.m), int(self.n), int(self.r)
        if not (self.m >= 1 and self.n >= 1 and 1 <= self.r <= min(self.m, self.n)):
            raise ValueError(f"bad sizes m={self.m}, n={self.n}, r={self.r}")
        self.omega = np.ascontiguousarray(self.omega, dtype=np.intp)
        self.observed = np.ascontiguousarray(self.observed, dtype=np.float64)
        if self.omega.ndim != 2 or self.omega.shape[1] != 2:
            raise ValueError(f"omega must be (k, 2) pairs, got {self.omega.shape}")
        if self.omega.shape[0] != self.observed.shape[0]:
            raise ValueError("omega and observed lengths differ")
        if self.omega.shape[0] == 0:
            raise ValueError("omega must be nonempty")
        oi, oj = self.omega[:, 0], self.omega[:, 1]
        if oi.min() < 0 or oi.max() >= self.m or oj.min() < 0 or oj.max() >= self.n:
            raise ValueError("omega indices out of range")
        if self.x0.shape != (self.m, self.n):
            raise ValueError(f"x0 shape {self.x0.shape} != ({self.m}, {self.n})")
        flat = oi * self.n + oj
        _, first = np.unique(flat, return_index=True)
        first.sort()
        self.rows = oi[first].copy()
        self.cols = oj[first].copy()
        self.values = self.observed[first].copy()

    @property
    def sample_count(self):
        """Number of drawn pairs, duplicates included."""
        return self.omega.shape[0]

    @property
    def unique_count(self):
        """Number of distinct observed positions."""
        return self.rows.shape[0]


@dataclass
class ManifoldPoint:
    """Rank-r iterate U diag(s) V' with orthonormal U and V."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.s = np.ascontiguousarray(self.s, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        r = self.s.shape[0]
        if self.s.ndim != 1 or self.u.ndim != 2 or self.v.ndim != 2:
            raise ValueError("point factors have wrong dimensions")
        if self.u.shape[1] != r or self.v.shape[1] != r:
            raise ValueError("factor widths disagree with s")
        if np.any(self.s < 0):
            raise ValueError("singular values must be nonnegative")
        for name, q in (("u", self.u), ("v", self.v)):
            gram = q.T @ q
            if np.abs(gram - np.eye(r)).max() > 1e-8:
                raise ValueError(f"{name} columns are not orthonormal")

    @property
    def shape(self):
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank_deficient(self):
        tiny = 1e-14 * (self.s.max() if self.s.size else 0.0)
        return bool(self.s.size == 0 or self.s.min() <= tiny)

    def factored(self):
        """FactoredMatrix view with singular values folded into the left factor."""
        return FactoredMatrix(self.u * self.s, self.v.copy())


@dataclass
class TangentVector:
    """Tangent direction U core V' + u_perp V' + U v_perp' at its point."""

    point: ManifoldPoint
    core: np.ndarray
    u_perp: np.ndarray
    v_perp: np.ndarray

    def __post_init__(self):
        r = self.point.s.shape[0]
        if self.core.shape != (r, r):
            raise ValueError(f"core must be ({r}, {r}), got {self.core.shape}")
        if self.u_perp.shape != self.point.u.shape:
            raise ValueError("u_perp shape disagrees with the point")
        if self.v_perp.shape != self.point.v.shape:
            raise ValueError("v_perp shape disagrees with the point")
        for q, p in ((self.point.u, self.u_perp), (self.point.v, self.v_perp)):
            leak = np.abs(q.T @ p).max() if p.size else 0.0
            if leak > 1e-10 * max(1.0, np.abs(p).max()):
                raise ValueError("perpendicular factor is not orthogonal to the point")

    @property
    def norm_sq(self):
        """Squared Frobenius norm; the three blocks are mutually orthogonal."""
        return (
            float(np.sum(self.core**2))
            + float(np.sum(self.u_perp**2))
            + float(np.sum(self.v_perp**2))
        )

    def entries_at(self, rows, cols):
        """Values of the tangent matrix at the given positions, O(r) each."""
        a = self.point.u @ self.core + self.u_perp
        left = np.einsum("kr,kr->k", a[rows], self.point.v[cols])
        right = np.einsum("kr,kr->k", self.point.u[rows], self.v_perp[cols])
        return left + right


def sparse_residual(y, problem):
    """P_omega(Y) - P_omega(X*) as values on the distinct observed positions.

    y is a FactoredMatrix or ManifoldPoint; each value costs O(r).
    """
    if isinstance(y, ManifoldPoint):
        y = y.factored()
    fitted = np.einsum(
        "kr,kr->k", y.left[problem.rows], y.right[problem.cols]
    )
    return fitted - problem.values


def tangent_project(g, point, problem):
    """Project the sparse gradient onto the tangent space at the point.

    g holds the residual values on (problem.rows, problem.cols). Returns
    the TangentVector with core U'GV, u_perp (I-UU')GV, v_perp (I-VV')G'U,
    computed in O(|omega| r + (m+n) r^2) without forming G densely.
    """
    u, v = point.u, point.v
    m, r = u.shape
    n = v.shape[0]
    g = np.asarray(g, dtype=np.float64)
    gv = np.zeros((m, r))
    np.add.at(gv, problem.rows, g[:, None] * v[problem.cols])
    gtu = np.zeros((n, r))
    np.add.at(gtu, problem.cols, g[:, None] * u[problem.rows])
    core = u.T @ gv
    u_perp = gv - u @ core
    v_perp = gtu - v @ core.T
    return TangentVector(point, core, u_perp, v_perp)


def line_search_step(psi, problem):
    """Exact step size along the tangent direction: |Psi|^2 / |P_omega(Psi)|^2.

    Since P_omega never increases the Frobenius norm, the step is >= 1.
    Raises StagnationError when the direction vanishes on the sampling set
    while being nonzero overall.
    """
    num = psi.norm_sq
    if num == 0.0:
        raise StagnationError("zero tangent direction")
    vals = psi.entries_at(problem.rows, problem.cols)
    denom = float(vals @ vals)
    if denom == 0.0:
        raise StagnationError("search direction vanishes on the sampling set")
    return num / denom


def _perp_frame(base, block):
    """Factor block as frame @ coeff with [base, frame] orthonormal.

    The frame keeps as many columns as the block; directions lost to rank
    deficiency are filled with canonical vectors orthogonalized against
    everything built so far, and their coeff rows are zero. This keeps the
    stacked factor orthonormal even for a zero block, where a plain QR
    would return columns inside span(base).
    """
    m, r = block.shape
    y = block - base @ (base.T @ block)
    w, sv, zt = np.linalg.svd(y, full_matrices=False)
    tol = (float(sv[0]) if sv.size else 0.0) * 1e-12
    eff = int(np.count_nonzero(sv > tol))
    coeff = np.zeros((r, r))
    coeff[:eff] = sv[:eff, None] * zt[:eff]
    frame = w[:, :eff] - base @ (base.T @ w[:, :eff])
    if eff:
        frame = frame / np.linalg.norm(frame, axis=0, keepdims=True)
    cols = [frame]
    have = eff
    k = 0
    while have < r and k < m:
        e = np.zeros((m, 1))
        e[k, 0] = 1.0
        w_ = e - base @ (base.T @ e)
        for c in cols:
            if c.shape[1]:
                w_ = w_ - c @ (c.T @ w_)
        nrm = float(np.linalg.norm(w_))
        if nrm > 0.5:
            cols.append(w_ / nrm)
            have += 1
        k += 1
    if have < r:
        raise ValueError("cannot complete an orthonormal frame")
    return np.hstack(cols), coeff


def retract(point, tau, psi):
    """Metric projection of point - tau * psi back onto the rank-r set.

    Works on the structured rank-2r factorization
        [U, Q_u] [[diag(s) - tau*core, -tau*R_v'], [-tau*R_u, 0]] [V, Q_v]'
    with Q R an orthogonal factorization of the perpendicular blocks, so
    only a 2r x 2r SVD is needed. A collapsed spectrum is kept with a zero
    tail; the rank_deficient flag of the result reports it.
    """
    u, s, v = point.u, point.s, point.v
    r = s.shape[0]
    qu, ru = _perp_frame(u, psi.u_perp)
    qv, rv = _perp_frame(v, psi.v_perp)
    k = np.zeros((2 * r, 2 * r))
    k[:r, :r] = np.diag(s) - tau * psi.core
    k[:r, r:] = -tau * rv.T
    k[r:, :r] = -tau * ru
    res = svd(k)
    u_new = np.hstack([u, qu]) @ res.u[:, :r]
    v_new = np.hstack([v, qv]) @ res.vt[:r].T
    return ManifoldPoint(u_new, res.singular_values[:r], v_new)


def point_from_factored(y):
    """ManifoldPoint with orthonormal factors representing the same matrix."""
    qu, ru = np.linalg.qr(y.left)
    qv, rv = np.linalg.qr(y.right)
    res = svd(ru @ rv.T)
    return ManifoldPoint(qu @ res.u, res.singular_values, qv @ res.vt.T)


def sample_problem(m, n, r, gamma, rng, truth=None):
    """Random completion instance at oversampling gamma.

    The ground truth defaults to a product of factors with i.i.d. entries
    uniform on (0, 1/sqrt(n)), hence entrywise positive. gamma scales the
    manifold dimension r(m+n-r) to the number of drawn pairs (with
    replacement). The start is a product of Haar-orthonormal factors.
    Returns (problem, truth).
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    gen = rng.generator
    if truth is None:
        scale = 1.0 / math.sqrt(n)
        truth = FactoredMatrix(
            gen.uniform(0.0, scale, size=(m, r)), gen.uniform(0.0, scale, size=(n, r))
        )
    count = max(1, round(gamma * r * (m + n - r)))
    oi = gen.integers(0, m, size=count)
    oj = gen.integers(0, n, size=count)
    observed = np.einsum("kr,kr->k", truth.left[oi], truth.right[oj])
    x0 = FactoredMatrix(haar_columns(m, r, rng), haar_columns(n, r, rng))
    problem = CompletionProblem(
        m, n, r, np.stack([oi, oj], axis=1), observed, x0
    )
    return problem, truth


def factored_norm(a):
    """Frobenius norm of a FactoredMatrix in O((m+n)r^2), never densified."""
    gram = (a.left.T @ a.left) * (a.right.T @ a.right)
    return math.sqrt(max(0.0, float(gram.sum())))


def factored_distance(a, b):
    """Frobenius distance between two FactoredMatrix values without densifying.

    Stacks the factors into a rank-(r_a + r_b) difference and evaluates
    |S T'|_F^2 = trace((S'S)(T'T)) in O((m+n)(r_a+r_b)^2).
    """
    s = np.hstack([a.left, -b.left])
    t = np.hstack([a.right, b.right])
    gram = (s.T @ s) * (t.T @ t)
    return math.sqrt(max(0.0, float(gram.sum())))


def _regularize(point, state, rng, counter):
    """One warm volume-cross projection of the clamped iterate."""
    oracle = CountingOracle(factored_oracle(point.factored()), counter=counter)
    y, state = cross_project_vol(
        oracle.transformed(clamp_nonneg), point.s.shape[0], state=state, rng=rng
    )
    return point_from_factored(y), state


def complete(
    problem,
    max_iters=DEFAULT_MAX_ITERS,
    regularize=None,
    success_tol=DEFAULT_SUCCESS_TOL,
    rng=None,
    truth=None,
    persist_reg_state=True,
):
    """Riemannian gradient descent on the sampled completion objective.

    regularize is None or "ap_vol_warm"; the latter runs one volume-cross
    projection of the clamped iterate after every gradient step, threading
    the warm index sets across iterations (persist_reg_state=False rebuilds
    them from scratch each time). When truth is given, convergence means
    relative Frobenius distance to it below success_tol (checked without
    densifying); otherwise the relative sampled residual is used. The run
    stops early once the error is well below the tolerance, and ends with
    converged=False if the line search stagnates.

    Returns (FactoredMatrix, converged, history); history holds per-iteration
    sampled errors and work counters.
    """
    if regularize not in (None, "none", "ap_vol_warm"):
        raise ValueError(f"unknown regularization {regularize!r}")
    regularized = regularize == "ap_vol_warm"
    if regularized and rng is None:
        raise ValueError("regularized runs need an RngStream")
    if not max_iters >= 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    m, n, r = problem.m, problem.n, problem.r
    k_unique = problem.unique_count
    norm_obs = float(np.linalg.norm(problem.values))
    point = point_from_factored(problem.x0)
    state = None
    counter = EvalCounter()
    history = {
        "sampled_rel": [],
        "work_units": [],
        "oracle_evals": [],
        "checks": [],
        "stagnated": False,
    }
    # Entries touched per iteration by the sparse kernels and the thin
    # factor algebra; an O(mn) pass would dwarf this budget.
    base_work = 6 * k_unique * r + 14 * (m + n) * r * r + 8 * (2 * r) ** 3
    truth_norm = factored_norm(truth) if truth is not None else None
    iters_done = 0
    for it in range(1, max_iters + 1):
        evals_before = counter.entries
        res = sparse_residual(point, problem)
        sampled = float(np.linalg.norm(res))
        history["sampled_rel"].append(
            sampled / norm_obs if norm_obs > 0 else float(sampled > 0)
        )
        try:
            psi = tangent_project(res, point, problem)
            tau = line_search_step(psi, problem)
        except StagnationError:
            history["stagnated"] = True
            break
        point = retract(point, tau, psi)
        if regularized:
            point, new_state = _regularize(point, state, rng, counter)
            state = new_state if persist_reg_state else None
        evals = counter.entries - evals_before
        history["oracle_evals"].append(evals)
        history["work_units"].append(base_work + evals * (r + 1))
        iters_done = it
        if truth is not None and it % _CHECK_EVERY == 0:
            rel = factored_distance(point.factored(), truth) / max(
                1e-300, truth_norm
            )
            history["checks"].append((it, rel))
            if rel < 0.1 * success_tol:
                break
    final = point.factored()
    if truth is not None:
        rel = factored_distance(final, truth) / max(1e-300, truth_norm)
    else:
        res = sparse_residual(point, problem)
        rel = float(np.linalg.norm(res)) / max(1e-300, norm_obs)
    history["final_rel_err"] = rel
    history["iters"] = iters_done
    if regularized:
        history["cross_state"] = state
    converged = rel < success_tol
    return final, converged, history
