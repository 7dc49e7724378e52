"""Completion: sparse residuals, tangent algebra, retraction, full runs."""

import math

import numpy as np
import pytest

from qapprox.completion import (
    CompletionProblem,
    ManifoldPoint,
    StagnationError,
    TangentVector,
    complete,
    factored_distance,
    factored_norm,
    line_search_step,
    point_from_factored,
    retract,
    sample_problem,
    sparse_residual,
    tangent_project,
)
from qapprox.linalg import RngStream, haar_columns
from qapprox.projectors import FactoredMatrix, svd_truncate


def random_point(m, n, r, seed):
    rng = RngStream(seed)
    u = haar_columns(m, r, rng)
    v = haar_columns(n, r, rng)
    s = np.sort(rng.generator.uniform(0.5, 2.0, size=r))[::-1]
    return ManifoldPoint(u, s, v)


def all_pairs(m, n):
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


def make_problem(m, n, r, omega, truth, x0_seed=0):
    observed = truth.materialize()[omega[:, 0], omega[:, 1]]
    rng = RngStream(x0_seed)
    x0 = FactoredMatrix(haar_columns(m, r, rng), haar_columns(n, r, rng))
    return CompletionProblem(m, n, r, omega, observed, x0)


def dense_tangent(psi):
    u, v = psi.point.u, psi.point.v
    return u @ psi.core @ v.T + psi.u_perp @ v.T + u @ psi.v_perp.T


class TestCompletionProblem:
    def test_duplicates_collapse_to_unique_positions(self):
        truth = FactoredMatrix(np.ones((4, 1)), np.ones((5, 1)))
        omega = np.array([[0, 0], [1, 2], [0, 0], [1, 2], [3, 4]])
        p = make_problem(4, 5, 1, omega, truth)
        assert p.sample_count == 5
        assert p.unique_count == 3
        pairs = set(zip(p.rows.tolist(), p.cols.tolist()))
        assert pairs == {(0, 0), (1, 2), (3, 4)}

    def test_validation(self):
        truth = FactoredMatrix(np.ones((4, 1)), np.ones((5, 1)))
        x0 = FactoredMatrix(np.ones((4, 1)), np.ones((5, 1)))
        with pytest.raises(ValueError):
            CompletionProblem(4, 5, 1, np.array([[0, 9]]), np.array([1.0]), x0)
        with pytest.raises(ValueError):
            CompletionProblem(4, 5, 1, np.array([[0, 0]]), np.array([1.0, 2.0]), x0)
        with pytest.raises(ValueError):
            CompletionProblem(4, 5, 1, np.zeros((0, 2), dtype=int), np.zeros(0), x0)
        with pytest.raises(ValueError):
            CompletionProblem(4, 5, 6, np.array([[0, 0]]), np.array([1.0]), x0)


class TestSparseResidual:
    def test_exact_fit_gives_zeros(self):
        gen = RngStream(1).generator
        truth = FactoredMatrix(gen.normal(size=(6, 2)), gen.normal(size=(7, 2)))
        omega = np.array([[0, 0], [2, 3], [5, 6]])
        p = make_problem(6, 7, 2, omega, truth)
        res = sparse_residual(truth, p)
        np.testing.assert_allclose(res, 0.0, atol=1e-12)

    def test_single_entry_is_a_scalar_difference(self):
        truth = FactoredMatrix(np.full((3, 1), 2.0), np.full((3, 1), 1.0))
        p = make_problem(3, 3, 1, np.array([[1, 1]]), truth)
        y = FactoredMatrix(np.full((3, 1), 3.0), np.full((3, 1), 1.0))
        res = sparse_residual(y, p)
        assert res.shape == (1,)
        assert res[0] == pytest.approx(1.0)

    def test_matches_dense_oracle(self):
        gen = RngStream(2).generator
        truth = FactoredMatrix(gen.normal(size=(8, 3)), gen.normal(size=(9, 3)))
        omega = np.stack(
            [gen.integers(0, 8, size=30), gen.integers(0, 9, size=30)], axis=1
        )
        p = make_problem(8, 9, 3, omega, truth)
        y = FactoredMatrix(gen.normal(size=(8, 3)), gen.normal(size=(9, 3)))
        dense = y.materialize() - truth.materialize()
        np.testing.assert_allclose(
            sparse_residual(y, p), dense[p.rows, p.cols], atol=1e-12
        )


class TestTangentProject:
    def test_zero_gradient_gives_zero_vector(self):
        point = random_point(6, 5, 2, seed=3)
        truth = point.factored()
        p = make_problem(6, 5, 2, np.array([[0, 0], [3, 4]]), truth)
        psi = tangent_project(np.zeros(p.unique_count), point, p)
        assert psi.norm_sq == 0.0

    def test_projection_is_idempotent(self):
        m, n, r = 7, 6, 2
        point = random_point(m, n, r, seed=4)
        gen = RngStream(5).generator
        pu = gen.normal(size=(m, r))
        pu -= point.u @ (point.u.T @ pu)
        pv = gen.normal(size=(n, r))
        pv -= point.v @ (point.v.T @ pv)
        first = TangentVector(point, gen.normal(size=(r, r)), pu, pv)
        p = make_problem(m, n, r, all_pairs(m, n), point.factored())
        g = dense_tangent(first)[p.rows, p.cols]
        again = tangent_project(g, point, p)
        np.testing.assert_allclose(
            dense_tangent(again), dense_tangent(first), atol=1e-10
        )

    def test_matches_dense_projector(self):
        m, n, r = 8, 7, 3
        point = random_point(m, n, r, seed=6)
        gen = RngStream(7).generator
        omega = np.stack(
            [gen.integers(0, m, size=25), gen.integers(0, n, size=25)], axis=1
        )
        p = make_problem(m, n, r, omega, point.factored())
        g_vals = gen.normal(size=p.unique_count)
        g = np.zeros((m, n))
        g[p.rows, p.cols] = g_vals
        u, v = point.u, point.v
        uu, vv = u @ u.T, v @ v.T
        dense = uu @ g + g @ vv - uu @ g @ vv
        psi = tangent_project(g_vals, point, p)
        np.testing.assert_allclose(dense_tangent(psi), dense, atol=1e-10)

    def test_perpendicular_blocks_are_orthogonal_to_the_point(self):
        point = random_point(9, 8, 2, seed=8)
        gen = RngStream(9).generator
        omega = np.stack(
            [gen.integers(0, 9, size=20), gen.integers(0, 8, size=20)], axis=1
        )
        p = make_problem(9, 8, 2, omega, point.factored())
        psi = tangent_project(gen.normal(size=p.unique_count), point, p)
        assert np.abs(point.u.T @ psi.u_perp).max() < 1e-10
        assert np.abs(point.v.T @ psi.v_perp).max() < 1e-10


class TestLineSearchStep:
    def test_full_observation_gives_unit_step(self):
        m, n, r = 6, 5, 2
        point = random_point(m, n, r, seed=10)
        p = make_problem(m, n, r, all_pairs(m, n), point.factored())
        gen = RngStream(11).generator
        psi = tangent_project(gen.normal(size=p.unique_count), point, p)
        assert line_search_step(psi, p) == pytest.approx(1.0, rel=1e-12)

    def test_direction_supported_on_omega_gives_unit_step(self):
        # With u = v = e1, every tangent matrix lives on the first row and
        # column; observing exactly those entries makes P_omega invisible.
        m = n = 5
        e1 = np.zeros((m, 1))
        e1[0, 0] = 1.0
        point = ManifoldPoint(e1, np.array([1.0]), e1.copy())
        omega = np.array([[0, j] for j in range(n)] + [[i, 0] for i in range(1, m)])
        p = make_problem(m, n, 1, omega, point.factored())
        gen = RngStream(12).generator
        psi = tangent_project(gen.normal(size=p.unique_count), point, p)
        assert psi.norm_sq > 0
        assert line_search_step(psi, p) == pytest.approx(1.0, rel=1e-10)

    def test_step_is_at_least_one(self):
        for seed in range(5):
            m, n, r = 10, 9, 2
            point = random_point(m, n, r, seed=20 + seed)
            gen = RngStream(30 + seed).generator
            omega = np.stack(
                [gen.integers(0, m, size=40), gen.integers(0, n, size=40)], axis=1
            )
            p = make_problem(m, n, r, omega, point.factored())
            psi = tangent_project(gen.normal(size=p.unique_count), point, p)
            assert line_search_step(psi, p) >= 1.0 - 1e-12

    def test_stagnation_when_direction_vanishes_on_omega(self):
        m = n = 4
        e1 = np.zeros((m, 1))
        e1[0, 0] = 1.0
        point = ManifoldPoint(e1, np.array([1.0]), e1.copy())
        p = make_problem(m, n, 1, np.array([[1, 1]]), point.factored())
        e2 = np.zeros((n, 1))
        e2[2, 0] = 1.0
        psi = TangentVector(point, np.zeros((1, 1)), np.zeros((m, 1)), e2)
        with pytest.raises(StagnationError):
            line_search_step(psi, p)

    def test_zero_direction_raises(self):
        point = random_point(5, 5, 2, seed=13)
        p = make_problem(5, 5, 2, np.array([[0, 0]]), point.factored())
        psi = tangent_project(np.zeros(1), point, p)
        with pytest.raises(StagnationError):
            line_search_step(psi, p)


class TestRetract:
    def test_zero_step_keeps_the_point(self):
        m, n, r = 8, 7, 3
        point = random_point(m, n, r, seed=14)
        gen = RngStream(15).generator
        omega = np.stack(
            [gen.integers(0, m, size=30), gen.integers(0, n, size=30)], axis=1
        )
        p = make_problem(m, n, r, omega, point.factored())
        psi = tangent_project(gen.normal(size=p.unique_count), point, p)
        moved = retract(point, 0.0, psi)
        np.testing.assert_allclose(
            moved.factored().materialize(),
            point.factored().materialize(),
            atol=1e-12,
        )

    def test_matches_dense_truncated_svd(self):
        m, n, r = 7, 6, 2
        point = random_point(m, n, r, seed=16)
        gen = RngStream(17).generator
        omega = np.stack(
            [gen.integers(0, m, size=25), gen.integers(0, n, size=25)], axis=1
        )
        p = make_problem(m, n, r, omega, point.factored())
        psi = tangent_project(gen.normal(size=p.unique_count), point, p)
        tau = 0.7
        dense = point.factored().materialize() - tau * dense_tangent(psi)
        ref = svd_truncate(dense, r).materialize()
        moved = retract(point, tau, psi)
        np.testing.assert_allclose(moved.factored().materialize(), ref, atol=1e-10)

    def test_output_factors_orthonormal(self):
        point = random_point(10, 9, 3, seed=18)
        gen = RngStream(19).generator
        omega = np.stack(
            [gen.integers(0, 10, size=35), gen.integers(0, 9, size=35)], axis=1
        )
        p = make_problem(10, 9, 3, omega, point.factored())
        psi = tangent_project(gen.normal(size=p.unique_count), point, p)
        moved = retract(point, 1.3, psi)
        r = point.s.shape[0]
        assert np.abs(moved.u.T @ moved.u - np.eye(r)).max() < 1e-10
        assert np.abs(moved.v.T @ moved.v - np.eye(r)).max() < 1e-10

    def test_rank_collapse_keeps_zero_tail(self):
        u = np.eye(4)[:, :2]
        v = np.eye(5)[:, :2]
        point = ManifoldPoint(u, np.array([1.0, 0.0]), v)
        psi = TangentVector(
            point, np.zeros((2, 2)), np.zeros((4, 2)), np.zeros((5, 2))
        )
        moved = retract(point, 1.0, psi)
        assert moved.s.shape == (2,)
        assert moved.s[1] == 0.0
        assert moved.rank_deficient


class TestFactoredMetrics:
    def test_norm_matches_dense(self):
        gen = RngStream(21).generator
        a = FactoredMatrix(gen.normal(size=(9, 3)), gen.normal(size=(7, 3)))
        assert factored_norm(a) == pytest.approx(
            np.linalg.norm(a.materialize()), rel=1e-12
        )

    def test_distance_matches_dense(self):
        gen = RngStream(22).generator
        a = FactoredMatrix(gen.normal(size=(9, 3)), gen.normal(size=(7, 3)))
        b = FactoredMatrix(gen.normal(size=(9, 2)), gen.normal(size=(7, 2)))
        ref = np.linalg.norm(a.materialize() - b.materialize())
        assert factored_distance(a, b) == pytest.approx(ref, rel=1e-10)

    def test_point_from_factored_roundtrip(self):
        gen = RngStream(23).generator
        a = FactoredMatrix(gen.normal(size=(8, 3)), gen.normal(size=(6, 3)))
        point = point_from_factored(a)
        np.testing.assert_allclose(
            point.factored().materialize(), a.materialize(), atol=1e-10
        )
        assert np.all(np.diff(point.s) <= 1e-12)


class TestSampleProblem:
    def test_counts_and_values(self):
        rng = RngStream(24)
        m, n, r, gamma = 40, 30, 3, 2.5
        problem, truth = sample_problem(m, n, r, gamma, rng)
        assert problem.sample_count == round(gamma * r * (m + n - r))
        dense = truth.materialize()
        np.testing.assert_allclose(
            problem.observed, dense[problem.omega[:, 0], problem.omega[:, 1]]
        )
        assert truth.left.min() >= 0.0
        assert truth.left.max() <= 1.0 / math.sqrt(n)
        x0 = problem.x0
        np.testing.assert_allclose(x0.left.T @ x0.left, np.eye(r), atol=1e-10)

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError):
            sample_problem(10, 10, 2, 0.0, RngStream(25))


class TestComplete:
    def test_full_information_run_converges(self):
        m = n = 30
        r = 3
        gen = RngStream(26).generator
        truth = FactoredMatrix(
            gen.uniform(0, 1, size=(m, r)), gen.uniform(0, 1, size=(n, r))
        )
        p = make_problem(m, n, r, all_pairs(m, n), truth, x0_seed=27)
        y, converged, history = complete(p, max_iters=300, truth=truth)
        assert converged
        assert history["final_rel_err"] < 1e-6

    def test_sampled_objective_nonincreasing_without_regularization(self):
        rng = RngStream(28)
        problem, truth = sample_problem(50, 45, 3, 4.0, rng)
        _, _, history = complete(problem, max_iters=120, truth=truth)
        errs = np.array(history["sampled_rel"])
        assert np.all(np.diff(errs) <= 1e-12 * np.maximum(errs[:-1], 1e-300))

    def test_regularized_run_converges_and_reports_cross_state(self):
        rng = RngStream(29)
        problem, truth = sample_problem(40, 40, 2, 5.0, rng)
        y, converged, history = complete(
            problem,
            max_iters=400,
            regularize="ap_vol_warm",
            rng=RngStream(30),
            truth=truth,
        )
        assert converged
        state = history["cross_state"]
        assert state is not None
        dense = y.materialize()
        scale = np.abs(dense).max()
        assert dense[state.rows, :].min() >= -1e-12 * scale
        assert dense[:, state.cols].min() >= -1e-12 * scale

    def test_work_counters_stay_within_sparse_budget(self):
        rng = RngStream(31)
        problem, truth = sample_problem(60, 50, 3, 3.0, rng)
        _, _, history = complete(
            problem,
            max_iters=40,
            regularize="ap_vol_warm",
            rng=RngStream(32),
            truth=truth,
        )
        m, n, r = problem.m, problem.n, problem.r
        budget = 40 * (max(m, n) * r * r + problem.unique_count * r)
        assert max(history["work_units"]) <= budget
        # The warm cross projector touches at most its sweep budget.
        assert max(history["oracle_evals"]) <= 2 * 2 * (m + n) * r * 20

    def test_stagnation_ends_the_run(self):
        e1 = np.zeros((4, 1))
        e1[0, 0] = 1.0
        x0 = FactoredMatrix(e1, e1.copy())
        p = CompletionProblem(
            4, 4, 1, np.array([[1, 1]]), np.array([0.5]), x0
        )
        _, converged, history = complete(p, max_iters=10)
        assert not converged
        assert history["stagnated"]

    def test_validation(self):
        rng = RngStream(33)
        problem, _ = sample_problem(10, 10, 2, 3.0, rng)
        with pytest.raises(ValueError):
            complete(problem, regularize="bogus")
        with pytest.raises(ValueError):
            complete(problem, regularize="ap_vol_warm")
        with pytest.raises(ValueError):
            complete(problem, max_iters=0)
