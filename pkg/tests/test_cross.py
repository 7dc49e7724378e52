"""Cross approximation: swap-local optimality, interpolation, budgets."""

import numpy as np
import pytest

from qapprox.cross import (
    CountingOracle,
    CrossError,
    CrossState,
    absolute,
    arccot,
    clamp_nonneg,
    cross_project_pvol,
    cross_project_vol,
    dense_oracle,
    dominant_r,
    estimate_min_entry,
    factored_oracle,
    indent,
    maxvol,
    maxvol_rect,
    shift,
)
from qapprox.linalg import RngStream
from qapprox.projectors import FactoredMatrix


def pvol_sq(block):
    """Squared projective volume of a k x r block, det of its Gram matrix."""
    return float(np.linalg.det(block.T @ block))


def assert_no_row_swap_improves(a, idx, nu, *, rect=False):
    """Exhaustive oracle: no single-row swap beats the selection by > nu."""
    base = pvol_sq(a[idx]) if rect else abs(np.linalg.det(a[idx]))
    factor = nu * nu if rect else nu
    others = np.setdiff1d(np.arange(a.shape[0]), idx)
    for t in range(len(idx)):
        for i in others:
            trial = idx.copy()
            trial[t] = i
            vol = pvol_sq(a[trial]) if rect else abs(np.linalg.det(a[trial]))
            assert vol <= factor * base * (1.0 + 1e-9), (
                f"swap {idx[t]} -> {i} improves {base} to {vol}"
            )


def assert_no_col_swap_improves(a, idx, nu):
    """Exhaustive oracle for dominant_r on a wide matrix."""
    base = pvol_sq(a[:, idx])
    others = np.setdiff1d(np.arange(a.shape[1]), idx)
    for t in range(len(idx)):
        for j in others:
            trial = idx.copy()
            trial[t] = j
            vol = pvol_sq(a[:, trial])
            assert vol <= nu * nu * base * (1.0 + 1e-9), (
                f"swap {idx[t]} -> {j} improves {base} to {vol}"
            )


class TestTransforms:
    def test_entrywise_definitions(self):
        x = np.array([-2.0, -0.5, 0.0, 1.5])
        assert np.array_equal(clamp_nonneg(x), [0.0, 0.0, 0.0, 1.5])
        assert np.array_equal(absolute(x), [2.0, 0.5, 0.0, 1.5])
        assert np.array_equal(shift(1.0)(x), [-1.0, 0.5, 1.0, 2.5])
        assert np.array_equal(indent(0.25)(x), [0.25, 0.25, 0.25, 1.5])

    def test_arccot_principal_values(self):
        assert arccot(np.array(0.0)) == pytest.approx(np.pi / 2, abs=1e-15)
        assert arccot(np.array(1.0)) == pytest.approx(np.pi / 4, abs=1e-15)
        assert arccot(np.array(-1.0)) == pytest.approx(3 * np.pi / 4, abs=1e-15)

    def test_arccot_monotone_onto_0_pi(self):
        x = np.linspace(-50.0, 50.0, 1001)
        y = arccot(x)
        assert np.all(y > 0.0) and np.all(y < np.pi)
        assert np.all(np.diff(y) < 0.0)


class TestEntryOracle:
    def setup_method(self):
        self.x = RngStream(11).generator.normal(size=(7, 5))
        self.oracle = dense_oracle(self.x)

    def test_dense_access(self):
        assert np.array_equal(self.oracle.rows([2, 4]), self.x[[2, 4]])
        assert np.array_equal(self.oracle.cols([0, 3]), self.x[:, [0, 3]])
        assert np.array_equal(
            self.oracle.submatrix([1, 3], [0, 2]), self.x[np.ix_([1, 3], [0, 2])]
        )
        assert self.oracle.entry(3, 4) == self.x[3, 4]

    def test_transform_chain_applies_left_to_right(self):
        oracle = dense_oracle(np.array([[-3.0]]))
        chained = oracle.transformed(shift(1.0)).transformed(absolute)
        assert chained.entry(0, 0) == 2.0
        reversed_chain = oracle.transformed(absolute).transformed(shift(1.0))
        assert reversed_chain.entry(0, 0) == 4.0

    def test_factored_oracle_matches_materialized(self):
        rng = RngStream(3)
        y = FactoredMatrix(
            rng.generator.normal(size=(6, 2)), rng.generator.normal(size=(5, 2))
        )
        dense = y.materialize()
        oracle = factored_oracle(y)
        assert oracle.shape == (6, 5)
        assert np.allclose(oracle.rows([0, 5]), dense[[0, 5]], atol=1e-14)
        assert np.allclose(oracle.cols([4]), dense[:, [4]], atol=1e-14)
        assert np.allclose(
            oracle.submatrix([1, 2], [0, 3]), dense[np.ix_([1, 2], [0, 3])], atol=1e-14
        )

    def test_counting_oracle_counts_entries(self):
        counting = CountingOracle(self.oracle)
        counting.rows([0, 1])
        assert counting.entries_evaluated == 10
        counting.cols([0])
        assert counting.entries_evaluated == 17
        counting.submatrix([0], [1, 2])
        assert counting.entries_evaluated == 19
        counting.entry(0, 0)
        assert counting.entries_evaluated == 20

    def test_counting_shared_across_transformed_views(self):
        counting = CountingOracle(self.oracle)
        view = counting.transformed(absolute)
        view.rows([0])
        counting.cols([1])
        assert counting.entries_evaluated == 12
        assert view.entries_evaluated == 12


class TestMaxvol:
    def test_already_maximal_start_is_stable(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        assert np.array_equal(maxvol(a, [0, 1]), [0, 1])

    def test_beats_unit_determinant_start(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
        idx = maxvol(a, [0, 1], nu=1.0)
        assert abs(np.linalg.det(a[idx])) == pytest.approx(2.0, abs=1e-12)

    def test_hand_traced_swap_sequence(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0], [5.0, 0.0], [0.0, 7.0], [2.0, 2.0]])
        assert np.array_equal(maxvol(a, [0, 1], nu=1.05), [2, 3])

    @pytest.mark.parametrize("seed", range(5))
    def test_no_single_swap_improves(self, seed):
        a = RngStream(seed).generator.normal(size=(50, 4))
        start = RngStream(seed + 100).generator.choice(50, size=4, replace=False)
        idx = maxvol(a, start, nu=1.01)
        assert len(np.unique(idx)) == 4
        assert_no_row_swap_improves(a, idx, 1.01)

    def test_square_input_selects_all_rows(self):
        a = RngStream(0).generator.normal(size=(3, 3))
        assert np.array_equal(maxvol(a, [2, 0, 1]), [0, 1, 2])

    def test_singular_start_is_repaired(self):
        a = RngStream(5).generator.normal(size=(8, 3))
        a[1] = a[0]
        idx = maxvol(a, [0, 1, 2], nu=1.05)
        assert len(np.unique(idx)) == 3
        assert abs(np.linalg.det(a[idx])) > 1e-6
        assert_no_row_swap_improves(a, idx, 1.05)

    def test_rank_deficient_input_returns_without_error(self):
        a = np.outer(np.arange(1.0, 7.0), [1.0, 2.0])
        idx = maxvol(a, [0, 1], nu=1.05)
        assert idx.shape == (2,)
        assert len(np.unique(idx)) == 2

    def test_swap_budget_exhaustion_reports_indices(self):
        eps = 1e-6
        a = np.array([[eps, 0.0], [0.0, eps], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(CrossError) as info:
            maxvol(a, [0, 1], nu=1.05, max_swaps=1)
        assert info.value.indices is not None
        assert len(info.value.indices) == 2

    def test_input_validation(self):
        a = RngStream(0).generator.normal(size=(6, 2))
        with pytest.raises(ValueError):
            maxvol(a, [0], nu=1.05)
        with pytest.raises(ValueError):
            maxvol(a, [0, 0], nu=1.05)
        with pytest.raises(ValueError):
            maxvol(a, [0, 6], nu=1.05)
        with pytest.raises(ValueError):
            maxvol(a, [0, 1], nu=0.9)
        with pytest.raises(ValueError):
            maxvol(a.T, [0, 1], nu=1.05)


class TestMaxvolRect:
    def test_k_equals_m_selects_all_rows(self):
        a = RngStream(1).generator.normal(size=(5, 2))
        assert np.array_equal(maxvol_rect(a, 5, [4, 3, 2, 1, 0]), np.arange(5))

    @pytest.mark.parametrize("seed", range(5))
    def test_no_single_swap_improves(self, seed):
        a = RngStream(seed).generator.normal(size=(10, 3))
        start = RngStream(seed + 50).generator.choice(10, size=5, replace=False)
        idx = maxvol_rect(a, 5, start, nu=1.05)
        assert len(np.unique(idx)) == 5
        assert_no_row_swap_improves(a, idx, 1.05, rect=True)

    def test_k_equals_r_square_criterion(self):
        a = RngStream(9).generator.normal(size=(8, 2))
        idx = maxvol_rect(a, 2, [0, 1], nu=1.05)
        assert_no_row_swap_improves(a, idx, 1.05, rect=True)

    def test_dominant_rows_win(self):
        rng = RngStream(4)
        tiny = 1e-3 * rng.generator.normal(size=(6, 2))
        big = np.array([[10.0, 0.0], [0.0, 10.0], [7.0, 7.0], [-8.0, 8.0]])
        a = np.vstack([tiny, big])
        idx = maxvol_rect(a, 4, [0, 1, 2, 3], nu=1.05)
        assert np.array_equal(idx, [6, 7, 8, 9])

    def test_rank_deficient_input_returns_without_error(self):
        a = np.outer(np.linspace(1.0, 2.0, 10), [1.0, 2.0])
        idx = maxvol_rect(a, 3, [0, 1, 2], nu=1.05)
        assert idx.shape == (3,)
        assert len(np.unique(idx)) == 3

    def test_swap_budget_exhaustion(self):
        eps = 1e-6
        a = np.array(
            [[eps, 0.0], [0.0, eps], [eps, eps], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        )
        with pytest.raises(CrossError) as info:
            maxvol_rect(a, 3, [0, 1, 2], nu=1.05, max_swaps=1)
        assert len(info.value.indices) == 3

    def test_input_validation(self):
        a = RngStream(0).generator.normal(size=(6, 2))
        with pytest.raises(ValueError):
            maxvol_rect(a, 1, [0], nu=1.05)
        with pytest.raises(ValueError):
            maxvol_rect(a, 7, list(range(7)), nu=1.05)


class TestDominantR:
    def test_fades_zero_and_small_columns(self):
        a = np.array([[3.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
        assert np.array_equal(dominant_r(a, [1, 2], nu=1.05), [0, 1])

    def test_degenerate_start_is_repaired(self):
        a = np.array([[3.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
        assert np.array_equal(dominant_r(a, [2, 3], nu=1.05), [0, 1])

    def test_r_equals_n_selects_all(self):
        a = RngStream(2).generator.normal(size=(3, 4))
        assert np.array_equal(dominant_r(a, [3, 1, 0, 2], nu=1.05), np.arange(4))

    def test_rank_one_selection_is_largest_column(self):
        a = np.array([[1.0, 3.0, -2.0], [0.0, 4.0, 1.0]])
        assert np.array_equal(dominant_r(a, [0], nu=1.05), [1])

    @pytest.mark.parametrize("seed", range(5))
    def test_no_single_swap_improves(self, seed):
        a = RngStream(seed).generator.normal(size=(6, 12))
        start = RngStream(seed + 70).generator.choice(12, size=3, replace=False)
        idx = dominant_r(a, start, nu=1.0)
        assert len(np.unique(idx)) == 3
        assert_no_col_swap_improves(a, idx, 1.0)

    def test_rank_deficient_input_returns_without_error(self):
        a = np.outer([1.0, 2.0, 3.0], np.ones(5))
        idx = dominant_r(a, [0, 1], nu=1.05)
        assert idx.shape == (2,)
        assert len(np.unique(idx)) == 2

    def test_input_validation(self):
        a = RngStream(0).generator.normal(size=(2, 5))
        with pytest.raises(ValueError):
            dominant_r(a, [0, 5], nu=1.05)
        with pytest.raises(ValueError):
            dominant_r(a, list(range(6)), nu=1.05)


class TestCrossState:
    def test_roundtrip_with_aux_sets(self):
        state = CrossState(
            rows=[0, 4, 7],
            cols=[2, 3, 9],
            aux_rows=[0, 4],
            aux_cols=[3, 9],
            nu=1.25,
            effective_rank=2,
            swaps=13,
        )
        back = CrossState.from_text(state.to_text())
        assert np.array_equal(back.rows, state.rows)
        assert np.array_equal(back.cols, state.cols)
        assert np.array_equal(back.aux_rows, state.aux_rows)
        assert np.array_equal(back.aux_cols, state.aux_cols)
        assert back.nu == state.nu
        assert back.effective_rank == 2
        assert back.swaps == 13

    def test_roundtrip_without_aux_sets(self):
        state = CrossState(rows=[1], cols=[0], nu=1.05)
        back = CrossState.from_text(state.to_text())
        assert np.array_equal(back.rows, [1])
        assert np.array_equal(back.cols, [0])
        assert back.aux_rows is None and back.aux_cols is None
        assert back.effective_rank is None

    def test_rejects_duplicates_and_bad_nu(self):
        with pytest.raises(ValueError):
            CrossState(rows=[1, 1], cols=[0, 2])
        with pytest.raises(ValueError):
            CrossState(rows=[0], cols=[1], nu=0.5)


class TestCrossProjectVol:
    @pytest.mark.parametrize("seed", range(5))
    def test_exact_rank_matrix_is_reproduced(self, seed):
        rng = RngStream(seed)
        g = rng.generator.normal(size=(30, 4))
        h = rng.generator.normal(size=(24, 4))
        x = g @ h.T
        approx, state = cross_project_vol(dense_oracle(x), 4, rng=RngStream(seed + 10))
        err = np.linalg.norm(approx.materialize() - x)
        assert err <= 1e-8 * np.linalg.norm(x)
        assert state.effective_rank == 4
        assert len(np.unique(state.rows)) == 4
        assert len(np.unique(state.cols)) == 4

    def test_interpolates_selected_rows_and_columns(self):
        x = RngStream(21).generator.normal(size=(15, 12))
        approx, state = cross_project_vol(dense_oracle(x), 3, rng=RngStream(22))
        dense = approx.materialize()
        scale = np.abs(x).max()
        assert np.allclose(dense[state.rows], x[state.rows], atol=1e-8 * scale)
        assert np.allclose(dense[:, state.cols], x[:, state.cols], atol=1e-8 * scale)

    def test_clamped_oracle_cross_is_nonnegative(self):
        rng = RngStream(31)
        x = rng.generator.normal(size=(20, 3)) @ rng.generator.normal(size=(16, 3)).T
        assert x.min() < 0
        oracle = dense_oracle(x).transformed(clamp_nonneg)
        approx, state = cross_project_vol(oracle, 3, rng=RngStream(32))
        dense = approx.materialize()
        assert dense[state.rows].min() >= -1e-12
        assert dense[:, state.cols].min() >= -1e-12
        assert dense.min() < -1e-12

    def test_warm_restart_is_fixed_point(self):
        x = RngStream(41).generator.normal(size=(18, 14))
        oracle = dense_oracle(x)
        first, state = cross_project_vol(oracle, 4, rng=RngStream(42))
        second, state2 = cross_project_vol(oracle, 4, state=state)
        assert state2.swaps == 0
        assert np.array_equal(state2.rows, state.rows)
        assert np.array_equal(state2.cols, state.cols)
        assert np.array_equal(second.left, first.left)
        assert np.array_equal(second.right, first.right)

    def test_same_seed_same_result(self):
        x = RngStream(51).generator.normal(size=(12, 10))
        a1, s1 = cross_project_vol(dense_oracle(x), 3, rng=RngStream(7))
        a2, s2 = cross_project_vol(dense_oracle(x), 3, rng=RngStream(7))
        assert np.array_equal(s1.rows, s2.rows)
        assert np.array_equal(s1.cols, s2.cols)
        assert np.array_equal(a1.left, a2.left)
        assert np.array_equal(a1.right, a2.right)

    def test_singular_pivot_drops_to_effective_rank(self):
        rng = RngStream(61)
        x = rng.generator.normal(size=(20, 2)) @ rng.generator.normal(size=(16, 2)).T
        approx, state = cross_project_vol(dense_oracle(x), 3, rng=RngStream(62))
        assert state.effective_rank == 2
        err = np.linalg.norm(approx.materialize() - x)
        assert err <= 1e-8 * np.linalg.norm(x)

    def test_entry_budget_within_two_sweep_blocks(self):
        x = RngStream(71).generator.normal(size=(40, 30))
        counting = CountingOracle(dense_oracle(x))
        cross_project_vol(counting, 5, rng=RngStream(72), max_sweeps=6)
        assert 0 < counting.entries_evaluated <= 2 * (40 + 30) * 5 * 6

    def test_fresh_start_requires_rng(self):
        x = np.eye(4)
        with pytest.raises(ValueError):
            cross_project_vol(dense_oracle(x), 2)

    def test_rank_validation(self):
        x = np.eye(4)
        with pytest.raises(ValueError):
            cross_project_vol(dense_oracle(x), 5, rng=RngStream(0))
        with pytest.raises(ValueError):
            cross_project_vol(dense_oracle(x), 0, rng=RngStream(0))


class TestCrossProjectPvol:
    @pytest.mark.parametrize("seed", range(5))
    def test_exact_rank_matrix_is_reproduced(self, seed):
        rng = RngStream(seed)
        g = rng.generator.normal(size=(40, 3))
        h = rng.generator.normal(size=(32, 3))
        x = g @ h.T
        approx, state = cross_project_pvol(
            dense_oracle(x), 3, 9, 9, rng=RngStream(seed + 30)
        )
        err = np.linalg.norm(approx.materialize() - x)
        assert err <= 1e-8 * np.linalg.norm(x)
        assert approx.left.shape == (40, 3)
        assert approx.right.shape == (32, 3)
        assert state.effective_rank == 3
        assert len(state.rows) == 9 and len(state.cols) == 9
        assert len(state.aux_rows) == 3 and len(state.aux_cols) == 3

    def test_k_equals_r_matches_vol_output_shape(self):
        rng = RngStream(81)
        x = rng.generator.normal(size=(14, 3)) @ rng.generator.normal(size=(11, 3)).T
        approx, state = cross_project_pvol(dense_oracle(x), 3, 3, 3, rng=RngStream(82))
        assert approx.left.shape == (14, 3)
        assert approx.right.shape == (11, 3)
        err = np.linalg.norm(approx.materialize() - x)
        assert err <= 1e-8 * np.linalg.norm(x)

    def test_warm_restart_is_fixed_point(self):
        x = RngStream(91).generator.normal(size=(25, 20))
        oracle = dense_oracle(x)
        first, state = cross_project_pvol(oracle, 2, 6, 6, rng=RngStream(92))
        second, state2 = cross_project_pvol(oracle, 2, 6, 6, state=state)
        assert state2.swaps == 0
        assert np.array_equal(state2.rows, state.rows)
        assert np.array_equal(state2.cols, state.cols)
        assert np.array_equal(state2.aux_rows, state.aux_rows)
        assert np.array_equal(state2.aux_cols, state.aux_cols)
        assert np.array_equal(second.left, first.left)
        assert np.array_equal(second.right, first.right)

    def test_entry_budget_within_four_sweep_blocks(self):
        x = RngStream(101).generator.normal(size=(50, 40))
        counting = CountingOracle(dense_oracle(x))
        cross_project_pvol(counting, 3, 9, 9, rng=RngStream(102), max_sweeps=5)
        assert 0 < counting.entries_evaluated <= 4 * (50 + 40) * 3 * 5

    def test_input_validation(self):
        x = np.eye(6)
        with pytest.raises(ValueError):
            cross_project_pvol(dense_oracle(x), 3, 2, 4, rng=RngStream(0))
        with pytest.raises(ValueError):
            cross_project_pvol(dense_oracle(x), 2, 4, 7, rng=RngStream(0))


class TestEstimateMinEntry:
    def test_nonnegative_oracle_gives_nonnegative_value(self):
        x = np.abs(RngStream(111).generator.normal(size=(9, 7)))
        i, j, value = estimate_min_entry(dense_oracle(x), RngStream(112))
        assert value >= 0.0
        assert value == x[i, j]

    @pytest.mark.parametrize("seed", range(5))
    def test_rank_one_positive_row_factor_is_exact(self, seed):
        u = np.array([1.0, 2.0, 0.5, 3.0, 1.5])
        v = np.array([0.4, -2.0, 1.0, -0.5, 0.8])
        x = np.outer(u, v)
        i, j, value = estimate_min_entry(dense_oracle(x), RngStream(seed))
        assert (i, j) == (3, 1)
        assert value == pytest.approx(-6.0, abs=1e-14)

    def test_rank_five_quality_bar(self):
        hits = 0
        for seed in range(10):
            rng = RngStream(1000 + seed)
            g = rng.generator.normal(size=(40, 5))
            h = rng.generator.normal(size=(30, 5))
            x = g @ h.T
            true_min = x.min()
            assert true_min < 0
            _, _, value = estimate_min_entry(dense_oracle(x), RngStream(2000 + seed))
            if value <= 0.5 * true_min:
                hits += 1
        assert hits >= 7
