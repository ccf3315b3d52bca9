import dataclasses
import math

import numpy as np
import pytest
import scipy.optimize
import scipy.stats

from blockgd import (
    BlockSelection,
    EvaluationError,
    InvalidBlockError,
    InvalidConfigError,
    NumericalInconsistencyError,
    SolverConfig,
    UnsupportedModeError,
    broyden_problem,
    compute_step_size,
    gd_step,
    incremental_residual_update,
    li_problem,
    linear_problem,
    rowblock_gd_step,
    sample_block,
    scbgd_step,
    solve,
)


class TestSampleBlock:
    def test_full_range_block(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            np.testing.assert_array_equal(sample_block(rng, 5, 5).indices, np.arange(5))

    def test_blocks_are_sorted_distinct_in_range(self):
        rng = np.random.default_rng(1)
        for n, q in [(20, 3), (20, 12), (7, 1), (9, 8)]:
            for _ in range(200):
                idx = sample_block(rng, n, q).indices
                assert idx.size == q
                assert idx[0] >= 0 and idx[-1] < n
                assert (np.diff(idx) > 0).all()

    def test_identical_seeds_identical_draws(self):
        a = np.random.default_rng(42)
        b = np.random.default_rng(42)
        for _ in range(100):
            np.testing.assert_array_equal(sample_block(a, 30, 4).indices,
                                          sample_block(b, 30, 4).indices)

    def test_uniform_over_pairs(self):
        # 60000 draws over the 6 pairs of {0..3}: frequencies within 1/6 +- 0.01
        # and a chi-square test at the 0.001 level
        rng = np.random.default_rng(123)
        counts = {}
        draws = 60000
        for _ in range(draws):
            key = tuple(sample_block(rng, 4, 2).indices.tolist())
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        freqs = np.array(list(counts.values())) / draws
        assert np.abs(freqs - 1 / 6).max() <= 0.01
        _, p_value = scipy.stats.chisquare(list(counts.values()))
        assert p_value > 0.001

    @pytest.mark.parametrize("q", [0, -1, 6])
    def test_rejects_bad_sizes(self, q):
        with pytest.raises(InvalidConfigError):
            sample_block(np.random.default_rng(0), 5, q)

    def test_block_selection_validation(self):
        with pytest.raises(InvalidBlockError):
            BlockSelection(np.array([2, 1]))
        with pytest.raises(InvalidBlockError):
            BlockSelection(np.array([1, 1]))
        with pytest.raises(InvalidBlockError):
            BlockSelection(np.array([], dtype=np.int64))


class TestComputeStepSize:
    def test_identity_block(self):
        f = np.array([3.0, -4.0])
        eta, degenerate = compute_step_size(f, f, 1.0)
        assert eta == 1.0 and not degenerate

    def test_reference_values(self):
        eta, degenerate = compute_step_size(np.array([1.0, 4.0]), np.array([1.0, 8.0]), 1.0)
        assert eta == 17.0 / 65.0 and not degenerate

    def test_degenerate(self):
        eta, degenerate = compute_step_size(np.zeros(3), np.zeros(4), 1.0)
        assert eta == 0.0 and degenerate

    def test_inconsistent_inputs(self):
        with pytest.raises(NumericalInconsistencyError):
            compute_step_size(np.array([1.0]), np.zeros(3), 1.0)

    def test_nonfinite_inputs(self):
        with pytest.raises(EvaluationError):
            compute_step_size(np.array([np.inf]), np.ones(3), 1.0)


class TestGdStep:
    def test_identity_reaches_target_in_one_step(self):
        b = np.array([0.25, 1.0, -0.75])
        prob = linear_problem(np.eye(3), b)
        out = gd_step(prob, np.array([1.5, -2.25, 0.5]))
        assert out.eta == 1.0
        np.testing.assert_array_equal(out.x_next, b)

    def test_diagonal_reference_example(self):
        A = np.diag([1.0, 2.0])
        prob = linear_problem(A, np.zeros(2))
        x = np.ones(2)
        out = gd_step(prob, x)
        np.testing.assert_array_equal(out.p_raw, [1.0, 4.0])
        np.testing.assert_array_equal(out.w, [1.0, 8.0])
        assert out.eta == 17.0 / 65.0
        np.testing.assert_allclose(out.x_next, [48 / 65, -3 / 65], rtol=1e-15, atol=1e-15)
        # independent check: eta minimizes ||f(x - eta p)|| along the gradient
        objective = lambda eta: np.sum((A @ (x - eta * out.p_raw)) ** 2)
        best = scipy.optimize.minimize_scalar(objective, bounds=(0.0, 1.0), method="bounded",
                                              options={"xatol": 1e-12})
        assert abs(best.x - out.eta) < 1e-8

    def test_root_is_degenerate(self):
        prob = li_problem(6)
        out = gd_step(prob, np.ones(6))
        assert out.degenerate and out.eta == 0.0
        np.testing.assert_array_equal(out.x_next, np.ones(6))

    def test_nonfinite_residual_raises(self):
        prob = linear_problem(np.eye(2), np.zeros(2))
        with pytest.raises(EvaluationError):
            gd_step(prob, np.array([np.nan, 0.0]))


class TestScbgdStep:
    def test_full_block_reduction_bitwise(self):
        rng = np.random.default_rng(6)
        problems = [broyden_problem(20), li_problem(20),
                    linear_problem(rng.normal(size=(20, 20)), rng.normal(size=20))]
        for prob in problems:
            for _ in range(20):
                x = rng.uniform(-2, 2, size=20)
                full = scbgd_step(prob, x, np.arange(20), 1.0)
                ref = gd_step(prob, x, 1.0)
                np.testing.assert_array_equal(full.x_next, ref.x_next)
                assert full.eta == ref.eta
                np.testing.assert_array_equal(full.p_raw, ref.p_raw)
                np.testing.assert_array_equal(full.w, ref.w)

    def test_single_column_on_identity(self):
        b = np.array([0.5, -1.25, 2.0])
        prob = linear_problem(np.eye(3), b)
        x = np.array([4.0, 8.0, -16.0])
        out = scbgd_step(prob, x, [1])
        assert out.x_next[1] == b[1]
        np.testing.assert_array_equal(out.x_next[[0, 2]], x[[0, 2]])
        np.testing.assert_array_equal(out.direction[[0, 2]], [0.0, 0.0])

    def test_step_outcome_invariants(self):
        prob = broyden_problem(12)
        rng = np.random.default_rng(7)
        for _ in range(50):
            x = rng.uniform(-2, 2, size=12)
            block = sample_block(rng, 12, 4)
            out = scbgd_step(prob, x, block)
            np.testing.assert_array_equal(out.x_next, x + out.direction)
            np.testing.assert_array_equal(out.direction[block.indices], -out.eta * out.p_raw)
            off_block = np.setdiff1d(np.arange(12), block.indices)
            np.testing.assert_array_equal(out.direction[off_block], np.zeros(off_block.size))

    def test_linear_exact_decrease(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(4, 4))
        prob = linear_problem(A, rng.normal(size=4))
        for _ in range(100):
            x = rng.normal(size=4)
            f = prob.residual(x)
            out = scbgd_step(prob, x, sample_block(rng, 4, 2), 1.0, residual=f)
            if out.degenerate:
                continue
            lhs = np.dot(prob.residual(out.x_next), prob.residual(out.x_next))
            wf = float(np.dot(out.w, f))
            rhs = np.dot(f, f) - wf ** 2 / float(np.dot(out.w, out.w))
            assert abs(lhs - rhs) <= 1e-10 * np.dot(f, f)

    def test_residual_scaling_invariance(self):
        base = broyden_problem(15)
        for c in (3.0, 0.125, -2.0):
            scaled = dataclasses.replace(
                base,
                residual=lambda x, c=c: c * base.residual(x),
                jacobian_columns=lambda x, cols, c=c: c * base.jacobian_columns(x, cols),
                solve_kernel=None,
                residual_rows=None,
                support_union=None,
                row_support=None,
            )
            rng_a = np.random.default_rng(77)
            rng_b = np.random.default_rng(77)
            x_a = np.array(base.x0)
            x_b = np.array(base.x0)
            for _ in range(100):
                x_a = scbgd_step(base, x_a, sample_block(rng_a, 15, 5)).x_next
                x_b = scbgd_step(scaled, x_b, sample_block(rng_b, 15, 5)).x_next
            np.testing.assert_allclose(x_a, x_b, rtol=0, atol=1e-12)


class TestRowBlockStep:
    def test_all_rows_equals_gd(self):
        rng = np.random.default_rng(9)
        for prob in [broyden_problem(10), li_problem(10)]:
            for _ in range(10):
                x = rng.uniform(-2, 2, size=10)
                rb = rowblock_gd_step(prob, x, np.arange(10), 1.0)
                ref = gd_step(prob, x, 1.0)
                np.testing.assert_array_equal(rb.x_next, ref.x_next)
                assert rb.eta == ref.eta

    def test_identity_single_row(self):
        b = np.array([0.5, -1.0, 2.5])
        prob = linear_problem(np.eye(3), b)
        x = np.array([2.0, 4.0, 8.0])
        out = rowblock_gd_step(prob, x, [2])
        assert out.x_next[2] == b[2]
        np.testing.assert_array_equal(out.x_next[:2], x[:2])

    def test_single_row_projection_algebra(self):
        rng = np.random.default_rng(10)
        A = rng.normal(size=(3, 4))
        b = rng.normal(size=3)
        prob = linear_problem(A, b)
        x = rng.normal(size=4)
        delta = 1.3
        out = rowblock_gd_step(prob, x, [1], delta)
        a = A[1]
        r = float(a @ x - b[1])
        expected = x - delta * r * a / float(a @ a)
        np.testing.assert_allclose(out.x_next, expected, rtol=1e-12)


class TestSolve:
    def test_identity_converges_in_one_iteration(self):
        prob = linear_problem(np.eye(6), np.ones(6))
        result = solve(prob, SolverConfig(method="gd"))
        assert result.converged and result.iterations == 1
        assert result.reason == "converged"
        assert len(result.residual_norms) == 2

    def test_converged_at_start(self):
        prob = linear_problem(np.eye(3), np.zeros(3))
        result = solve(prob, SolverConfig(method="gd"))
        assert result.converged and result.iterations == 0

    def test_history_and_samples(self):
        prob = broyden_problem(40)
        result = solve(prob, SolverConfig(method="scbgd", q=5, seed=3))
        assert result.converged
        assert len(result.residual_norms) == result.iterations + 1
        assert result.residual_norms[-1] <= 1e-6
        samples = result.sample_iterations
        assert samples[0] == 0 and samples[-1] == result.iterations
        assert (np.diff(samples) > 0).all()
        interior = samples[(samples > 0) & (samples < result.iterations)]
        assert (interior % 100 == 0).all()

    def test_seed_determinism_across_runs(self):
        prob = broyden_problem(60)
        cfg = SolverConfig(method="scbgd", q=6, seed=11)
        a = solve(prob, cfg)
        b = solve(prob, cfg)
        assert a.iterations == b.iterations
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.residual_norms, b.residual_norms)

    def test_iteration_cap(self):
        prob = broyden_problem(30)
        result = solve(prob, SolverConfig(method="scbgd", q=2, seed=0, max_iter=5))
        assert result.reason == "iteration-cap"
        assert result.iterations == 5
        assert not result.converged
        assert result.final_residual > 1e-6

    def test_degenerate_stall(self):
        # column 2 of the Jacobian is zero and row 2 of the residual is never
        # solvable, so once column 1 is solved every draw is degenerate
        A = np.array([[1.0, 0.0], [0.0, 0.0]])
        prob = linear_problem(A, np.array([1.0, 1.0]))
        result = solve(prob, SolverConfig(method="scbgd", q=1, seed=5, max_iter=50000))
        assert result.reason == "degenerate-stall"
        assert not result.converged
        # the stall consumed exactly 5000 consecutive degenerate iterations
        tail = result.residual_norms[-5000:]
        assert np.all(tail == tail[0])

    def test_x0_override(self):
        prob = broyden_problem(25)
        result = solve(prob, SolverConfig(method="gd"), x0=np.zeros(25))
        assert result.converged
        assert result.residual_norms[0] == np.linalg.norm(prob.residual(np.zeros(25)))

    def test_solver_paths_agree(self):
        # kernel, pure-numpy incremental, and full-mode loops share sampling
        # and formulas; iteration counts must agree exactly on short runs
        prob = broyden_problem(100)
        cfg = SolverConfig(method="scbgd", q=10, seed=7)
        kernel = solve(prob, cfg)
        numpy_incremental = solve(dataclasses.replace(prob, solve_kernel=None), cfg)
        full = solve(prob, dataclasses.replace(cfg, residual_update="full"))
        assert kernel.converged and numpy_incremental.converged and full.converged
        assert kernel.iterations == numpy_incremental.iterations == full.iterations
        assert abs(kernel.final_residual - full.final_residual) <= 1e-12

    def test_rowblock_solve(self):
        prob = broyden_problem(40)
        result = solve(prob, SolverConfig(method="rowblock-gd", q=8, seed=2))
        assert result.converged

    def test_config_validation(self):
        with pytest.raises(InvalidConfigError):
            SolverConfig(method="newton")
        with pytest.raises(InvalidConfigError):
            SolverConfig(method="gd", delta=2.0)
        with pytest.raises(InvalidConfigError):
            SolverConfig(method="gd", delta=0.0)
        with pytest.raises(InvalidConfigError):
            SolverConfig(method="scbgd")
        with pytest.raises(InvalidConfigError):
            SolverConfig(method="scbgd", q=0)
        with pytest.raises(InvalidConfigError):
            SolverConfig(method="gd", tol=-1.0)

    def test_q_checked_against_problem(self):
        prob = broyden_problem(10)
        with pytest.raises(InvalidConfigError):
            solve(prob, SolverConfig(method="scbgd", q=11))

    def test_delta_range_monotone_on_linear(self):
        rng = np.random.default_rng(14)
        A = rng.normal(size=(6, 6)) + 3 * np.eye(6)
        prob = linear_problem(A, rng.normal(size=6))
        for delta in (0.1, 0.5, 1.0, 1.5, 1.9):
            result = solve(prob, SolverConfig(method="scbgd", q=2, delta=delta, seed=1,
                                              max_iter=400))
            norms = result.residual_norms
            assert (norms[1:] <= norms[:-1] * (1 + 1e-12)).all()


class TestIncrementalResidualUpdate:
    def test_empty_block_returns_unchanged(self):
        prob = broyden_problem(10)
        x = np.array(prob.x0)
        f = prob.residual(x)
        np.testing.assert_array_equal(incremental_residual_update(prob, f, x, []), f)

    def test_single_column_touches_support_only(self):
        prob = broyden_problem(20)
        rng = np.random.default_rng(15)
        x_old = rng.uniform(-2, 2, size=20)
        f_old = prob.residual(x_old)
        x_new = x_old.copy()
        x_new[7] += 0.37
        updated = incremental_residual_update(prob, f_old, x_new, [7])
        full = prob.residual(x_new)
        np.testing.assert_array_equal(updated[[6, 7, 8]], full[[6, 7, 8]])
        untouched = np.setdiff1d(np.arange(20), [6, 7, 8])
        np.testing.assert_array_equal(updated[untouched], f_old[untouched])
        np.testing.assert_array_equal(updated, full)

    @pytest.mark.parametrize("factory", [broyden_problem, li_problem])
    def test_random_block_updates_match_full(self, factory):
        prob = factory(50)
        rng = np.random.default_rng(16)
        x = rng.uniform(-2, 2, size=50)
        f = prob.residual(x)
        for _ in range(200):
            q = int(rng.integers(1, 9))
            cols = sample_block(rng, 50, q).indices
            x = x.copy()
            x[cols] += rng.normal(scale=0.05, size=q)
            f = incremental_residual_update(prob, f, x, cols)
            np.testing.assert_allclose(f, prob.residual(x), rtol=0, atol=1e-12)

    def test_missing_support_map(self):
        prob = linear_problem(np.eye(3), np.ones(3))
        with pytest.raises(UnsupportedModeError):
            incremental_residual_update(prob, np.ones(3), np.zeros(3), [0])

    def test_solve_falls_back_to_full_mode(self):
        prob = linear_problem(np.eye(4), np.ones(4))
        result = solve(prob, SolverConfig(method="scbgd", q=2, seed=0,
                                          residual_update="incremental"))
        assert result.converged
