"""Tests for the weighted coordinate-descent Lasso."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from ampr.wlasso import (LassoSolution, WeightedLassoProblem, fit, fit_path,
                         kkt_residual)


def objective(problem, beta):
    r = problem.y - problem.X @ beta
    return 0.5 * np.sum(problem.c * r * r) \
        + np.sum(problem.lam_vec * np.abs(beta))


def random_problem(rng, M=20, N=10, weighted=True):
    X = rng.normal(size=(M, N)) / np.sqrt(N)
    beta0 = np.zeros(N)
    beta0[: N // 3] = rng.normal(size=N // 3)
    y = X @ beta0 + 0.05 * rng.normal(size=M)
    if weighted:
        c = rng.poisson(1.0, size=M).astype(float)
        if not np.any(c > 0):
            c[0] = 1.0
    else:
        c = np.ones(M)
    lam_vec = rng.uniform(0.01, 0.05, size=N)
    return WeightedLassoProblem(X, y, c, lam_vec)


class TestFit:
    def test_single_column_soft_threshold(self):
        problem = WeightedLassoProblem(
            np.array([[1.0], [0.0]]), np.array([2.0, 0.0]),
            np.array([1.0, 1.0]), np.array([1.0]))
        sol = fit(problem)
        assert_allclose(sol.beta, [1.0], atol=1e-12)
        assert sol.converged

    def test_penalty_above_lambda_max_gives_zero(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(15, 6))
        y = rng.normal(size=15)
        c = np.ones(15)
        lam_max = np.max(np.abs(X.T @ y))
        problem = WeightedLassoProblem(X, y, c, np.full(6, lam_max * 1.01))
        sol = fit(problem)
        assert np.all(sol.beta == 0.0)

    def test_kkt_certificate_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            problem = random_problem(rng)
            sol = fit(problem, tol=1e-10)
            assert sol.converged
            assert sol.kkt_violation <= 1e-8
            assert kkt_residual(problem, sol.beta) <= 1e-8

    def test_exact_zeros(self):
        rng = np.random.default_rng(3)
        problem = random_problem(rng, M=30, N=20)
        sol = fit(problem)
        assert np.any(sol.beta == 0.0)

    def test_warm_start_agrees_with_cold(self):
        rng = np.random.default_rng(5)
        problem = random_problem(rng)
        cold = fit(problem, tol=1e-12)
        warm = fit(problem, tol=1e-12,
                   warm_start=cold.beta + rng.normal(size=10) * 0.1)
        assert_allclose(warm.beta, cold.beta, atol=1e-9)

    def test_weight_penalty_scaling_invariance(self):
        """c -> s*c with lam -> s*lam leaves the argmin unchanged."""
        rng = np.random.default_rng(7)
        problem = random_problem(rng)
        sol = fit(problem, tol=1e-12)
        s = 3.7
        scaled = WeightedLassoProblem(problem.X, problem.y, s * problem.c,
                                      s * problem.lam_vec)
        sol_s = fit(scaled, tol=1e-12)
        assert_allclose(sol_s.beta, sol.beta, atol=1e-9)

    def test_objective_nonincreasing_in_sweeps(self):
        rng = np.random.default_rng(11)
        problem = random_problem(rng, M=40, N=25)
        objs = []
        for sweeps in range(1, 12):
            sol = fit(problem, tol=0.0, max_iters=sweeps)
            objs.append(objective(problem, sol.beta))
        assert np.all(np.diff(objs) <= 1e-12)

    def test_zero_weight_rows_are_dropped(self):
        """Zeroing a row's weight must equal deleting the row."""
        rng = np.random.default_rng(13)
        problem = random_problem(rng, M=25, N=8)
        c = problem.c.copy()
        c[[2, 5, 6]] = 0.0
        full = fit(WeightedLassoProblem(problem.X, problem.y, c,
                                        problem.lam_vec), tol=1e-12)
        keep = c > 0
        sub = fit(WeightedLassoProblem(problem.X[keep], problem.y[keep],
                                       c[keep], problem.lam_vec), tol=1e-12)
        assert_allclose(full.beta, sub.beta, atol=1e-12)

    def test_max_iters_exhaustion_reported(self):
        rng = np.random.default_rng(17)
        problem = random_problem(rng)
        sol = fit(problem, tol=1e-14, max_iters=2)
        assert not sol.converged

    def test_validation_errors(self):
        X = np.eye(3)
        with pytest.raises(ValueError):
            WeightedLassoProblem(X, np.ones(2), np.ones(3), np.ones(3))
        with pytest.raises(ValueError):
            WeightedLassoProblem(X, np.ones(3), np.zeros(3), np.ones(3))
        with pytest.raises(ValueError):
            WeightedLassoProblem(X, np.ones(3), -np.ones(3), np.ones(3))
        with pytest.raises(ValueError):
            WeightedLassoProblem(X, np.ones(3), np.ones(3), np.zeros(3))


class TestKktResidual:
    def test_exact_solution_is_zero(self):
        problem = WeightedLassoProblem(
            np.array([[1.0], [0.0]]), np.array([2.0, 0.0]),
            np.array([1.0, 1.0]), np.array([1.0]))
        assert kkt_residual(problem, np.array([1.0])) <= 1e-12

    def test_origin_with_small_penalty_violates(self):
        problem = WeightedLassoProblem(
            np.array([[1.0], [0.0]]), np.array([2.0, 0.0]),
            np.array([1.0, 1.0]), np.array([0.5]))
        assert kkt_residual(problem, np.array([0.0])) == pytest.approx(1.5)


class TestFitPath:
    def test_grid_above_lambda_max_starts_at_zero(self):
        rng = np.random.default_rng(19)
        X = rng.normal(size=(30, 12))
        y = rng.normal(size=30)
        c = np.ones(30)
        lam_max = np.max(np.abs(X.T @ y))
        grid = np.array([lam_max * 1.1, lam_max * 0.5, lam_max * 0.1])
        sols = fit_path(X, y, c, grid)
        assert np.all(sols[0].beta == 0.0)
        assert np.any(sols[-1].beta != 0.0)

    def test_path_matches_cold_fits(self):
        rng = np.random.default_rng(23)
        problem = random_problem(rng, M=40, N=15)
        lam_max = np.max(np.abs(problem.X.T @ (problem.c * problem.y)))
        grid = np.geomspace(lam_max, lam_max / 100, 8)
        sols = fit_path(problem.X, problem.y, problem.c, grid, tol=1e-12)
        for lam, sol in zip(grid, sols):
            cold = fit(WeightedLassoProblem(problem.X, problem.y, problem.c,
                                            np.full(15, lam)), tol=1e-12)
            assert_allclose(sol.beta, cold.beta, atol=1e-8)

    def test_single_point_grid_equals_fit(self):
        rng = np.random.default_rng(29)
        problem = random_problem(rng)
        sols = fit_path(problem.X, problem.y, problem.c, np.array([0.02]))
        cold = fit(WeightedLassoProblem(problem.X, problem.y, problem.c,
                                        np.full(10, 0.02)))
        assert_allclose(sols[0].beta, cold.beta, rtol=0, atol=0)

    def test_increasing_grid_rejected(self):
        with pytest.raises(ValueError):
            fit_path(np.eye(3), np.ones(3), np.ones(3), np.array([0.1, 0.2]))


class TestPolish:
    def test_matches_plain_fit_on_random_instances(self):
        rng = np.random.default_rng(31)
        for _ in range(15):
            problem = random_problem(rng)
            plain = fit(problem, tol=1e-12)
            polished = fit(problem, tol=1e-10, polish=True)
            assert polished.converged
            assert polished.kkt_violation <= 1e-10
            assert_allclose(polished.beta, plain.beta, atol=1e-8)

    def test_underdetermined_weak_penalty_is_solved_exactly(self):
        # N > M with a penalty far below lambda_max: the regime where
        # plain descent slows down critically. The polished solution must
        # carry an essentially exact optimality certificate.
        rng = np.random.default_rng(37)
        M, N = 60, 150
        X = rng.normal(size=(M, N)) / np.sqrt(N)
        beta0 = np.zeros(N)
        beta0[:30] = rng.normal(size=30)
        y = X @ beta0 + 0.05 * rng.normal(size=M)
        c = rng.poisson(1.0, size=M).astype(float)
        c[0] = max(c[0], 1.0)
        problem = WeightedLassoProblem(X, y, c, np.full(N, 1e-4))
        sol = fit(problem, tol=1e-8, polish=True)
        assert sol.converged
        assert sol.kkt_violation <= 1e-12
        assert np.count_nonzero(sol.beta) <= np.count_nonzero(c > 0)
        # its objective is no worse than a long plain-descent run's
        plain = fit(problem, tol=1e-9)
        assert objective(problem, sol.beta) \
            <= objective(problem, plain.beta) + 1e-12

    def test_penalty_above_lambda_max_gives_zero(self):
        rng = np.random.default_rng(41)
        problem = random_problem(rng)
        lam_max = np.max(np.abs(problem.X.T @ (problem.c * problem.y)))
        big = WeightedLassoProblem(problem.X, problem.y, problem.c,
                                   np.full(10, 1.1 * lam_max))
        sol = fit(big, polish=True)
        assert sol.converged
        assert np.all(sol.beta == 0.0)

    def test_warm_start(self):
        rng = np.random.default_rng(43)
        problem = random_problem(rng)
        cold = fit(problem, tol=1e-10, polish=True)
        warm = fit(problem, tol=1e-10, polish=True, warm_start=cold.beta)
        assert_allclose(warm.beta, cold.beta, atol=1e-10)

    def test_two_atom_penalties(self):
        rng = np.random.default_rng(47)
        X = rng.normal(size=(25, 40)) / np.sqrt(40)
        y = rng.normal(size=25)
        c = rng.poisson(1.0, size=25).astype(float)
        c[0] = max(c[0], 1.0)
        lam_vec = np.where(rng.random(40) < 0.5, 0.002, 0.001)
        problem = WeightedLassoProblem(X, y, c, lam_vec)
        plain = fit(problem, tol=1e-12)
        polished = fit(problem, tol=1e-9, polish=True)
        assert polished.converged
        assert polished.kkt_violation <= 1e-9
        assert objective(problem, polished.beta) \
            <= objective(problem, plain.beta) + 1e-12
