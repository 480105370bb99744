"""Tests for the variable-selection pipelines."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from ampr.data import Dataset, SyntheticSpec, gen_iid
from ampr.moments import PenaltyMixture
from ampr.resampling import ResamplingConfig
from ampr.resampling import run as mc_run
from ampr.selection import (CvResult, RejectionRegion, StabilityPath,
                            bolasso, cross_validate, lambda_grid,
                            normalized_mse, rejection_region,
                            stability_path, tp_fp)
from ampr.wlasso import WeightedLassoProblem, fit


class TestTpFp:
    def test_exact_recovery(self):
        assert tp_fp([1, 3, 5], [1, 3, 5], 10) == (1.0, 0.0)

    def test_empty_selection(self):
        assert tp_fp([], [1, 3], 10) == (0.0, 0.0)

    def test_complement_selection(self):
        S0 = [0, 1]
        S = [2, 3, 4]
        assert tp_fp(S, S0, 5) == (0.0, 1.0)

    def test_undefined_ratios_are_nan(self):
        tp, fp = tp_fp([1], [], 5)
        assert np.isnan(tp) and fp == 0.2
        tp, fp = tp_fp([1], range(5), 5)
        assert tp == 0.2 and np.isnan(fp)

    def test_label_permutation_invariance(self):
        perm = np.random.default_rng(0).permutation(20)
        S, S0 = [2, 5, 7], [5, 7, 11]
        assert tp_fp(perm[S], perm[S0], 20) == tp_fp(S, S0, 20)

    def test_out_of_range_index(self):
        with pytest.raises(ValueError, match="outside"):
            tp_fp([5], [1], 5)


class TestNormalizedMse:
    def test_identical_is_zero(self):
        assert normalized_mse([1.0, 1.0], [1.0, 1.0]) == 0.0

    def test_doubled_is_one(self):
        assert normalized_mse([2.0, 2.0], [1.0, 1.0]) == 1.0

    def test_zero_reference_errors(self):
        with pytest.raises(ValueError, match="zero norm"):
            normalized_mse([1.0], [0.0])

    def test_shape_mismatch_errors(self):
        with pytest.raises(ValueError, match="shape"):
            normalized_mse([1.0, 2.0], [1.0])


class TestLambdaGrid:
    def test_endpoints_and_shape(self):
        ds = gen_iid(SyntheticSpec(N=50, alpha=1.0, rho0=0.2, sigma2=0.1,
                                   seed=0))
        grid = lambda_grid(ds)
        lam_max = float(np.max(np.abs(ds.X.T @ ds.y)))
        assert grid.shape == (50,)
        assert np.all(np.diff(grid) < 0)
        assert_allclose(grid[0], lam_max)
        assert_allclose(grid[-1], lam_max / 1000)

    def test_degenerate_response_errors(self):
        ds = Dataset(X=np.eye(3), y=np.zeros(3))
        with pytest.raises(ValueError, match="zero"):
            lambda_grid(ds)


class TestBolasso:
    def test_strong_alpha_recovers_support(self):
        ds = gen_iid(SyntheticSpec(N=300, alpha=4.0, rho0=0.2, sigma2=0.01,
                                   seed=0))
        rep = bolasso(ds, engine="ampr")
        assert_allclose(rep.lam, 0.5 * np.sqrt(4.0))
        assert rep.tp >= 0.8
        assert rep.fp <= 0.01

    def test_pure_noise_selects_nothing(self):
        ds = gen_iid(SyntheticSpec(N=200, alpha=0.5, rho0=0.001, sigma2=0.5,
                                   seed=2))
        rep = bolasso(ds, lam=1.0, engine="ampr", damping=0.5,
                      max_iters=3000)
        assert rep.support.size == 0
        assert np.isnan(rep.tp) and rep.fp == 0.0

    def test_engines_agree(self):
        ds = gen_iid(SyntheticSpec(N=200, alpha=0.5, rho0=0.2, sigma2=0.01,
                                   seed=1))
        ra = bolasso(ds, engine="ampr", damping=0.5, max_iters=3000)
        rm = bolasso(ds, engine="monte-carlo", n_res=400, base_seed=5)
        assert len(set(ra.support) ^ set(rm.support)) <= 2  # 1% of N
        assert np.max(np.abs(ra.pi - rm.pi)) <= 0.12

    def test_threshold_monotonicity(self):
        ds = gen_iid(SyntheticSpec(N=150, alpha=1.0, rho0=0.2, sigma2=0.01,
                                   seed=3))
        loose = bolasso(ds, threshold=0.9, engine="monte-carlo", n_res=200)
        strict = bolasso(ds, threshold=1.0, engine="monte-carlo", n_res=200)
        assert set(strict.support) <= set(loose.support)

    def test_non_convergence_raises(self):
        ds = gen_iid(SyntheticSpec(N=100, alpha=0.5, rho0=0.2, sigma2=0.01,
                                   seed=4))
        with pytest.raises(RuntimeError, match="converge"):
            bolasso(ds, engine="ampr", max_iters=1)

    def test_validation(self):
        ds = gen_iid(SyntheticSpec(N=20, alpha=1.0, rho0=0.2, seed=0))
        with pytest.raises(ValueError, match="engine"):
            bolasso(ds, engine="glmnet")
        with pytest.raises(ValueError, match="threshold"):
            bolasso(ds, threshold=0.0)


class TestStabilityPath:
    def _instance(self):
        return gen_iid(SyntheticSpec(N=200, alpha=2.0, rho0=0.2,
                                     sigma2=0.01, seed=3))

    def test_null_row_and_band_gap(self):
        ds = self._instance()
        lam_max = float(np.max(np.abs(ds.X.T @ ds.y)))
        grid = np.geomspace(3 * lam_max, lam_max / 300, 20)
        path = stability_path(ds, grid, engine="ampr", damping=0.5,
                              max_iters=3000)
        assert path.converged.all()
        assert np.nanmax(path.pi[0]) <= 0.01
        S0 = ds.truth.support
        null = np.setdiff1d(np.arange(ds.N), S0)
        gaps = [np.percentile(path.pi[j][S0], 10)
                - np.percentile(path.pi[j][null], 90)
                for j in range(grid.size)]
        assert max(gaps) >= 0.15

    def test_monte_carlo_point_reuses_streams(self):
        # Each grid point must reproduce a standalone harness run with
        # the same base seed (common draws across the path).
        ds = gen_iid(SyntheticSpec(N=80, alpha=1.0, rho0=0.2, sigma2=0.01,
                                   seed=6))
        grid = np.array([0.8, 0.4])
        path = stability_path(ds, grid, engine="monte-carlo", n_res=50,
                              base_seed=9)
        for j, lam in enumerate(grid):
            config = ResamplingConfig(
                mix=PenaltyMixture(lam=float(lam), w=0.5, p_w=0.5), tau=0.5)
            mom = mc_run(ds, config, n_res=50, base_seed=9)
            assert np.array_equal(path.pi[j], mom.pi)
            assert np.array_equal(path.beta_bar[j], mom.beta_bar)

    def test_warm_start_matches_cold_fixed_point(self):
        ds = gen_iid(SyntheticSpec(N=100, alpha=1.0, rho0=0.2, sigma2=0.01,
                                   seed=7))
        grid = np.geomspace(1.0, 0.2, 4)
        path = stability_path(ds, grid, engine="ampr", damping=0.5,
                              max_iters=3000, conv_tol=1e-10)
        cold = stability_path(ds, grid[-1:], engine="ampr", damping=0.5,
                              max_iters=3000, conv_tol=1e-10)
        assert path.converged.all() and cold.converged.all()
        assert_allclose(path.pi[-1], cold.pi[0], atol=1e-6)

    def test_failed_points_are_flagged_and_finite_ones_kept(self):
        ds = self._instance()
        grid = np.geomspace(1.0, 0.5, 3)
        path = stability_path(ds, grid, engine="ampr", max_iters=1)
        assert not path.converged.any()
        ok = ~np.isnan(path.pi)
        assert ok.any()
        assert np.all((path.pi[ok] >= 0) & (path.pi[ok] <= 1))

    def test_validation(self):
        ds = self._instance()
        with pytest.raises(ValueError, match="engine"):
            stability_path(ds, [1.0, 0.5], engine="typo")
        with pytest.raises(ValueError, match="decreasing"):
            stability_path(ds, [0.5, 1.0])
        with pytest.raises(ValueError, match="decreasing"):
            stability_path(ds, [1.0, -0.5])


class TestRejectionRegion:
    def _path(self, n_grid=5, N=60, seed=0):
        rng = np.random.default_rng(seed)
        lambdas = np.geomspace(1.0, 0.1, n_grid)
        pi = rng.random((n_grid, N))
        return StabilityPath(lambdas=lambdas, pi=pi,
                             beta_bar=np.zeros((n_grid, N)),
                             w_var=np.zeros((n_grid, N)), engine="ampr",
                             converged=np.ones(n_grid, bool))

    def test_band_brackets_median(self):
        path = self._path()
        mask = np.zeros(60, bool)
        mask[:30] = True
        region = rejection_region(path, mask)
        assert isinstance(region, RejectionRegion)
        assert np.all(region.lo <= region.median)
        assert np.all(region.median <= region.hi)
        assert np.all((region.lo >= 0) & (region.hi <= 1))

    def test_band_widens_with_q(self):
        path = self._path()
        mask = np.ones(60, bool)
        narrow = rejection_region(path, mask, q_lo=25, q_hi=75)
        wide = rejection_region(path, mask, q_lo=10, q_hi=90)
        assert np.all(wide.lo <= narrow.lo)
        assert np.all(narrow.hi <= wide.hi)

    def test_all_noise_medians_stay_inside_band(self):
        path = self._path()
        mask = np.ones(60, bool)
        region = rejection_region(path, mask)
        med = np.median(path.pi, axis=1)
        assert np.all((region.lo <= med) & (med <= region.hi))

    def test_few_noise_columns_warn(self):
        path = self._path()
        mask = np.zeros(60, bool)
        mask[:5] = True
        with pytest.warns(UserWarning, match="5 noise columns"):
            rejection_region(path, mask)

    def test_no_noise_columns_error(self):
        path = self._path()
        with pytest.raises(ValueError, match="no noise columns"):
            rejection_region(path, np.zeros(60, bool))
        with pytest.raises(ValueError, match="q_lo"):
            rejection_region(path, np.ones(60, bool), q_lo=90, q_hi=10)


class TestCrossValidate:
    def test_noiseless_single_signal(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(60, 5))
        ds = Dataset(X=X, y=X[:, 0].copy())
        cv = cross_validate(ds, k=10, seed=0)
        assert isinstance(cv, CvResult)
        sol = fit(WeightedLassoProblem(ds.X, ds.y, np.ones(60),
                                       np.full(5, cv.lam_opt)))
        assert 0 in np.flatnonzero(sol.beta)

    def test_one_standard_error_rule(self):
        ds = gen_iid(SyntheticSpec(N=60, alpha=2.0, rho0=0.2, sigma2=0.2,
                                   seed=5))
        cv = cross_validate(ds, k=5, seed=1)
        assert cv.lam_opt >= cv.lam_min
        cut = cv.mean_error[cv.idx_min] + cv.std_error[cv.idx_min]
        assert cv.mean_error[cv.idx_opt] <= cut
        # Largest penalty within the cut: nothing earlier also qualifies.
        assert np.all(cv.mean_error[:cv.idx_opt] > cut)

    def test_reproducible_and_row_order_invariant(self):
        ds = gen_iid(SyntheticSpec(N=40, alpha=2.0, rho0=0.2, sigma2=0.2,
                                   seed=6))
        grid = lambda_grid(ds, n_points=15)
        a = cross_validate(ds, grid, k=4, seed=2)
        b = cross_validate(ds, grid, k=4, seed=2)
        assert np.array_equal(a.mean_error, b.mean_error)

        perm = np.random.default_rng(0).permutation(ds.M)
        inverse = np.argsort(perm)
        permuted = Dataset(X=ds.X[perm], y=ds.y[perm])
        folds = np.array_split(np.random.default_rng(2).permutation(ds.M), 4)
        c = cross_validate(ds, grid, folds=folds)
        d = cross_validate(permuted, grid,
                           folds=[inverse[f] for f in folds])
        assert_allclose(c.mean_error, d.mean_error, atol=1e-12)
        assert c.lam_opt == d.lam_opt

    def test_validation(self):
        ds = gen_iid(SyntheticSpec(N=20, alpha=1.0, rho0=0.2, sigma2=0.1,
                                   seed=7))
        with pytest.raises(ValueError, match="k <= M"):
            cross_validate(ds, k=21)
        with pytest.raises(ValueError, match="k"):
            cross_validate(ds, k=1)
        with pytest.raises(ValueError, match="two folds"):
            cross_validate(ds, folds=[np.arange(ds.M)])
