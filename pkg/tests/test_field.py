import math

import numpy as np
import pytest
from scipy import stats

from pinned_string.analytic import DomainError, ModelParams, fbm_gram
from pinned_string.field import (
    build_spectral_grid,
    circulant_eigenvalues,
    conditional_cross_covariance,
    exact_fbm,
    exact_fbm_paths,
    forward_backward_paths,
    forward_backward_split,
    init_stationary,
    read_path_csv,
    sample_paths,
    sample_pinned_path,
    sample_pinned_paths,
    step,
    write_path_csv,
)
from pinned_string.quadrature import pinned_variance

WHITE = ModelParams(alpha=0.0, spatial_dim=1, white_noise=True)


class TestGrid:
    def test_reproduces_pinned_variance(self, grid, colored):
        assert grid.relative_error(colored, (1.0,)) < 1e-3
        assert abs(grid.variance(1.0) - math.sqrt(math.pi)) / math.sqrt(math.pi) < 1e-3

    def test_error_monotone_in_modes(self, colored):
        errs = [build_spectral_grid(colored, m).relative_error(colored, (1.0,)) for m in (16, 64, 256, 1024, 4096)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert errs[0] > 1e-2  # the coarse grid reports a visible deviation

    def test_white_noise(self):
        g = build_spectral_grid(WHITE)
        assert abs(g.variance(1.0) - 1 / math.sqrt(math.pi)) * math.sqrt(math.pi) < 1e-3

    def test_window(self, grid, colored):
        assert grid.relative_error(colored, (1 / 64, 1 / 8, 1.0, 2.0, 6.0)) < 1e-3

    def test_errors(self, colored):
        with pytest.raises(DomainError):
            build_spectral_grid(colored, mode_count=8)
        with pytest.raises(DomainError):
            build_spectral_grid(colored, lambda_min=1.0, lambda_max=0.5)
        with pytest.raises(DomainError):
            build_spectral_grid(ModelParams(alpha=0.0, spatial_dim=2))

    def test_positive(self, grid):
        assert np.all(grid.rates > 0) and np.all(grid.weights > 0) and grid.zero_mode_rate > 0


class TestState:
    def test_deterministic(self, grid, colored):
        a = init_stationary(grid, colored, 11)
        b = init_stationary(grid, colored, 11)
        assert np.array_equal(a.modes, b.modes)
        assert np.all(a.zero_mode == 0)

    def test_stationary_mode_variance(self, colored):
        g = build_spectral_grid(colored, 16)
        draws = np.stack([init_stationary(g, colored, 5, r).modes[0] for r in range(20000)])
        target = g.stationary_sd**2
        var = (draws**2).mean(0)
        se = (draws**2).std(0, ddof=1) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(var - target) < 3.5 * se)

    def test_copies_uncorrelated(self, colored):
        p = ModelParams(alpha=1.0, spatial_dim=2, value_dim=2)
        g = build_spectral_grid(p, 16)
        x = np.stack([init_stationary(g, p, 5, r).modes[:, 3] for r in range(20000)])
        prod = x[:, 0] * x[:, 1]
        assert abs(prod.mean()) < 3 * prod.std() / math.sqrt(prod.size)

    def test_noiseless_relaxation(self, grid, colored):
        s = init_stationary(grid, colored, 1)
        before = s.modes.copy()
        step(s, 0.3, noiseless=True)
        np.testing.assert_allclose(s.modes, before * np.exp(-grid.rates * 0.3), rtol=1e-15, atol=0)

    def test_step_keeps_stationarity_and_autocorrelation(self, colored):
        g = build_spectral_grid(colored, 16)
        dt = 0.7
        a, b = [], []
        for r in range(20000):
            s = init_stationary(g, colored, 2, r)
            a.append(s.modes[0].copy())
            step(s, dt / 2)
            step(s, dt / 2)
            b.append(s.modes[0].copy())
        a, b = np.array(a), np.array(b)
        target = g.stationary_sd**2
        se = (b**2).std(0, ddof=1) / math.sqrt(len(b))
        assert np.all(np.abs((b**2).mean(0) - target) < 3.5 * se)
        prod = a * b
        se_c = prod.std(0, ddof=1) / math.sqrt(len(b))
        assert np.all(np.abs(prod.mean(0) - target * np.exp(-g.rates * dt)) < 3.5 * se_c)

    def test_step_rejects_nonpositive(self, grid, colored):
        with pytest.raises(ValueError):
            step(init_stationary(grid, colored, 0), 0.0)


class TestPinnedPaths:
    def test_starts_at_zero_and_replica_access(self, grid, colored):
        t = np.linspace(0, 2, 9)
        X = sample_pinned_paths(grid, colored, t, 3, 130)
        assert np.all(X[:, 0] == 0)
        one = sample_pinned_path(grid, colored, t, 3, replica=129)
        np.testing.assert_array_equal(one.values, X[129])

    def test_worker_invariance(self, grid, colored):
        t = np.linspace(0, 1, 5)
        a = sample_pinned_paths(grid, colored, t, 9, 300, workers=1)
        b = sample_pinned_paths(grid, colored, t, 9, 300, workers=8)
        assert np.array_equal(a, b)

    def test_unit_variance_and_slope(self, grid, colored):
        t = np.array([0, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0])
        X = sample_pinned_paths(grid, colored, t, 4, 10000)[:, :, 0]
        x2 = X[:, -1] ** 2
        assert abs(x2.mean() - 1) < 3 * x2.std(ddof=1) / math.sqrt(x2.size)
        slope = np.polyfit(np.log(t[1:]), np.log((X[:, 1:] ** 2).mean(0)), 1)[0]
        assert slope == pytest.approx(2 * colored.hurst, abs=0.04)

    def test_bad_times(self, grid, colored):
        with pytest.raises(ValueError):
            sample_pinned_paths(grid, colored, [0.1, 0.2], 0, 2)
        with pytest.raises(ValueError):
            sample_pinned_paths(grid, colored, [0.0, 0.5, 0.5], 0, 2)

    def test_white_noise_path_variance(self):
        g = build_spectral_grid(WHITE)
        X = sample_pinned_paths(g, WHITE, [0.0, 1.0, 2.0], 1, 8000)[:, :, 0]
        v = (X[:, 2] ** 2).mean()
        se = (X[:, 2] ** 2).std(ddof=1) / math.sqrt(len(X))
        assert abs(v - 2**0.5) < 3.5 * se


class TestForwardBackward:
    def test_split_structure(self, grid, colored):
        pair = forward_backward_split(grid, colored, [0.0, 0.5, 1.0], 3)
        assert pair.y_path.values[0, 0] == 0 and pair.z_path.values[0, 0] == 0
        assert pair.conditioning_state.time == 1.0

    @pytest.mark.parametrize("mode", ["reversed", "recorded"])
    def test_marginals_are_pinned_paths(self, grid, colored, mode):
        fb = forward_backward_paths(grid, colored, [0.0, 0.5], 6, 10000, backward=mode)
        ref = sample_pinned_paths(grid, colored, [0.0, 0.5], 7, 10000)[:, 1, 0]
        assert stats.ks_2samp(fb.y[:, 1, 0], ref).pvalue > 0.01
        assert stats.ks_2samp(fb.z[:, 1, 0], ref).pvalue > 0.01

    def test_exact_conditional_covariance(self, grid):
        lags = [0.25, 0.5, 0.75, 1.0]
        cond, uncond = conditional_cross_covariance(grid, lags, lags, K=math.pi**-0.25)
        assert np.abs(cond).max() < 1e-10
        # Y_1 and Z_1 are the increments X_2 - X_1 and X_0 - X_1
        assert uncond[3, 3] == pytest.approx(0.5 * (2 - 2**0.5), rel=2e-3)


class TestExactFbm:
    def test_brownian_increments(self):
        t = np.linspace(0, 1, 65)
        X = exact_fbm_paths(0.5, t, 1, 0, 200)
        inc = (np.diff(X[:, :, 0], axis=1) / math.sqrt(t[1])).ravel()
        assert stats.kstest(inc, "norm").pvalue > 0.01

    @pytest.mark.parametrize("method", ["davies_harte", "cholesky"])
    def test_gram(self, method):
        t = np.arange(9) / 8.0
        X = exact_fbm_paths(0.25, t, 1, 1, 10000, method)[:, 1:, 0]
        prod = X[:, :, None] * X[:, None, :]
        se = prod.std(0, ddof=1) / math.sqrt(len(X))
        assert np.all(np.abs(prod.mean(0) - fbm_gram(t[1:], 0.25)) < 5 * se)

    def test_self_similarity(self):
        X = exact_fbm_paths(0.3, np.linspace(0, 2, 17), 1, 2, 10000)
        half = 5000
        assert stats.ks_2samp(X[:half, 16, 0] / 2**0.3, X[half:, 8, 0]).pvalue > 0.01

    def test_single_path_matches_batch(self):
        t = np.linspace(0, 1, 33)
        X = exact_fbm_paths(0.4, t, 2, 5, 140)
        one = exact_fbm(0.4, t, 2, 5, replica=139)
        np.testing.assert_array_equal(one.values, X[139])

    def test_nonuniform_grid_needs_cholesky(self):
        t = np.array([0.0, 0.1, 0.5, 1.0])
        with pytest.raises(ValueError, match="cholesky"):
            exact_fbm(0.3, t, 1, 0)
        assert exact_fbm(0.3, t, 1, 0, method="cholesky").values.shape == (4, 1)

    def test_eigenvalue_failure_message(self):
        with pytest.raises(ValueError, match="cholesky"):
            circulant_eigenvalues(0.3, 16, tol=-1.0)

    def test_hurst_range(self):
        with pytest.raises(DomainError):
            exact_fbm(0.7, [0.0, 1.0], 1, 0)

    def test_dispatch(self, colored):
        with pytest.raises(ValueError):
            sample_paths(colored, [0.0, 1.0], 0, 2, engine="euler")


def test_path_csv_roundtrip(tmp_path, grid, colored):
    s = sample_pinned_path(grid, colored, np.linspace(0, 1, 5), 3)
    f = write_path_csv(s, tmp_path / "p.csv")
    back = read_path_csv(f)
    np.testing.assert_array_equal(back.values, s.values)
    assert back.engine == "spectral_pinned" and back.seed == 3
    assert f.read_text().splitlines()[0] == "t,x1"
