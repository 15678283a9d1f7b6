import math

import numpy as np
import pytest

import cases
from bassbridge import (DegenerateRatio, DensitySolverConfig, DiscreteMeasure, Grid1D,
                        MonotoneMap, density_from_spec, solve_density, w_inf_distance)
from bassbridge.mpms_density import update_alpha0_density, update_f1_density

X = Grid1D(-5, 5, 1250)
MARGINAL_GRID = Grid1D(-10, 10, 2500)
ROOT3 = math.sqrt(3.0)


def gaussian_pair():
    return cases.measures(cases.gaussian(1.0), cases.gaussian(4.0), MARGINAL_GRID)


def gaussian_config(**kw):
    # y = sqrt(3) x makes the identity start the linear solution F1(x) = sqrt(3) x.
    return DensitySolverConfig(X, rescale_m=1 / ROOT3, **kw)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"clip_C": 1.0}, {"zero_eps": 1e-3}, {"zero_eps": -1.0},
                                    {"rescale_m": 0.0}, {"tol": 0.0}, {"max_iter": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            DensitySolverConfig(X, **kw)

    def test_mapping(self):
        cfg = DensitySolverConfig.mapping(Grid1D(-3.9, 4.1, 1000), Grid1D(0.25, 10, 1000))
        y = cfg.rescaled()
        assert y[0] == pytest.approx(0.25) and y[-1] == pytest.approx(10.0)

    def test_default_eps(self):
        mu1 = density_from_spec(cases.gaussian(1.0), X)
        assert DensitySolverConfig(X).eps_for(mu1) == pytest.approx(1e-12 * mu1.density.max())


class TestAlphaUpdate:
    def test_identity_map(self):
        mu0 = density_from_spec(cases.gaussian(0.5), X)
        cfg = DensitySolverConfig(X)
        alpha = update_alpha0_density(MonotoneMap.identity(X), np.ones(X.n), mu0, cfg)
        np.testing.assert_allclose(alpha.density, mu0.density, atol=1e-9)

    def test_linear_solution(self):
        mu0, _ = gaussian_pair()
        cfg = gaussian_config()
        alpha = update_alpha0_density(MonotoneMap(X, cfg.rescaled()), np.ones(X.n), mu0, cfg)
        ref = density_from_spec(cases.gaussian(1 / 3), X)
        assert w_inf_distance(alpha, ref) <= 2e-2

    def test_normalised(self):
        mu0 = density_from_spec(cases.WG0, X)
        rng = np.random.default_rng(2)
        alpha = update_alpha0_density(MonotoneMap.identity(X), rng.uniform(0.5, 1.5, X.n), mu0,
                                      DensitySolverConfig(X))
        assert abs(X.integrate(alpha.density) - 1.0) <= 1e-9

    def test_negative_f1(self):
        mu0 = density_from_spec(cases.WG0, X)
        with pytest.raises(ValueError):
            update_alpha0_density(MonotoneMap.identity(X), -np.ones(X.n), mu0, DensitySolverConfig(X))


class TestF1Update:
    def test_fixed_point(self):
        mu0, mu1 = gaussian_pair()
        cfg = gaussian_config()
        F1 = MonotoneMap(X, cfg.rescaled())
        alpha = update_alpha0_density(F1, np.ones(X.n), mu0, cfg)
        f, F = update_f1_density(alpha, F1, mu1, cfg)
        inner = np.abs(X.points) <= 3
        np.testing.assert_allclose(f[inner], 1.0, atol=1e-4)
        np.testing.assert_allclose(F.values[inner], F1.values[inner], atol=1e-4)

    def test_clip(self):
        a = density_from_spec(cases.gaussian(0.5), X)
        wide = density_from_spec(cases.gaussian(0.2), X)
        cfg = DensitySolverConfig(X, clip_C=1.5)
        f, F = update_f1_density(a, MonotoneMap.identity(X), wide, cfg, check_degenerate=False)
        assert f.max() == 1.5 and f.min() >= 0.0
        assert F.min_gap() >= 0.0

    def test_zero_rule(self):
        g = Grid1D(-8, 8, 1600)
        a = density_from_spec(cases.gaussian(0.05), g)
        mu1 = density_from_spec(cases.gaussian(1.05), g)
        cfg = DensitySolverConfig(g, zero_eps=1e-8)
        f, _ = update_f1_density(a, MonotoneMap.identity(g), mu1, cfg)
        assert np.all(f[np.abs(g.points) >= 6.5] == 0.0)
        np.testing.assert_allclose(f[np.abs(g.points) <= 3], 1.0, atol=1e-3)

    def test_degenerate(self):
        narrow = density_from_spec(cases.gaussian(0.05, 3.0), X)
        a = density_from_spec(cases.gaussian(1.0), X)
        with pytest.raises(DegenerateRatio):
            update_f1_density(a, MonotoneMap.identity(X), narrow, DensitySolverConfig(X, zero_eps=1e-6))


class TestSolve:
    def test_gaussian_slope(self):
        mu0, mu1 = gaussian_pair()
        sol = solve_density(mu0, mu1, gaussian_config(tol=1e-6))
        assert sol.converged and sol.method == "density"
        inner = np.abs(X.points) <= 1.5
        np.testing.assert_allclose(sol.F1.derivative()[inner], ROOT3, atol=2e-2)
        assert sol.alpha0.variance() == pytest.approx(1 / 3, abs=5e-3)

    def test_invariants_along_iterations(self):
        mu0, mu1 = cases.wg_pair()
        cfg = DensitySolverConfig(mu0.grid, clip_C=1.5)
        F1 = MonotoneMap.identity(mu0.grid)
        f1 = np.ones(mu0.grid.n)
        for n in range(10):
            alpha = update_alpha0_density(F1, f1, mu0, cfg)
            f1, F1 = update_f1_density(alpha, F1, mu1, cfg, check_degenerate=n == 0)
            assert np.all((f1 >= 0) & (f1 <= 1.5))
            assert F1.min_gap() >= 0.0

    def test_order_check_needs_shared_grid(self):
        mu0, mu1 = gaussian_pair()
        with pytest.raises(ValueError):
            solve_density(density_from_spec(cases.gaussian(1.0), X), mu1, gaussian_config())
