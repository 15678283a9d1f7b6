import math

import numpy as np
import pytest
from scipy import stats

import cases
from bassbridge import (ConvexOrderViolation, DiscreteMeasure, Grid1D, HeatPropagator, MonotoneMap,
                        NotConverged, SolverConfig, TimeGrid, density_from_spec, mpms_step,
                        pushforward, solve, w_inf_distance)
from bassbridge.grid_measures import probability_grid
from bassbridge.mpms_cdf import IterationTrace, dual_value, model_mu0_cdf, mse_error

GRID = Grid1D(-6, 6, 1200)


def trivial_pair(grid=GRID):
    return cases.measures(cases.gaussian(0.5), cases.gaussian(1.5), grid)


def uniform(grid, a, b):
    x = grid.points
    return DiscreteMeasure(grid, ((x >= a - 1e-12) & (x <= b + 1e-12)).astype(float))


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig(GRID)
        assert cfg.n_quantiles == GRID.n
        assert cfg.timegrid.M == 50 and cfg.sigma_bar == 1.0

    @pytest.mark.parametrize("kw", [{"tol": 0.0}, {"max_iter": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(GRID, **kw)


class TestStep:
    def test_trivial_fixed_point(self):
        mu0, mu1 = trivial_pair()
        new, F1, _ = mpms_step(mu0, mu0, mu1, SolverConfig(GRID).propagator())
        inner = np.abs(GRID.points) <= 3
        assert np.max(np.abs(F1.values - GRID.points)[inner]) <= 2 * GRID.dx
        assert w_inf_distance(DiscreteMeasure.from_cdf(GRID, new), mu0, trim=1e-2) <= 2 * GRID.dx

    def test_outputs_valid(self):
        mu0, mu1 = cases.wg_pair()
        new, F1, F0 = mpms_step(mu0.cdf, mu0, mu1, SolverConfig(mu0.grid).propagator())
        assert np.all(np.diff(new) >= 0) and new[0] >= 0 and new[-1] <= 1
        assert F1.min_gap() >= 0 and F0.min_gap() >= 0


class TestMseError:
    def test_identical(self):
        m = density_from_spec(cases.WG1, GRID)
        assert mse_error(m, m) == 0.0

    def test_uniform_shift(self):
        c = 0.3
        assert mse_error(uniform(GRID, 0, 1), uniform(GRID, c, 1 + c)) == pytest.approx(c * c, rel=1e-5)

    def test_gaussian_scaling(self):
        a = density_from_spec(cases.gaussian(1.0), GRID)
        b = density_from_spec(cases.gaussian(1.21), GRID)
        # Levels 0 and 1 map to the grid ends for both measures.
        u = probability_grid(GRID.n)[1:-1]
        oracle = np.sum((0.1 * stats.norm.ppf(u)) ** 2) / GRID.n
        assert mse_error(a, b) == pytest.approx(oracle, rel=1e-3)

    def test_needs_two_levels(self):
        m = density_from_spec(cases.WG1, GRID)
        with pytest.raises(ValueError):
            mse_error(m, m, K=1)


class TestDual:
    def test_trivial_pair(self):
        mu0, mu1 = trivial_pair()
        p = SolverConfig(GRID).propagator()
        assert dual_value(MonotoneMap.identity(GRID), mu0, mu1, p) == pytest.approx(1.0, abs=5e-3)

    def test_anchor_invariance(self):
        sol = cases.wg_solution()
        p = sol.propagator()
        base = dual_value(sol.F1, sol.mu0, sol.mu1, p)
        for c in (-2.0, 0.5, 7.0):
            assert dual_value(sol.F1, sol.mu0, sol.mu1, p, anchor=c) == pytest.approx(base, abs=1e-10)

    def test_linear_solution(self):
        g = Grid1D(-10, 10, 2000)
        mu0, mu1 = cases.measures(cases.gaussian(1.0), cases.gaussian(4.0), g)
        F1 = MonotoneMap(g, np.clip(math.sqrt(3) * g.points, -10, 10))
        p = HeatPropagator(g, TimeGrid(1.0, 50))
        assert dual_value(F1, mu0, mu1, p) == pytest.approx(math.sqrt(3), abs=5e-3)


class TestSolve:
    def test_trivial_pair_is_fast(self):
        mu0, mu1 = trivial_pair()
        sol = solve(mu0, mu1, SolverConfig(GRID, tol=1e-8))
        assert sol.converged and sol.iterations <= 3
        assert sol.trace.mse_error[-1] <= 1e-8

    def test_first_step_reduces_error(self):
        tr = cases.wg_solution().trace
        assert tr.mse_error[1] < tr.mse_error[0]

    def test_trace_shape(self):
        sol = cases.wg_solution()
        tr = sol.trace
        assert len(tr.mse_error) == len(tr.dual_value) == len(tr.w_inf_step) == sol.iterations
        assert np.all(np.isfinite(tr.mse_error + tr.dual_value + tr.w_inf_step))
        rows = list(tr.rows())
        assert rows[0][0] == 1 and len(rows) == len(tr)

    def test_reproduces_mu1(self):
        sol = cases.wg_solution()
        p = sol.propagator("cdf")
        alpha1 = DiscreteMeasure.from_cdf(sol.grid, np.clip(p.flow(sol.alpha0_cdf), 0, 1))
        out = pushforward(alpha1, sol.F1)
        assert w_inf_distance(out, sol.mu1) <= 5 * sol.grid.dx

    def test_model_mu0(self):
        sol = cases.wg_solution()
        np.testing.assert_allclose(model_mu0_cdf(sol), sol.mu0.cdf, atol=1e-4)

    def test_convex_order_violation(self):
        mu0, mu1 = trivial_pair()
        with pytest.raises(ConvexOrderViolation) as info:
            solve(mu1, mu0, SolverConfig(GRID))
        assert not info.value.report.strict

    def test_not_converged_carries_best(self):
        mu0, mu1 = cases.wg_pair()
        with pytest.raises(NotConverged) as info:
            solve(mu0, mu1, SolverConfig(mu0.grid, max_iter=2))
        best = info.value.best
        assert best.iterations == 2 and not best.converged
        assert isinstance(best.trace, IterationTrace)

    def test_grid_mismatch(self):
        mu0, mu1 = trivial_pair()
        with pytest.raises(ValueError):
            solve(mu0, mu1, SolverConfig(Grid1D(-6, 6, 1000)))

    def test_dual_tracking_off(self):
        mu0, mu1 = trivial_pair()
        sol = solve(mu0, mu1, SolverConfig(GRID, tol=1e-8, track_dual=False))
        assert all(math.isnan(d) for d in sol.trace.dual_value)
