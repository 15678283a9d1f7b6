"""Marginal pairs and cached solves shared by the test modules."""
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from bassbridge import (DiscreteMeasure, Grid1D, LogNormal, NormalMixture, SolverConfig,
                        TimeGrid, density_from_spec, mean_match, solve)

WG0 = NormalMixture((1.0,), (0.0,), (0.5,))
WG1 = NormalMixture((0.25, 0.5, 0.25), (-1.0, 0.0, 1.0), (0.25, 0.5, 0.25))

R, S0, S1 = 0.05, 0.2, 0.4
LN0 = LogNormal(R - 0.5 * S0**2, S0)
LN1 = LogNormal(2 * R - S1**2, S1)


def measures(spec0, spec1, grid, max_truncation=1e-4):
    return (density_from_spec(spec0, grid, max_truncation),
            density_from_spec(spec1, grid, max_truncation))


def gaussian(var, mean=0.0):
    return NormalMixture((1.0,), (mean,), (var,))


def wg_pair(grid=None):
    return measures(WG0, WG1, Grid1D(-4, 4, 1000) if grid is None else grid)


def lognormal_pair(grid=None):
    return measures(LN0, LN1, Grid1D(0.25, 7, 1000) if grid is None else grid, 1e-3)


def random_specs(seed):
    """Mixture pair in convex order: each component gains independent Gaussian noise."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    w = rng.dirichlet(2.0 * np.ones(k))
    m = rng.uniform(-1, 1, k)
    v = rng.uniform(0.1, 0.5, k)
    d = rng.uniform(0.2, 1.0, k)
    w = tuple(w / w.sum())
    return NormalMixture(w, tuple(m), tuple(v)), NormalMixture(w, tuple(m), tuple(v + d))


RANDOM_GRID = Grid1D(-8, 8, 1600)
RANDOM_SEEDS = range(10)


@lru_cache(maxsize=None)
def wg_solution(L=4.0, n=1000, M=50, tol=1e-10):
    g = Grid1D(-L, L, n)
    mu0, mu1 = wg_pair(g)
    return solve(mu0, mu1, SolverConfig(g, TimeGrid(1.0, M), tol=tol))


@lru_cache(maxsize=None)
def lognormal_solution():
    mu0, mu1 = lognormal_pair()
    return solve(mu0, mu1, SolverConfig(mu0.grid, tol=1e-8), check_order=False)


@lru_cache(maxsize=None)
def matched_lognormal_solution():
    g = Grid1D(-4, 9, 2000)
    mu0, mu1 = mean_match(*lognormal_pair(g))
    return solve(mu0, mu1, SolverConfig(g, tol=1e-8, max_iter=300))


@lru_cache(maxsize=None)
def gaussian_solution():
    g = Grid1D(-10, 10, 2000)
    mu0, mu1 = measures(gaussian(1.0), gaussian(4.0), g)
    return solve(mu0, mu1, SolverConfig(g, TimeGrid(1.0, 200), tol=1e-9))


@lru_cache(maxsize=None)
def random_solution(seed):
    mu0, mu1 = measures(*random_specs(seed), RANDOM_GRID)
    return solve(mu0, mu1, SolverConfig(RANDOM_GRID, tol=1e-9, max_iter=300))


def bs_call(K, total_vol, forward=1.0):
    """Undiscounted Black-Scholes call on a lognormal with the given mean."""
    K = np.asarray(K, dtype=float)
    s = total_vol
    d1 = (np.log(forward / K) + 0.5 * s * s) / s
    return forward * ndtr(d1) - K * ndtr(d1 - s)


def bs_lognormal(total_vol, forward=1.0):
    return LogNormal(np.log(forward) - 0.5 * total_vol**2, total_vol)


def chain_text(strikes, prices):
    rows = ["strike,price"] + ["%.17g,%.17g" % (k, c) for k, c in zip(strikes, prices)]
    return "\n".join(rows) + "\n"


CAL_GRID = Grid1D(-2.5, 4.5, 1400)
CAL_STRIKES = np.linspace(0.25, 3.75, 60)
CAL_VOLS = (0.2, 0.3)
CAL_T = 0.25


def l1(grid, a, b):
    a = a.density if isinstance(a, DiscreteMeasure) else a
    b = b.density if isinstance(b, DiscreteMeasure) else b
    return grid.integrate(np.abs(np.asarray(a) - np.asarray(b)))
