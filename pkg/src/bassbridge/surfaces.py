"""Martingale interpolation, local volatility and diagnostics of a fitted pair."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_measures import (DiscreteMeasure, Grid1D, TimeGrid, call_prices, pushforward)
from .heat_kernel import HeatPropagator
from .mpms_cdf import BassSolution
from .transport1d import MonotoneMap


@dataclass(frozen=True)
class InterpolationSurface:
    """Slices ``mu_t = F_t # alpha_t`` at every ``t_k`` of the time grid."""

    timegrid: TimeGrid
    alpha: tuple
    maps: tuple
    mu: tuple

    @property
    def times(self) -> np.ndarray:
        return self.timegrid.times

    def __len__(self):
        return len(self.mu)


@dataclass(frozen=True)
class LocalVolSurface:
    """``sigma[k, i]`` at ``(t_k, x_i)``; NaN outside the range of ``F_{t_k}``."""

    timegrid: TimeGrid
    x: np.ndarray
    sigma: np.ndarray

    def defined(self) -> np.ndarray:
        return np.isfinite(self.sigma)


@dataclass(frozen=True)
class MartingaleReport:
    mean_drift: float
    min_call_gap: float
    argmin_time: float
    argmin_strike: float

    def passes(self, mean_tol: float = 5e-3, gap_tol: float = 1e-4) -> bool:
        return self.mean_drift <= mean_tol and self.min_call_gap >= -gap_tol


def _propagator(sol: BassSolution, p: HeatPropagator | None) -> HeatPropagator:
    return sol.propagator() if p is None else p


def map_slices(sol: BassSolution, p: HeatPropagator | None = None) -> np.ndarray:
    """Rows ``F_{t_k}``, the backward heat flow of ``F1`` with its own end values pinned."""
    p = _propagator(sol, p)
    F1 = sol.F1.values
    rows = p.with_kind("map", (F1[0], F1[-1])).propagate_backward(F1)
    # Implicit steps preserve order up to rounding in flat tails.
    return np.maximum.accumulate(rows, axis=1)


def alpha_slices(sol: BassSolution, p: HeatPropagator | None = None) -> np.ndarray:
    """Rows ``G_{alpha_{t_k}}``, the forward heat flow of ``alpha0``'s CDF."""
    p = _propagator(sol, p)
    rows = p.with_kind("cdf").propagate_forward(sol.alpha0.cdf)
    return np.clip(rows, 0.0, 1.0)


def build_interpolation(sol: BassSolution, p: HeatPropagator | None = None,
                        grid: Grid1D | None = None) -> InterpolationSurface:
    """Flow ``alpha0`` forward and ``F1`` backward, then push each pair forward.

    ``grid`` is where the slices ``mu_t`` are sampled (default: ``mu1``'s grid).
    """
    p = _propagator(sol, p)
    target = sol.mu1.grid if grid is None else grid
    G = alpha_slices(sol, p)
    F = map_slices(sol, p)
    alphas, maps, mus = [], [], []
    for g_row, f_row in zip(G, F):
        a = DiscreteMeasure.from_cdf(sol.grid, g_row)
        h = MonotoneMap(sol.grid, f_row)
        alphas.append(a)
        maps.append(h)
        mus.append(pushforward(a, h, target))
    return InterpolationSurface(p.timegrid, tuple(alphas), tuple(maps), tuple(mus))


def local_vol(sol: BassSolution, p: HeatPropagator | None = None,
              grid: Grid1D | None = None) -> LocalVolSurface:
    """``sigma(t, x) = F_t'(F_t^{-1}(x))`` on the range of each ``F_t``.

    Points outside the range, or where ``F_t`` is flat, are NaN.
    """
    p = _propagator(sol, p)
    target = sol.mu1.grid if grid is None else grid
    x = target.points
    F = map_slices(sol, p)
    sigma = np.full((F.shape[0], x.size), np.nan)
    for k, row in enumerate(F):
        h = MonotoneMap(sol.grid, row)
        inside = (x >= row[0]) & (x <= row[-1])
        s = np.interp(h.inverse(x[inside]), sol.grid.points, h.derivative())
        s[s <= 0] = np.nan
        sigma[k, inside] = s
    return LocalVolSurface(p.timegrid, x, sigma)


def martingale_diagnostics(surf: InterpolationSurface, support_eps: float = 1e-4) -> MartingaleReport:
    """Mean drift from ``t_0`` and the worst call-price decrease over ``t < s``.

    Strikes are grid points interior to the support of the last slice.
    """
    means = np.array([m.mean() for m in surf.mu])
    drift = float(np.max(np.abs(means - means[0])))
    if len(surf.mu) < 2:
        return MartingaleReport(drift, 0.0, float(surf.times[0]), float("nan"))
    last = surf.mu[-1]
    inner = (last.cdf > support_eps) & (last.cdf < 1.0 - support_eps)
    inner[0] = inner[-1] = False
    C = np.array([call_prices(m) for m in surf.mu])[:, inner]
    # min over t < s of C_s - C_t is C_s minus the running max before s.
    before = np.maximum.accumulate(C, axis=0)[:-1]
    gaps = C[1:] - before
    k, j = np.unravel_index(np.argmin(gaps), gaps.shape)
    strikes = last.points[inner]
    return MartingaleReport(drift, float(gaps[k, j]), float(surf.times[k + 1]), float(strikes[j]))


def second_moment_check(surf: InterpolationSurface, lv: LocalVolSurface):
    """``(E[X_t^2] - E[X_0^2], int_0^t int sigma^2 dmu_s ds)`` per time slice."""
    m2 = np.array([m.moment(2) for m in surf.mu])
    s2 = np.nan_to_num(lv.sigma**2)
    rate = np.array([m.grid.integrate(s2[k] * m.density) for k, m in enumerate(surf.mu)])
    dt = surf.timegrid.dt
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (rate[1:] + rate[:-1]))])
    return m2 - m2[0], cum


def extend_map(sol: BassSolution, t_min: float, steps: int | None = None,
               p: HeatPropagator | None = None):
    """Heat extension ``F(t) = R_{-t} * F(0)`` for ``t`` in ``[t_min, 0]``.

    Returns ``(times, rows)`` with times ascending. ``alpha`` is not
    extended, so no marginals are defined there.
    """
    if not t_min < 0:
        raise ValueError("t_min must be negative")
    p = _propagator(sol, p)
    n = steps if steps is not None else max(1, int(round(-t_min / p.timegrid.T * max(p.timegrid.M, 1))))
    F0 = map_slices(sol, p)[0]
    ext = HeatPropagator(sol.grid, TimeGrid(-t_min, n), p.sigma_bar, "map", (F0[0], F0[-1]))
    rows = np.maximum.accumulate(ext.propagate_forward(F0), axis=1)[::-1]
    times = -ext.timegrid.times[::-1]
    return times, rows
