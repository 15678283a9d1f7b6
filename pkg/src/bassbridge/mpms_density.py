"""Density form of the Bass fixed point with an approximate transport step.

Both transport relations are handled through the change-of-variables identity
``nu_2(y) = nu_1(h(y)) h'(y)``: ``alpha_0`` is read off from ``F_0 = F_1 * R``
and ``mu_0``, and ``F_1`` is rebuilt by integrating the ratio
``(alpha_0 * R) / mu_1(F_1)``.

Convolutions run on a Brownian grid ``x``. The rescaling
``y = (x - c) / m`` places that grid over the support of ``mu_1``; ``F_1`` takes
values in the marginals' units and its derivative is measured against ``y``,
so ``F_1 = y`` and ``f_1 = 1`` is the identity start.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRatio, NotConverged
from .grid_measures import (DiscreteMeasure, Grid1D, TimeGrid, cumulative_trapezoid,
                            probability_grid, quantile_from_cdf, w_inf_distance)
from .heat_kernel import gauss_convolve
from .mpms_cdf import BassSolution, IterationTrace, _require_order, quantile_mse
from .transport1d import MonotoneMap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DensitySolverConfig:
    """Settings for :func:`solve_density`.

    Parameters
    ----------
    grid
        Brownian grid the convolutions run on.
    rescale_m, rescale_c
        Affine map ``y = (x - c) / m`` from the Brownian grid to marginal units.
    clip_C
        Upper bound on ``f_1``; must exceed 1 so the identity start is admissible.
    zero_eps
        Values of both sides of the ratio below this are treated as zero.
        ``None`` means ``1e-12 * max(mu_1)``.
    """

    grid: Grid1D
    timegrid: TimeGrid = TimeGrid(1.0, 50)
    sigma_bar: float = 1.0
    tol: float = 1e-5
    max_iter: int = 200
    quantile_points: int | None = None
    rescale_m: float = 1.0
    rescale_c: float = 0.0
    clip_C: float = 1.5
    zero_eps: float | None = None
    degenerate_fraction: float = 0.05

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.rescale_m > 0:
            raise ValueError("rescale_m must be positive")
        if not self.clip_C > 1:
            raise ValueError("clip_C must exceed 1")
        if self.zero_eps is not None and not 0 <= self.zero_eps < 1e-3:
            raise ValueError("zero_eps must lie in [0, 1e-3)")

    @classmethod
    def mapping(cls, grid: Grid1D, target: Grid1D, **kw) -> "DensitySolverConfig":
        """Config whose rescaling sends ``grid`` onto ``target``'s interval."""
        m = grid.width / target.width
        c = grid.z_min - m * target.z_min
        return cls(grid=grid, rescale_m=m, rescale_c=c, **kw)

    @property
    def horizon(self) -> float:
        return self.sigma_bar**2 * self.timegrid.T

    @property
    def n_quantiles(self) -> int:
        return self.grid.n if self.quantile_points is None else self.quantile_points

    def rescaled(self) -> np.ndarray:
        return (self.grid.points - self.rescale_c) / self.rescale_m

    def eps_for(self, mu1: DiscreteMeasure) -> float:
        if self.zero_eps is not None:
            return self.zero_eps
        return 1e-12 * float(np.max(mu1.density))


def _density_at(m: DiscreteMeasure, z) -> np.ndarray:
    return np.interp(z, m.points, m.density, left=0.0, right=0.0)


def _flow_map(F1: MonotoneMap, cfg: DensitySolverConfig) -> np.ndarray:
    return gauss_convolve(F1.values, cfg.horizon, cfg.grid, tail="linear")


def update_alpha0_density(F1: MonotoneMap, f1, mu0: DiscreteMeasure,
                          cfg: DensitySolverConfig) -> DiscreteMeasure:
    """``alpha_0 = mu_0(F_1 * R) (f_1 * R) / m``, renormalised."""
    f = np.asarray(f1, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("f1 must be nonnegative")
    F0 = _flow_map(F1, cfg)
    f0 = gauss_convolve(f, cfg.horizon, cfg.grid, tail="constant")
    alpha = _density_at(mu0, F0) * np.maximum(f0, 0.0) / cfg.rescale_m
    return DiscreteMeasure(cfg.grid, alpha)


def update_f1_density(alpha0: DiscreteMeasure, F1_prev: MonotoneMap, mu1: DiscreteMeasure,
                      cfg: DensitySolverConfig, check_degenerate: bool = True):
    """Solve ``alpha_1 = mu_1(F_1) F_1'`` for ``f_1`` using the previous ``F_1``.

    Returns ``(f1, F1)``; ``f1`` is clipped to ``[0, clip_C]`` and ``F1`` is its
    trapezoid integral in ``y`` anchored at ``F1_prev`` at the left end.
    Raises :class:`DegenerateRatio` (when ``check_degenerate``) if ``mu_1``
    vanishes under ``F1_prev`` where ``alpha_1`` still has mass on more than
    ``cfg.degenerate_fraction`` of the grid.
    """
    eps = cfg.eps_for(mu1)
    num = gauss_convolve(alpha0.density, cfg.horizon, cfg.grid, tail="zero")
    # alpha_1 is a density in x; its y-density carries the factor m.
    num = np.maximum(num, 0.0) * cfg.rescale_m
    den = _density_at(mu1, F1_prev.values)
    both_zero = (num < eps) & (den < eps)
    starved = (den < eps) & (num >= eps)
    if check_degenerate and np.mean(starved) > cfg.degenerate_fraction:
        raise DegenerateRatio(
            f"mu1 vanishes where alpha1 has mass on {np.mean(starved):.1%} of the grid")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    f = np.minimum(ratio, cfg.clip_C)
    f[both_zero] = 0.0
    F = F1_prev.values[0] + cumulative_trapezoid(cfg.grid, f) / cfg.rescale_m
    return f, MonotoneMap(cfg.grid, F)


def _model_quantiles(alpha: DiscreteMeasure, h, u) -> np.ndarray:
    return np.interp(alpha.quantile(u), alpha.points, h)


def density_errors(alpha0: DiscreteMeasure, F1: MonotoneMap, F0, mu0: DiscreteMeasure,
                   mu1: DiscreteMeasure, cfg: DensitySolverConfig):
    """Quantile MSE of ``F0 # alpha0`` against ``mu0`` and ``F1 # alpha1`` against ``mu1``.

    The levels 0 and 1 are left out: there both quantile functions return
    grid ends, which the anchored ``F1`` does not reproduce.
    """
    u = probability_grid(cfg.n_quantiles)[1:-1]
    alpha1 = DiscreteMeasure(cfg.grid, gauss_convolve(alpha0.density, cfg.horizon, cfg.grid,
                                                      tail="zero").clip(min=0.0))
    e0 = quantile_mse(quantile_from_cdf(mu0.points, mu0.cdf, u), _model_quantiles(alpha0, F0, u))
    e1 = quantile_mse(quantile_from_cdf(mu1.points, mu1.cdf, u), _model_quantiles(alpha1, F1.values, u))
    return e0, e1


def solve_density(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cfg: DensitySolverConfig,
                  check_order: bool = True) -> BassSolution:
    """Alternate the two density updates from the identity start.

    The stopping error is the larger of the quantile MSEs at the two ends.
    ``mu0`` and ``mu1`` may live on their own grids. The trace's dual column
    is NaN (the approximate transport has no exact dual) and the step column
    is the W-inf move of ``alpha_0``. The support check for
    :class:`DegenerateRatio` runs on the first update, from the identity
    start; later overruns of ``mu_1``'s grid by the upper end of ``F1`` are
    left to the clip.
    """
    if check_order:
        if mu0.grid != mu1.grid:
            raise ValueError("convex-order check needs both marginals on one grid")
        _require_order(mu0, mu1)
    F1 = MonotoneMap(cfg.grid, cfg.rescaled())
    f1 = np.ones(cfg.grid.n)
    F0 = _flow_map(F1, cfg)
    trace = IterationTrace()
    converged = False
    prev = None
    alpha0 = None
    for n in range(1, cfg.max_iter + 1):
        alpha0 = update_alpha0_density(F1, f1, mu0, cfg)
        f1, F1 = update_f1_density(alpha0, F1, mu1, cfg, check_degenerate=n == 1)
        F0 = _flow_map(F1, cfg)
        e0, e1 = density_errors(alpha0, F1, F0, mu0, mu1, cfg)
        err = max(e0, e1)
        step = math.nan if prev is None else w_inf_distance(alpha0, prev)
        trace.record(err, math.nan, step)
        log.debug("iter %d err0=%.3e err1=%.3e", n, e0, e1)
        prev = alpha0
        if err <= cfg.tol:
            converged = True
            break
    F0 = np.maximum.accumulate(F0)
    sol = BassSolution(
        alpha0=alpha0, F1=F1, F0=MonotoneMap(cfg.grid, F0), iterations=len(trace), trace=trace,
        converged=converged, alpha0_cdf=np.array(alpha0.cdf), mu0=mu0, mu1=mu1,
        timegrid=cfg.timegrid, sigma_bar=cfg.sigma_bar, method="density")
    if not converged:
        raise NotConverged(f"error {trace.mse_error[-1]:.3g} > tol {cfg.tol:.3g} after "
                           f"{cfg.max_iter} iterations", best=sol)
    return sol
