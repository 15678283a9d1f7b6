"""Martingale Sinkhorn iteration for the Bass martingale, CDF form.

Each step flows the current CDF of ``alpha_0`` forward, rearranges it onto
``mu_1`` to get ``F_1``, flows ``F_1`` backward to ``F_0`` and pulls ``mu_0``
back through ``F_0``:

    G_alpha0  <-  G_mu0 o (R * (q_mu1 o (R * G_alpha0)))
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvexOrderViolation, DualEvalError, NotConverged, OutOfRange
from .grid_measures import (DiscreteMeasure, Grid1D, TimeGrid, check_convex_order,
                            monotone_interp, probability_grid, quantile_from_cdf,
                            w_inf_from_cdfs)
from .heat_kernel import HeatPropagator, gauss_convolve
from .transport1d import MonotoneMap, antiderivative, conjugate_value

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid1D
    timegrid: TimeGrid = TimeGrid(1.0, 50)
    sigma_bar: float = 1.0
    tol: float = 1e-10
    max_iter: int = 200
    quantile_points: int | None = None
    track_dual: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @property
    def n_quantiles(self) -> int:
        return self.grid.n if self.quantile_points is None else self.quantile_points

    def propagator(self, kind: str = "map") -> HeatPropagator:
        return HeatPropagator(self.grid, self.timegrid, self.sigma_bar, kind)


@dataclass
class IterationTrace:
    mse_error: list = field(default_factory=list)
    dual_value: list = field(default_factory=list)
    w_inf_step: list = field(default_factory=list)

    def record(self, mse: float, dual: float, w_step: float):
        self.mse_error.append(float(mse))
        self.dual_value.append(float(dual))
        self.w_inf_step.append(float(w_step))

    def __len__(self):
        return len(self.mse_error)

    def rows(self):
        for i, row in enumerate(zip(self.mse_error, self.dual_value, self.w_inf_step), start=1):
            yield (i,) + row


@dataclass
class BassSolution:
    """Fitted pair ``(alpha0, F1)`` with ``F1`` fitted to ``alpha0``'s heat flow."""

    alpha0: DiscreteMeasure
    F1: MonotoneMap
    F0: MonotoneMap
    iterations: int
    trace: IterationTrace
    converged: bool
    alpha0_cdf: np.ndarray
    mu0: DiscreteMeasure
    mu1: DiscreteMeasure
    timegrid: TimeGrid
    sigma_bar: float = 1.0
    method: str = "cdf"

    @property
    def grid(self) -> Grid1D:
        return self.F1.grid

    def propagator(self, kind: str = "map") -> HeatPropagator:
        return HeatPropagator(self.grid, self.timegrid, self.sigma_bar, kind)


def _cdf_values(g) -> np.ndarray:
    return np.asarray(getattr(g, "cdf", g), dtype=np.float64)


def mpms_step(G_alpha0, mu0: DiscreteMeasure, mu1: DiscreteMeasure, p: HeatPropagator):
    """One fixed-point step; returns ``(new_cdf, F1, F0)``.

    ``G_alpha0`` is a CDF array on ``p.grid`` or a :class:`DiscreteMeasure`.
    """
    G = _cdf_values(G_alpha0)
    flowed = p.with_kind("cdf").flow(G)
    np.clip(flowed, 0.0, 1.0, out=flowed)
    F1 = MonotoneMap(p.grid, quantile_from_cdf(mu1.points, mu1.cdf, flowed))
    F0 = MonotoneMap(p.grid, p.with_kind("map").flow(F1.values))
    new = np.interp(F0.values, mu0.points, mu0.cdf)
    return new, F1, F0


def convolution_step(G_alpha0, mu0: DiscreteMeasure, mu1: DiscreteMeasure, grid: Grid1D,
                     horizon: float = 1.0):
    """:func:`mpms_step` with both heat flows done by direct Gaussian quadrature.

    The CDF continues as 0 and 1 beyond the grid and ``F1`` continues linearly.
    Returns ``(new_cdf, F1, F0)`` as arrays.
    """
    G = _cdf_values(G_alpha0)
    flowed = np.clip(gauss_convolve(G, horizon, grid, tail="constant"), 0.0, 1.0)
    F1 = quantile_from_cdf(mu1.points, mu1.cdf, flowed)
    F0 = gauss_convolve(F1, horizon, grid, tail="linear")
    return np.interp(F0, mu0.points, mu0.cdf), F1, F0


def quantile_mse(q_target, q_model) -> float:
    d = np.asarray(q_target) - np.asarray(q_model)
    return float(np.mean(d * d))


def mse_error(mu0: DiscreteMeasure, model_mu0, K: int | None = None) -> float:
    """Mean squared gap between quantile functions on ``K`` uniform levels in [0, 1]."""
    K = mu0.grid.n if K is None else K
    if K < 2:
        raise ValueError("need at least two quantile levels")
    u = probability_grid(K)
    model_grid = getattr(model_mu0, "grid", mu0.grid)
    q_model = quantile_from_cdf(model_grid.points, _cdf_values(model_mu0), u)
    return quantile_mse(quantile_from_cdf(mu0.points, mu0.cdf, u), q_model)


def transported_mse(mu0: DiscreteMeasure, alpha_cdf, F0: MonotoneMap, K: int) -> float:
    """``mse_error`` against ``F0 # alpha0`` using the exact quantile ``F0(q_alpha0(u))``."""
    u = probability_grid(K)
    q_alpha = quantile_from_cdf(F0.grid.points, alpha_cdf, u)
    return quantile_mse(quantile_from_cdf(mu0.points, mu0.cdf, u), F0(q_alpha))


def _flowed_potential(F1: MonotoneMap, p: HeatPropagator, psi_star):
    """Heat flow of ``psi_star`` over the propagator's horizon, as a potential.

    Under the FD scheme the flowed potential's gradient is the backward flow
    of ``F1``; the additive constant accumulates ``s^2 dt / 2`` times the
    gradient's central difference at a fixed reference node.
    """
    slices = p.with_kind("map").propagate_backward(F1.values)
    grid = F1.grid
    c = grid.n // 2
    slope_at_c = (slices[:-1, c + 1] - slices[:-1, c - 1]) / (2.0 * grid.dx)
    value_c = psi_star.values[c] + 0.5 * p.sigma_bar**2 * p.timegrid.dt * float(np.sum(slope_at_c))
    F0 = MonotoneMap(grid, slices[0])
    flowed = antiderivative(F0)
    return flowed.shifted(value_c - flowed.values[c])


def dual_value(F1: MonotoneMap, mu0: DiscreteMeasure, mu1: DiscreteMeasure, p: HeatPropagator,
               anchor: float = 0.0) -> float:
    """Inf-form dual ``int psi dmu1 - int (psi* * R)* dmu0`` with ``psi* = int F1``."""
    psi_star = antiderivative(F1, anchor)
    try:
        psi = conjugate_value(psi_star, mu1.points)
        flowed = _flowed_potential(F1, p, psi_star)
        back = conjugate_value(flowed, mu0.points)
    except OutOfRange as exc:
        raise DualEvalError(str(exc)) from exc
    return mu1.grid.integrate(psi * mu1.density) - mu0.grid.integrate(back * mu0.density)


def _require_order(mu0, mu1):
    report = check_convex_order(mu0, mu1)
    if not report.strict:
        raise ConvexOrderViolation(
            f"marginals not in strict convex order (mean diff {report.mean_diff:.3g}, "
            f"min call gap {report.min_gap:.3g} at K={report.argmin_strike:.6g})", report)
    return report


def solve(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cfg: SolverConfig,
          check_order: bool = True) -> BassSolution:
    """Iterate :func:`mpms_step` from ``F1 = Id`` until the ``mu0`` error is below ``cfg.tol``.

    Raises :class:`NotConverged` (carrying the last iterate as ``best``) when
    ``cfg.max_iter`` steps do not reach the tolerance.
    """
    if mu0.grid != cfg.grid or mu1.grid != cfg.grid:
        raise ValueError("marginals must live on the solver grid")
    if check_order:
        _require_order(mu0, mu1)
    p = cfg.propagator()
    K = cfg.n_quantiles
    x = cfg.grid.points
    # F1 = Id is caloric with matching pins, so F0 = Id and alpha0 starts at mu0.
    G = np.array(mu0.cdf)
    trace = IterationTrace()
    converged = False
    F1 = F0 = MonotoneMap.identity(cfg.grid)
    for n in range(1, cfg.max_iter + 1):
        G_new, F1, F0 = mpms_step(G, mu0, mu1, p)
        mse = transported_mse(mu0, G, F0, K)
        dual = dual_value(F1, mu0, mu1, p) if cfg.track_dual else math.nan
        trace.record(mse, dual, w_inf_from_cdfs(x, G, G_new, K))
        log.debug("iter %d mse=%.3e dual=%.12g", n, mse, dual)
        if mse <= cfg.tol:
            converged = True
            break
        if n < cfg.max_iter:
            G = G_new
    sol = BassSolution(
        alpha0=DiscreteMeasure.from_cdf(cfg.grid, G), F1=F1, F0=F0, iterations=len(trace),
        trace=trace, converged=converged, alpha0_cdf=G, mu0=mu0, mu1=mu1,
        timegrid=cfg.timegrid, sigma_bar=cfg.sigma_bar)
    if not converged:
        raise NotConverged(f"mse {trace.mse_error[-1]:.3g} > tol {cfg.tol:.3g} after "
                           f"{cfg.max_iter} iterations", best=sol)
    return sol


def model_mu0_cdf(sol: BassSolution) -> np.ndarray:
    """CDF of ``F0 # alpha0`` on the solution grid."""
    x = sol.grid.points
    pre = monotone_interp(x, sol.F0.values, x)
    return np.interp(pre, x, sol.alpha0_cdf)
