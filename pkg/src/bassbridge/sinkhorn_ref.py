"""Sinkhorn iteration for the Schrodinger bridge with Brownian reference.

The potentials ``f0`` and ``g1`` solve ``mu_0 = f_0 (R * g_1)`` and
``mu_1 = g_1 (R * f_0)``; both heat flows use the killed (zero) boundary, so
end nodes carry no mass and residuals are taken over interior nodes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRatio, NotConverged
from .grid_measures import DiscreteMeasure, Grid1D, TimeGrid
from .heat_kernel import HeatPropagator
from .mpms_cdf import SolverConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SinkhornState:
    f0: np.ndarray
    g1: np.ndarray
    grid: Grid1D
    timegrid: TimeGrid
    sigma_bar: float = 1.0

    def __post_init__(self):
        for name in ("f0", "g1"):
            v = np.array(getattr(self, name), dtype=np.float64)
            if v.shape != (self.grid.n,):
                raise ValueError(f"{name} must have one value per grid point")
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError(f"{name} must be finite and nonnegative")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def propagator(self) -> HeatPropagator:
        return HeatPropagator(self.grid, self.timegrid, self.sigma_bar, "density")


@dataclass
class SinkhornTrace:
    """Per-iteration L1 residuals.

    ``residual0``/``residual1`` are measured at the end of each iteration;
    ``updated0`` is the ``mu0`` residual right after the ``f0`` half-step and
    ``updated1`` (equal to ``residual1``) the ``mu1`` residual right after the
    ``g1`` half-step.
    """

    residual0: list = field(default_factory=list)
    residual1: list = field(default_factory=list)
    updated0: list = field(default_factory=list)

    @property
    def updated1(self) -> list:
        return self.residual1

    def __len__(self):
        return len(self.residual0)


def _l1(grid: Grid1D, a, b) -> float:
    return grid.integrate(np.abs(a - b))


def _divide(target, flowed, eps: float, degenerate_fraction: float, side: str) -> np.ndarray:
    """``target / flowed`` on interior nodes, zero where both are negligible."""
    out = np.zeros_like(target)
    t, d = target[1:-1], flowed[1:-1]
    starved = (d < eps) & (t >= eps)
    if np.mean(starved) > degenerate_fraction:
        raise DegenerateRatio(f"heat flow vanishes where the {side} marginal has mass "
                              f"on {np.mean(starved):.1%} of the grid")
    ok = d > 0
    out[1:-1][ok] = t[ok] / d[ok]
    out[1:-1][(t < eps) & (d < eps)] = 0.0
    return out


def marginals(state: SinkhornState):
    """Reconstructed ``(mu0, mu1)`` densities of the product-form coupling."""
    p = state.propagator()
    return state.f0 * p.flow(state.g1), state.g1 * p.flow(state.f0)


def interior_target(m: DiscreteMeasure) -> np.ndarray:
    """``m``'s density with the killed end nodes zeroed, rescaled to mass 1."""
    d = np.array(m.density)
    d[0] = d[-1] = 0.0
    return d / m.grid.integrate(d)


def sinkhorn_solve(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cfg: SolverConfig,
                   zero_eps: float | None = None, degenerate_fraction: float = 0.05):
    """Alternate the two half-steps from ``g1 = 1`` until both L1 residuals are below ``cfg.tol``.

    The targets are the marginals restricted to interior nodes
    (:func:`interior_target`). Returns ``(state, trace)``. Raises
    :class:`NotConverged` with ``(state, trace)`` as ``best``.
    """
    if mu0.grid != cfg.grid or mu1.grid != cfg.grid:
        raise ValueError("marginals must live on the solver grid")
    grid = cfg.grid
    p = cfg.propagator("density")
    t0, t1 = interior_target(mu0), interior_target(mu1)
    eps = 1e-12 * max(float(np.max(t0)), float(np.max(t1))) if zero_eps is None else zero_eps
    g1 = np.ones(grid.n)
    trace = SinkhornTrace()
    state = None
    for n in range(1, cfg.max_iter + 1):
        flow_g = p.flow(g1)
        f0 = _divide(t0, flow_g, eps, degenerate_fraction, "initial")
        trace.updated0.append(_l1(grid, f0 * flow_g, t0))
        flow_f = p.flow(f0)
        g1 = _divide(t1, flow_f, eps, degenerate_fraction, "terminal")
        r0 = _l1(grid, f0 * p.flow(g1), t0)
        r1 = _l1(grid, g1 * flow_f, t1)
        trace.residual0.append(r0)
        trace.residual1.append(r1)
        log.debug("sinkhorn iter %d r0=%.3e r1=%.3e", n, r0, r1)
        state = SinkhornState(f0, g1, grid, cfg.timegrid, cfg.sigma_bar)
        if max(r0, r1) <= cfg.tol:
            return state, trace
    raise NotConverged(f"residual {max(trace.residual0[-1], trace.residual1[-1]):.3g} > "
                       f"tol {cfg.tol:.3g} after {cfg.max_iter} iterations", best=(state, trace))


def _flow_for(state: SinkhornState, t: float, values) -> np.ndarray:
    if t <= 0:
        return np.array(values, dtype=np.float64)
    tg = state.timegrid
    steps = max(1, int(round(tg.M * t / tg.T)))
    p = HeatPropagator(state.grid, TimeGrid(t, steps), state.sigma_bar, "density")
    return p.flow(values)


def sinkhorn_interpolation(state: SinkhornState, t: float) -> DiscreteMeasure:
    """``mu_t = (R_{T-t} * g1) (R_t * f0)``, normalised."""
    T = state.timegrid.T
    if not 0.0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    dens = _flow_for(state, T - t, state.g1) * _flow_for(state, t, state.f0)
    return DiscreteMeasure(state.grid, dens)
