"""One-dimensional transport primitives: monotone maps, potentials, conjugates."""
from __future__ import annotations

import numpy as np

from .errors import NonMonotoneMap, OutOfRange
from .grid_measures import (DiscreteMeasure, Grid1D, cumulative_trapezoid,
                            monotone_interp, quantile_from_cdf)


class MonotoneMap:
    """Nondecreasing function sampled on a grid.

    Exact ties are accepted (quantile compositions saturate in far tails);
    any decrease raises :class:`NonMonotoneMap`.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid1D, values):
        v = np.array(values, dtype=np.float64)
        if v.shape != (grid.n,):
            raise ValueError(f"map has shape {v.shape}, grid has {grid.n} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("map values must be finite")
        drop = np.diff(v)
        if np.any(drop < 0):
            i = int(np.argmin(drop))
            raise NonMonotoneMap(f"map decreases by {-drop[i]:.3g} at x={grid.points[i]:.6g}")
        v.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", v)

    def __setattr__(self, name, value):
        raise AttributeError("MonotoneMap is immutable")

    @classmethod
    def identity(cls, grid: Grid1D) -> "MonotoneMap":
        return cls(grid, grid.points)

    def __call__(self, x):
        return np.interp(x, self.grid.points, self.values)

    def inverse(self, y):
        """Leftmost preimage; clamped to the grid outside the map's range."""
        return monotone_interp(y, self.values, self.grid.points)

    def derivative(self) -> np.ndarray:
        """Central differences inside, one-sided at the ends."""
        return np.gradient(self.values, self.grid.dx)

    def min_gap(self) -> float:
        return float(np.min(np.diff(self.values)))


class ConvexPotential:
    """Convex function with its gradient, both sampled on a grid."""

    __slots__ = ("grid", "values", "gradient")

    def __init__(self, grid: Grid1D, values, gradient: MonotoneMap):
        v = np.array(values, dtype=np.float64)
        if v.shape != (grid.n,) or gradient.grid != grid:
            raise ValueError("potential and gradient must share the grid")
        second = np.diff(v, 2)
        scale = max(1.0, float(np.max(np.abs(v))))
        if np.any(second < -1e-10 * scale):
            raise ValueError("potential is not convex")
        v.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gradient", gradient)

    def __setattr__(self, name, value):
        raise AttributeError("ConvexPotential is immutable")

    def shifted(self, c: float) -> "ConvexPotential":
        return ConvexPotential(self.grid, self.values + c, self.gradient)


def monotone_map_between(source: DiscreteMeasure, target: DiscreteMeasure) -> MonotoneMap:
    """Increasing rearrangement ``x -> q_target(G_source(x))``."""
    values = quantile_from_cdf(target.points, target.cdf, source.cdf)
    return MonotoneMap(source.grid, values)


def antiderivative(m: MonotoneMap, anchor: float = 0.0) -> ConvexPotential:
    """Trapezoid integral of ``m`` taking the value ``anchor`` at the left end."""
    return ConvexPotential(m.grid, anchor + cumulative_trapezoid(m.grid, m.values), m)


def conjugate_value(g: ConvexPotential, x):
    """Legendre transform ``g*(x) = x y - g(y)`` with ``grad g(y) = x``.

    ``g`` is read as the piecewise-quadratic function whose gradient is the
    linear interpolant of ``g.gradient``; beyond the grid the gradient
    continues with the end slopes. The result is exact for that function.
    """
    xq = np.asarray(x, dtype=np.float64)
    y = g.grid.points
    G = g.gradient.values
    dy = g.grid.dx
    slope_left = (G[1] - G[0]) / dy
    slope_right = (G[-1] - G[-2]) / dy
    lo_bad = (xq < G[0]) & (slope_left <= 0)
    hi_bad = (xq > G[-1]) & (slope_right <= 0)
    if np.any(lo_bad | hi_bad):
        bad = xq[lo_bad | hi_bad].ravel()[0]
        raise OutOfRange(f"x={bad:.6g} outside gradient range [{G[0]:.6g}, {G[-1]:.6g}]")

    idx = np.clip(np.searchsorted(G, xq, side="left"), 1, len(G) - 1)
    base = idx - 1
    span = G[idx] - G[base]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(span > 0, (xq - G[base]) / span, 0.0)
    ystar = y[base] + np.clip(frac, 0.0, 1.0) * dy
    gbase = G[base]
    vbase = g.values[base]
    ybase = y[base]

    left = xq < G[0]
    if np.any(left):
        ystar = np.where(left, y[0] + (xq - G[0]) / slope_left, ystar)
        ybase = np.where(left, y[0], ybase)
        gbase = np.where(left, G[0], gbase)
        vbase = np.where(left, g.values[0], vbase)
    right = xq > G[-1]
    if np.any(right):
        ystar = np.where(right, y[-1] + (xq - G[-1]) / slope_right, ystar)
        ybase = np.where(right, y[-1], ybase)
        gbase = np.where(right, G[-1], gbase)
        vbase = np.where(right, g.values[-1], vbase)

    gy = vbase + (ystar - ybase) * 0.5 * (gbase + xq)
    out = xq * ystar - gy
    return float(out) if out.ndim == 0 else out


def conjugate(g: ConvexPotential, grid: Grid1D | None = None) -> np.ndarray:
    """``g*`` sampled on ``grid`` (default: ``g``'s grid)."""
    target = g.grid if grid is None else grid
    return conjugate_value(g, target.points)
