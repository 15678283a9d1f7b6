"""Uniform grids and grid-supported probability measures.

A :class:`DiscreteMeasure` always carries a density; its CDF is rebuilt from
that density by the trapezoid rule so the two views cannot drift apart.
Quantiles are the piecewise-linear inverse of the CDF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtr

from .errors import GridMismatch, NonMonotoneMap, TruncationError

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``n`` points on ``[z_min, z_max]``."""

    z_min: float
    z_max: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.n}")
        if not (math.isfinite(self.z_min) and math.isfinite(self.z_max)) or self.z_min >= self.z_max:
            raise ValueError(f"invalid grid bounds [{self.z_min}, {self.z_max}]")

    @property
    def dx(self) -> float:
        return (self.z_max - self.z_min) / (self.n - 1)

    @property
    def width(self) -> float:
        return self.z_max - self.z_min

    @cached_property
    def points(self) -> np.ndarray:
        return _frozen(self.z_min + self.dx * np.arange(self.n))

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.n, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return _frozen(w)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_k = k T / M``, ``k = 0..M``."""

    T: float
    M: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("time horizon must be positive")
        if int(self.M) != self.M or self.M < 0:
            raise ValueError("step count must be a nonnegative integer")

    @property
    def dt(self) -> float:
        return self.T / self.M if self.M else 0.0

    @cached_property
    def times(self) -> np.ndarray:
        if self.M == 0:
            return _frozen([0.0])
        t = self.dt * np.arange(self.M + 1)
        t[-1] = self.T
        return _frozen(t)


def cumulative_trapezoid(grid: Grid1D, values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    out = np.empty_like(v)
    out[0] = 0.0
    np.cumsum(0.5 * grid.dx * (v[1:] + v[:-1]), out=out[1:])
    return out


def quantile_from_cdf(x: np.ndarray, cdf: np.ndarray, u) -> np.ndarray:
    """Leftmost piecewise-linear inverse of a nondecreasing ``cdf`` sampled at ``x``.

    ``u <= 0`` maps to ``x[0]`` and ``u >= 1`` to ``x[-1]``.
    """
    u = np.asarray(u, dtype=np.float64)
    idx = np.searchsorted(cdf, u, side="left")
    idx = np.clip(idx, 1, len(x) - 1)
    lo = cdf[idx - 1]
    hi = cdf[idx]
    span = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(span > 0, (u - lo) / span, 1.0)
    q = x[idx - 1] + np.clip(frac, 0.0, 1.0) * (x[idx] - x[idx - 1])
    q = np.where(u <= cdf[0], x[0], q)
    q = np.where(u <= 0.0, x[0], q)
    q = np.where(u >= 1.0, x[-1], q)
    return q


def monotone_interp(xq, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    """Evaluate the piecewise-linear function through (xp, fp) with nondecreasing ``xp``.

    Ties in ``xp`` resolve to the leftmost knot; values outside are clamped.
    """
    xq = np.asarray(xq, dtype=np.float64)
    idx = np.clip(np.searchsorted(xp, xq, side="left"), 1, len(xp) - 1)
    lo = xp[idx - 1]
    span = xp[idx] - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(span > 0, (xq - lo) / span, 1.0)
    out = fp[idx - 1] + np.clip(frac, 0.0, 1.0) * (fp[idx] - fp[idx - 1])
    out = np.where(xq <= xp[0], fp[0], out)
    return np.where(xq >= xp[-1], fp[-1], out)


class DiscreteMeasure:
    """Probability measure on a :class:`Grid1D`, stored as a nonnegative density.

    Construct with :meth:`from_density` or :meth:`from_cdf`; both renormalize.
    Instances are immutable.
    """

    __slots__ = ("grid", "density", "cdf")

    def __init__(self, grid: Grid1D, density):
        dens = np.array(density, dtype=np.float64)
        if dens.shape != (grid.n,):
            raise ValueError(f"density has shape {dens.shape}, grid has {grid.n} points")
        if not np.all(np.isfinite(dens)):
            raise ValueError("density must be finite")
        dens = np.maximum(dens, 0.0)
        mass = grid.integrate(dens)
        if not mass > 0:
            raise ValueError("density has zero mass")
        dens /= mass
        cdf = cumulative_trapezoid(grid, dens)
        cdf /= cdf[-1]
        cdf[-1] = 1.0
        np.maximum.accumulate(cdf, out=cdf)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", _frozen(dens))
        object.__setattr__(self, "cdf", _frozen(cdf))

    def __setattr__(self, name, value):
        raise AttributeError("DiscreteMeasure is immutable")

    @classmethod
    def from_density(cls, grid: Grid1D, density) -> "DiscreteMeasure":
        return cls(grid, density)

    @classmethod
    def from_cdf(cls, grid: Grid1D, cdf) -> "DiscreteMeasure":
        """Differentiate a CDF (central differences, one-sided at the ends)."""
        g = np.asarray(cdf, dtype=np.float64)
        return cls(grid, np.maximum(np.gradient(g, grid.dx), 0.0))

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def mean(self) -> float:
        return self.grid.integrate(self.points * self.density)

    def variance(self) -> float:
        m = self.mean()
        return self.grid.integrate((self.points - m) ** 2 * self.density)

    def moment(self, k: int) -> float:
        return self.grid.integrate(self.points**k * self.density)

    def quantile(self, u):
        return quantile(self, u)

    def __repr__(self):
        return f"DiscreteMeasure(grid={self.grid}, mean={self.mean():.6g}, var={self.variance():.6g})"


# ---------------------------------------------------------------------------
# Analytic marginal specifications


@dataclass(frozen=True)
class NormalMixture:
    weights: Sequence[float]
    means: Sequence[float]
    variances: Sequence[float]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not (len(w) == len(self.means) == len(self.variances)) or len(w) == 0:
            raise ValueError("weights, means and variances must have equal nonzero length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(np.asarray(self.variances, dtype=float) <= 0):
            raise ValueError("variances must be positive")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, m, v in zip(self.weights, self.means, self.variances):
            out += w * np.exp(-0.5 * (x - m) ** 2 / v) / (_SQRT2PI * math.sqrt(v))
        return out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, m, v in zip(self.weights, self.means, self.variances):
            out += w * ndtr((x - m) / math.sqrt(v))
        return out


@dataclass(frozen=True)
class LogNormal:
    """Law of ``exp(location + scale * Z)``."""

    location: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("lognormal scale must be positive")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        lx = np.log(x[pos])
        out[pos] = np.exp(-0.5 * ((lx - self.location) / self.scale) ** 2) / (
            x[pos] * self.scale * _SQRT2PI
        )
        return out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = ndtr((np.log(x[pos]) - self.location) / self.scale)
        return out

    def mean(self) -> float:
        return math.exp(self.location + 0.5 * self.scale**2)


@dataclass(frozen=True)
class Empirical:
    """Density samples ``density`` at abscissae ``x`` (linear interpolation, zero outside)."""

    x: Sequence[float]
    density: Sequence[float]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if x.shape != d.shape or x.ndim != 1 or len(x) < 2:
            raise ValueError("empirical x and density must be equal-length 1-D arrays")
        if np.any(np.diff(x) <= 0):
            raise ValueError("empirical abscissae must be strictly increasing")
        if np.any(d < 0):
            raise ValueError("empirical density must be nonnegative")

    def pdf(self, x):
        return np.interp(x, self.x, self.density, left=0.0, right=0.0)

    def cdf(self, x):
        xs = np.asarray(self.x, dtype=float)
        d = np.asarray(self.density, dtype=float)
        c = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(xs) * (d[1:] + d[:-1]))])
        c /= c[-1]
        return np.interp(x, xs, c, left=0.0, right=1.0)


MarginalSpec = Union[NormalMixture, LogNormal, Empirical]


def density_from_spec(spec: MarginalSpec, grid: Grid1D, max_truncation: float = 1e-4) -> DiscreteMeasure:
    """Sample an analytic marginal on ``grid`` and renormalize.

    Raises :class:`TruncationError` when more than ``max_truncation`` of the
    mass lies outside ``[z_min, z_max]``.
    """
    lost = float(spec.cdf(np.array([grid.z_min]))[0] + 1.0 - spec.cdf(np.array([grid.z_max]))[0])
    if lost > max_truncation:
        raise TruncationError(
            f"{lost:.3g} of the mass lies outside [{grid.z_min}, {grid.z_max}]"
        )
    return DiscreteMeasure(grid, spec.pdf(grid.points))


# ---------------------------------------------------------------------------
# Operations


def _check_same_grid(a: DiscreteMeasure, b: DiscreteMeasure):
    if a.grid != b.grid:
        raise GridMismatch(f"{a.grid} != {b.grid}")


def quantile(m: DiscreteMeasure, u):
    q = quantile_from_cdf(m.points, m.cdf, u)
    return float(q) if np.ndim(q) == 0 else q


def call_prices(m: DiscreteMeasure, strikes=None) -> np.ndarray:
    """Trapezoid ``int (x - K)^+ dm`` at every grid strike (or at ``strikes``)."""
    if strikes is not None:
        return np.array([call_price(m, k) for k in np.atleast_1d(strikes)])
    wd = m.grid.weights * m.density
    tail_mass = np.cumsum(wd[::-1])[::-1]
    tail_first = np.cumsum((wd * m.points)[::-1])[::-1]
    return np.maximum(tail_first - m.points * tail_mass, 0.0)


def call_price(m: DiscreteMeasure, K: float) -> float:
    """Trapezoid ``int (x - K)^+ dm``; the cell holding an off-grid ``K`` is split at the kink."""
    x = m.points
    value = m.grid.integrate(np.maximum(x - K, 0.0) * m.density)
    if x[0] < K < x[-1]:
        i = min(int((K - x[0]) // m.grid.dx), m.grid.n - 2)
        x1, p1 = x[i + 1], m.density[i + 1]
        if K > x[i]:
            value += 0.5 * (x1 - K) * p1 * ((x1 - K) - m.grid.dx)
    return float(value)


@dataclass(frozen=True)
class ConvexOrderReport:
    mean_diff: float
    min_gap: float
    argmin_strike: float
    tol_mean: float
    strict: bool


def check_convex_order(m0: DiscreteMeasure, m1: DiscreteMeasure, support_eps: float = 1e-4) -> ConvexOrderReport:
    """Compare means and call prices of ``m0`` and ``m1`` on their common grid.

    The gap is minimized over interior strikes of ``m1``'s support, taken as grid
    points where ``support_eps < cdf1 < 1 - support_eps``.
    """
    _check_same_grid(m0, m1)
    tol_mean = 1e-6 * m0.grid.width
    mean_diff = abs(m0.mean() - m1.mean())
    gap = call_prices(m1) - call_prices(m0)
    inner = (m1.cdf > support_eps) & (m1.cdf < 1.0 - support_eps)
    inner[0] = inner[-1] = False
    if not inner.any():
        return ConvexOrderReport(mean_diff, 0.0, float("nan"), tol_mean, False)
    j = np.flatnonzero(inner)[np.argmin(gap[inner])]
    min_gap = float(gap[j])
    return ConvexOrderReport(mean_diff, min_gap, float(m0.points[j]), tol_mean,
                             bool(mean_diff <= tol_mean and min_gap > 0))


def probability_grid(n: int, trim: float = 0.0) -> np.ndarray:
    u = np.linspace(0.0, 1.0, n)
    if trim > 0:
        u = u[(u >= trim) & (u <= 1.0 - trim)]
    return u


def w_inf_distance(m1: DiscreteMeasure, m2: DiscreteMeasure, trim: float = 0.0) -> float:
    """Sup distance between quantile functions on an ``N``-point probability grid.

    ``trim > 0`` drops probability levels below ``trim`` and above ``1 - trim``.
    """
    _check_same_grid(m1, m2)
    return w_inf_from_cdfs(m1.points, m1.cdf, m2.cdf, trim=trim)


def w_inf_from_cdfs(x, cdf1, cdf2, n=None, trim: float = 0.0) -> float:
    u = probability_grid(len(x) if n is None else n, trim)
    return float(np.max(np.abs(quantile_from_cdf(x, cdf1, u) - quantile_from_cdf(x, cdf2, u))))


def pushforward(m: DiscreteMeasure, h, grid: Grid1D | None = None, max_truncation: float = 1e-4) -> DiscreteMeasure:
    """Image of ``m`` under the increasing grid map ``h`` (values at ``m``'s points).

    The image CDF satisfies ``G(h(x_i)) = G_m(x_i)`` and is resampled on
    ``grid`` (default: ``m``'s grid); the density is its derivative.
    """
    values = np.asarray(getattr(h, "values", h), dtype=np.float64)
    if values.shape != (m.grid.n,):
        raise ValueError("map must be sampled on the measure's grid")
    if np.any(np.diff(values) < 0):
        raise NonMonotoneMap("pushforward map decreases")
    target = m.grid if grid is None else grid
    lost = (monotone_interp(target.z_min, values, m.cdf)
            + 1.0 - monotone_interp(target.z_max, values, m.cdf))
    if lost > max_truncation:
        raise TruncationError(f"{float(lost):.3g} of the pushed mass leaves the grid")
    cdf = pushforward_cdf(m.points, m.cdf, values, target.points)
    return DiscreteMeasure.from_cdf(target, cdf)


def pushforward_cdf(x, cdf, values, y) -> np.ndarray:
    """CDF on points ``y`` of the image of (x, cdf) under increasing ``values``."""
    # G(y) = G_m(h^{-1}(y)): invert h by interpolation, leftmost on flat stretches.
    preimage = monotone_interp(y, values, np.asarray(x, dtype=np.float64))
    g = np.interp(preimage, x, cdf)
    g = np.where(y < values[0], 0.0, g)
    return np.where(y >= values[-1], 1.0, g)
