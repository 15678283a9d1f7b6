"""Implicit finite-difference heat flow and direct Gaussian convolution.

Both realize convolution with the heat kernel ``R_t``. The implicit scheme
solves ``(I - s^2 dt / 2 * D2) g_k = g_{k-1}`` with the end rows replaced by
identity rows that pin the boundary values; backward Euler keeps CDFs
nondecreasing and maps monotone for any step size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import BandwidthError, SolverFailure
from .grid_measures import Grid1D, TimeGrid

BOUNDARY_KINDS = ("cdf", "map", "density")


def heat_kernel(x, t: float):
    """Gaussian density with variance ``t``."""
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x / t) / math.sqrt(2.0 * math.pi * t)


def _bands(n: int, coef: float):
    lower = np.full(n, -coef)
    diag = np.full(n, 1.0 + 2.0 * coef)
    upper = np.full(n, -coef)
    lower[0] = upper[0] = 0.0
    lower[-1] = upper[-1] = 0.0
    diag[0] = diag[-1] = 1.0
    return lower, diag, upper


@lru_cache(maxsize=16)
def _composed(n: int, coef: float, steps: int) -> np.ndarray:
    one_step = kernels.thomas_solve(*_bands(n, coef), np.eye(n))
    op = np.linalg.matrix_power(one_step, steps)
    op.setflags(write=False)
    return op


@dataclass(frozen=True)
class HeatPropagator:
    """Implicit heat propagator on ``grid`` over ``timegrid`` with volatility ``sigma_bar``.

    ``boundary_kind`` fixes the pinned end values: ``cdf`` -> (0, 1),
    ``map`` -> (z_min, z_max), ``density`` -> (0, 0). ``pins`` overrides them.
    """

    grid: Grid1D
    timegrid: TimeGrid
    sigma_bar: float = 1.0
    boundary_kind: str = "map"
    pins: tuple | None = None

    def __post_init__(self):
        if self.boundary_kind not in BOUNDARY_KINDS:
            raise ValueError(f"boundary_kind must be one of {BOUNDARY_KINDS}")
        if not self.sigma_bar > 0:
            raise ValueError("sigma_bar must be positive")

    @property
    def coef(self) -> float:
        return 0.5 * self.sigma_bar**2 * self.timegrid.dt / self.grid.dx**2

    @property
    def bands(self):
        return _bands(self.grid.n, self.coef)

    @property
    def boundary_values(self) -> tuple[float, float]:
        if self.pins is not None:
            return float(self.pins[0]), float(self.pins[1])
        if self.boundary_kind == "cdf":
            return 0.0, 1.0
        if self.boundary_kind == "map":
            return self.grid.z_min, self.grid.z_max
        return 0.0, 0.0

    @property
    def variance(self) -> float:
        """Total heat-kernel variance ``sigma_bar^2 T``."""
        return self.sigma_bar**2 * self.timegrid.T

    def with_kind(self, kind: str, pins=None) -> "HeatPropagator":
        return HeatPropagator(self.grid, self.timegrid, self.sigma_bar, kind, pins)

    def _pinned(self, g) -> np.ndarray:
        g = np.array(g, dtype=np.float64)
        if g.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} grid values, got shape {g.shape}")
        g[0], g[-1] = self.boundary_values
        return g

    def step(self, g) -> np.ndarray:
        try:
            return kernels.thomas_solve(*self.bands, self._pinned(g))
        except ZeroDivisionError as exc:
            raise SolverFailure(str(exc)) from exc

    def _slices(self, g0, steps: int) -> np.ndarray:
        left, right = self.boundary_values
        try:
            return kernels.heat_steps(*self.bands, np.asarray(g0, dtype=np.float64), steps, left, right)
        except ZeroDivisionError as exc:
            raise SolverFailure(str(exc)) from exc

    def propagate_forward(self, g0) -> np.ndarray:
        """Rows ``k = 0..M`` hold ``g`` at ``t_k``, starting from ``g0`` at ``t_0``."""
        return self._slices(g0, self.timegrid.M)

    def propagate_backward(self, g_end) -> np.ndarray:
        """Rows ``k = 0..M`` hold ``g`` at ``t_k``, with terminal value ``g_end`` at ``t_M``."""
        return self._slices(g_end, self.timegrid.M)[::-1]

    @property
    def composed(self) -> np.ndarray:
        """Dense M-step solve operator (applies to pinned inputs)."""
        return _composed(self.grid.n, self.coef, self.timegrid.M)

    def apply_composed(self, g) -> np.ndarray:
        """All ``M`` steps at once; equals the last slice of the sequential flow."""
        if self.timegrid.M == 0:
            return np.array(g, dtype=np.float64)
        return self.composed @ self._pinned(g)

    def flow(self, g) -> np.ndarray:
        """Value after the full ``M`` steps, by the faster route for the active backend."""
        if kernels.BACKEND == "python":
            return self.apply_composed(g)
        return self._slices(g, self.timegrid.M)[-1]


def _tail_segments(values, grid: Grid1D, tail):
    v = np.asarray(values, dtype=np.float64)
    x = grid.points
    if isinstance(tail, str):
        if tail == "linear":
            sl = (v[1] - v[0]) / grid.dx
            sr = (v[-1] - v[-2]) / grid.dx
            return (sl, v[0] - sl * x[0]), (sr, v[-1] - sr * x[-1])
        if tail == "constant":
            return (0.0, v[0]), (0.0, v[-1])
        if tail == "zero":
            return (0.0, 0.0), (0.0, 0.0)
        raise ValueError(f"unknown tail mode {tail!r}")
    tail = tuple(tail)
    if len(tail) == 2 and np.ndim(tail[0]) == 0:
        return (float(tail[0]), float(tail[1])), (float(tail[0]), float(tail[1]))
    (sl, il), (sr, ir) = tail
    return (float(sl), float(il)), (float(sr), float(ir))


def gauss_convolve(values, t: float, grid: Grid1D, tail="linear", width: float = 6.0) -> np.ndarray:
    """Trapezoid quadrature of ``int values(x - y) R_t(y) dy`` at every grid point.

    Outside the grid ``values`` is continued by ``tail``: ``"linear"`` (end
    slopes), ``"constant"``, ``"zero"``, a single ``(slope, intercept)`` for
    both sides, or a ``((slope, intercept), (slope, intercept))`` pair for the
    left and right sides. The kernel is cut at ``width`` standard deviations.
    """
    if not t > 0:
        raise ValueError("convolution time must be positive")
    reach = width * math.sqrt(t)
    if reach > grid.width:
        raise BandwidthError(f"kernel half-width {reach:.3g} exceeds grid width {grid.width:.3g}")
    v = np.asarray(values, dtype=np.float64)
    J = max(1, int(math.ceil(reach / grid.dx)))
    offsets = grid.dx * np.arange(-J, J + 1)
    w = heat_kernel(offsets, t)
    w[0] *= 0.5
    w[-1] *= 0.5
    w /= w.sum()
    (sl, il), (sr, ir) = _tail_segments(v, grid, tail)
    xl = grid.z_min - grid.dx * np.arange(J, 0, -1)
    xr = grid.z_max + grid.dx * np.arange(1, J + 1)
    padded = np.concatenate([sl * xl + il, v, sr * xr + ir])
    # Symmetric kernel: convolution equals correlation.
    return kernels.correlate_valid(padded, w)
