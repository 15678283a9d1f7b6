"""Option-chain parsing and Breeden-Litzenberger densities."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DuplicateStrike, NegativeMass, ParseError, TruncationError
from .grid_measures import DiscreteMeasure, Grid1D
from .heat_kernel import gauss_convolve

log = logging.getLogger(__name__)

MIN_QUOTES = 5


@dataclass(frozen=True)
class OptionChain:
    """Call quotes ``(strike, price)`` at one maturity, strikes strictly increasing."""

    maturity_label: str
    quotes: tuple

    def __post_init__(self):
        q = tuple((float(k), float(c)) for k, c in self.quotes)
        if len(q) < MIN_QUOTES:
            raise ValueError(f"option chain needs at least {MIN_QUOTES} quotes, got {len(q)}")
        k = np.array([s for s, _ in q])
        c = np.array([p for _, p in q])
        if np.any(k <= 0) or np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("strikes must be positive and prices nonnegative")
        if np.any(np.diff(k) <= 0):
            raise ValueError("strikes must be strictly increasing")
        object.__setattr__(self, "quotes", q)
        bad = self.monotonicity_violations()
        if bad.size:
            log.warning("%s: call price increases at %d strike(s), first at K=%g",
                        self.maturity_label, bad.size, k[bad[0]])

    @property
    def strikes(self) -> np.ndarray:
        return np.array([k for k, _ in self.quotes])

    @property
    def prices(self) -> np.ndarray:
        return np.array([c for _, c in self.quotes])

    def monotonicity_violations(self) -> np.ndarray:
        """Indices ``i`` where ``price[i+1] > price[i]``."""
        return np.flatnonzero(np.diff(self.prices) > 0)


def parse_quotes(text: str) -> tuple:
    """Parse ``strike,price`` CSV text into ``(strike, price)`` pairs sorted by strike.

    Raises :class:`ParseError` (with the 1-based line number) on malformed
    rows and :class:`DuplicateStrike` on repeated strikes. No minimum count.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip().lower() for c in rows[0]] != ["strike", "price"]:
        raise ParseError("expected header 'strike,price'", line=1)
    quotes = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
        try:
            k, c = float(row[0]), float(row[1])
        except ValueError:
            raise ParseError(f"not a number: {','.join(row)!r}", line=lineno) from None
        if not (np.isfinite(k) and np.isfinite(c)) or k <= 0 or c < 0:
            raise ParseError("strike must be positive and price nonnegative", line=lineno)
        if k in quotes:
            raise DuplicateStrike(f"strike {k:g} quoted twice (line {lineno})")
        quotes[k] = c
    return tuple(sorted(quotes.items()))


def parse_chain(text: str, maturity_label: str = "") -> OptionChain:
    """:func:`parse_quotes` followed by the chain checks (at least ``MIN_QUOTES`` quotes)."""
    quotes = parse_quotes(text)
    if len(quotes) < MIN_QUOTES:
        raise ParseError(f"at least {MIN_QUOTES} quotes required, got {len(quotes)}")
    return OptionChain(maturity_label, quotes)


@dataclass(frozen=True)
class BLConfig:
    """Grid and smoothing for :func:`bl_density`.

    ``smoothing_bandwidth`` is the Gaussian kernel std in (rescaled) strike
    units; ``None`` means 1% of the grid width and 0 disables smoothing.
    Strikes and prices are divided by ``rescale_factor`` before gridding.
    """

    grid: Grid1D
    smoothing_bandwidth: float | None = None
    rescale_factor: float = 1.0
    negative_fraction: float = 0.2

    def __post_init__(self):
        if self.smoothing_bandwidth is None:
            object.__setattr__(self, "smoothing_bandwidth", 0.01 * self.grid.width)
        if not 0 <= self.smoothing_bandwidth < self.grid.width / 10:
            raise ValueError("smoothing bandwidth must lie in [0, grid width / 10)")
        if not self.rescale_factor > 0:
            raise ValueError("rescale_factor must be positive")


def bl_density(chain: OptionChain, cfg: BLConfig) -> DiscreteMeasure:
    """``d^2 C / dK^2`` of a natural cubic spline through the quotes.

    The second derivative is zero outside the quoted strikes, floored at 0,
    smoothed with a Gaussian kernel and renormalised. Raises
    :class:`NegativeMass` when the negative part exceeds
    ``cfg.negative_fraction`` of the total absolute mass before flooring.
    """
    k = chain.strikes / cfg.rescale_factor
    c = chain.prices / cfg.rescale_factor
    grid = cfg.grid
    tol = 1e-9 * grid.width
    if k[0] < grid.z_min - tol or k[-1] > grid.z_max + tol:
        raise ValueError(f"grid [{grid.z_min}, {grid.z_max}] does not cover strikes "
                         f"[{k[0]:g}, {k[-1]:g}]")
    x = grid.points
    spline = CubicSpline(k, c, bc_type="natural")
    inside = (x >= k[0]) & (x <= k[-1])
    d2 = np.zeros(grid.n)
    d2[inside] = spline(x[inside], 2)
    neg = grid.integrate(np.maximum(-d2, 0.0))
    total = grid.integrate(np.abs(d2))
    if not total > 0:
        raise NegativeMass("second derivative vanishes on the grid")
    if neg / total > cfg.negative_fraction:
        raise NegativeMass(f"{neg / total:.1%} of the Breeden-Litzenberger mass is negative")
    dens = np.maximum(d2, 0.0)
    if cfg.smoothing_bandwidth > 0:
        dens = np.maximum(gauss_convolve(dens, cfg.smoothing_bandwidth**2, grid, tail="zero"), 0.0)
    return DiscreteMeasure(grid, dens)


def _shift(m: DiscreteMeasure, s: float):
    x = m.points
    d = np.interp(x - s, x, m.density, left=0.0, right=0.0)
    return d, 1.0 - m.grid.integrate(d)


def mean_match(m0: DiscreteMeasure, m1: DiscreteMeasure, max_truncation: float = 1e-4,
               max_iter: int = 20):
    """Translate ``m1`` so its mean equals ``m0``'s.

    The shift is refined until the means agree within ``1e-9`` of the grid
    width (linear re-interpolation moves the mean slightly). Raises
    :class:`TruncationError` when the translation pushes more than
    ``max_truncation`` of ``m1``'s mass off its grid.
    """
    target = m0.mean()
    s = target - m1.mean()
    if s == 0.0:
        return m0, m1
    tol = 1e-9 * m1.grid.width
    out = m1
    for _ in range(max_iter):
        d, lost = _shift(m1, s)
        if lost > max_truncation:
            raise TruncationError(f"shift by {s:.4g} pushes {lost:.3g} of the mass off the grid")
        out = DiscreteMeasure(m1.grid, d)
        err = target - out.mean()
        if abs(err) <= tol:
            break
        s += err
    return m0, out
