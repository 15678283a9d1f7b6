"""Bass martingale solvers: martingale Sinkhorn iterations on a heat-equation grid."""
from .errors import (BandwidthError, BassBridgeError, ConvexOrderViolation, DegenerateRatio,
                     DualEvalError, DuplicateStrike, GridMismatch, MissingArtifact, NegativeMass,
                     NonMonotoneMap, NotConverged, OutOfRange, ParseError, SolverFailure,
                     TruncationError)
from .grid_measures import (DiscreteMeasure, Empirical, Grid1D, LogNormal, NormalMixture, TimeGrid,
                            call_price, call_prices, check_convex_order, density_from_spec,
                            pushforward, w_inf_distance)
from .heat_kernel import HeatPropagator, gauss_convolve
from .kernels import BACKEND
from .market_data import BLConfig, OptionChain, bl_density, mean_match, parse_chain, parse_quotes
from .mpms_cdf import BassSolution, IterationTrace, SolverConfig, mpms_step, solve
from .mpms_density import DensitySolverConfig, solve_density
from .sinkhorn_ref import SinkhornState, sinkhorn_interpolation, sinkhorn_solve
from .surfaces import (InterpolationSurface, LocalVolSurface, build_interpolation, extend_map,
                       local_vol, martingale_diagnostics)
from .transport1d import ConvexPotential, MonotoneMap, conjugate, monotone_map_between

__version__ = "0.1.0"
