"""Exception hierarchy shared by every module."""


class BassBridgeError(Exception):
    """Base class for all package errors."""


class TruncationError(BassBridgeError):
    """Too much probability mass falls outside the computational grid."""


class GridMismatch(BassBridgeError):
    """Two objects that must share a grid do not."""


class NonMonotoneMap(BassBridgeError):
    """A map that must be increasing decreases somewhere."""


class SolverFailure(BassBridgeError):
    """Tridiagonal elimination hit a zero pivot."""


class BandwidthError(BassBridgeError):
    """Gaussian kernel support is too wide for the grid."""


class OutOfRange(BassBridgeError):
    """A conjugate was requested outside the reachable gradient range."""


class DualEvalError(BassBridgeError):
    """The dual objective could not be evaluated."""


class ConvexOrderViolation(BassBridgeError):
    """The marginals are not in strict convex order."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotConverged(BassBridgeError):
    """Iteration budget exhausted; ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateRatio(BassBridgeError):
    """A pointwise ratio has a vanishing denominator on too many points."""


class ParseError(BassBridgeError):
    """Malformed option-chain input."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DuplicateStrike(BassBridgeError):
    """An option chain quotes the same strike twice."""


class NegativeMass(BassBridgeError):
    """Breeden-Litzenberger density is too negative to floor safely."""


class MissingArtifact(BassBridgeError):
    """A solution directory lacks a required file."""
