"""Numpy implementations of the inner loops, used when the extension is absent."""
import numpy as np


def _thomas(a, b, c, d):
    n = b.shape[0]
    cp = np.empty(n)
    x = np.empty(d.shape)
    if b[0] == 0.0:
        raise ZeroDivisionError("zero pivot in tridiagonal elimination")
    cp[0] = c[0] / b[0]
    x[0] = d[0] / b[0]
    for i in range(1, n):
        denom = b[i] - a[i] * cp[i - 1]
        if denom == 0.0:
            raise ZeroDivisionError("zero pivot in tridiagonal elimination")
        cp[i] = c[i] / denom
        x[i] = (d[i] - a[i] * x[i - 1]) / denom
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def thomas_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``rhs`` may be 1-D or (N, K)."""
    a = np.asarray(lower, dtype=np.float64)
    b = np.asarray(diag, dtype=np.float64)
    c = np.asarray(upper, dtype=np.float64)
    d = np.array(rhs, dtype=np.float64)
    # Row recurrences vectorize across columns, so 2-D right-hand sides go through unchanged.
    return _thomas(a, b, c, d)


def heat_steps(lower, diag, upper, g0, steps, left, right):
    """Apply ``steps`` pinned implicit solves; returns all (steps + 1, N) slices."""
    g = np.array(g0, dtype=np.float64)
    out = np.empty((steps + 1, g.shape[0]))
    out[0] = g
    for k in range(1, steps + 1):
        rhs = out[k - 1].copy()
        rhs[0] = left
        rhs[-1] = right
        out[k] = thomas_solve(lower, diag, upper, rhs)
    return out


def correlate_valid(padded, weights):
    """out[i] = sum_j weights[j] * padded[i + j], for i in [0, len(padded) - len(weights)]."""
    v = np.asarray(padded, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if v.shape[0] < w.shape[0]:
        raise ValueError("weights longer than padded input")
    return np.correlate(v, w, mode="valid")
