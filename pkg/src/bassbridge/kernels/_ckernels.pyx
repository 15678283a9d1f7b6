# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: tridiagonal elimination and direct kernel correlation."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef int _thomas_1d(const double[:] a, const double[:] b, const double[:] c,
                    const double[:] d, double[:] cp, double[:] x) noexcept nogil:
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i
    cdef double denom
    if b[0] == 0.0:
        return -1
    cp[0] = c[0] / b[0]
    x[0] = d[0] / b[0]
    for i in range(1, n):
        denom = b[i] - a[i] * cp[i - 1]
        if denom == 0.0:
            return -1
        cp[i] = c[i] / denom
        x[i] = (d[i] - a[i] * x[i - 1]) / denom
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return 0


def thomas_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``rhs`` may be 1-D or (N, K)."""
    cdef const double[:] a = np.ascontiguousarray(lower, dtype=np.float64)
    cdef const double[:] b = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[:] c = np.ascontiguousarray(upper, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    cdef double[:] cp = np.empty(n)
    cdef const double[:, :] d2
    cdef double[:, :] x2
    cdef double[:] col = np.empty(n)
    cdef double[:] out = np.empty(n)
    cdef Py_ssize_t k, i
    if rhs.ndim == 1:
        x = np.empty(n)
        if _thomas_1d(a, b, c, np.ascontiguousarray(rhs), cp, x) != 0:
            raise ZeroDivisionError("zero pivot in tridiagonal elimination")
        return x
    d2 = np.ascontiguousarray(rhs)
    res = np.empty((n, d2.shape[1]))
    x2 = res
    for k in range(d2.shape[1]):
        for i in range(n):
            col[i] = d2[i, k]
        if _thomas_1d(a, b, c, col, cp, out) != 0:
            raise ZeroDivisionError("zero pivot in tridiagonal elimination")
        for i in range(n):
            x2[i, k] = out[i]
    return res


def heat_steps(lower, diag, upper, g0, Py_ssize_t steps, double left, double right):
    """Apply ``steps`` pinned implicit solves; returns all (steps + 1, N) slices."""
    cdef const double[:] a = np.ascontiguousarray(lower, dtype=np.float64)
    cdef const double[:] b = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[:] c = np.ascontiguousarray(upper, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    cdef double[:] cp = np.empty(n)
    cdef double[:] rhs = np.empty(n)
    out = np.empty((steps + 1, n))
    cdef double[:, :] o = out
    cdef const double[:] g = np.ascontiguousarray(g0, dtype=np.float64)
    cdef Py_ssize_t k, i
    cdef int status = 0
    for i in range(n):
        o[0, i] = g[i]
    with nogil:
        for k in range(1, steps + 1):
            for i in range(n):
                rhs[i] = o[k - 1, i]
            rhs[0] = left
            rhs[n - 1] = right
            status = _thomas_1d(a, b, c, rhs, cp, o[k])
            if status != 0:
                break
    if status != 0:
        raise ZeroDivisionError("zero pivot in tridiagonal elimination")
    return out


def correlate_valid(padded, weights):
    """out[i] = sum_j weights[j] * padded[i + j], for i in [0, len(padded) - len(weights)]."""
    cdef const double[:] v = np.ascontiguousarray(padded, dtype=np.float64)
    cdef const double[:] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t nw = w.shape[0]
    cdef Py_ssize_t n = v.shape[0] - nw + 1
    if n <= 0:
        raise ValueError("weights longer than padded input")
    out = np.empty(n)
    cdef double[:] o = out
    cdef Py_ssize_t i, j
    cdef Py_ssize_t m = nw - nw % 4
    cdef double a0, a1, a2, a3
    with nogil:
        for i in range(n):
            # independent partial sums let the compiler pipeline the adds
            a0 = a1 = a2 = a3 = 0.0
            for j in range(0, m, 4):
                a0 += w[j] * v[i + j]
                a1 += w[j + 1] * v[i + j + 1]
                a2 += w[j + 2] * v[i + j + 2]
                a3 += w[j + 3] * v[i + j + 3]
            for j in range(m, nw):
                a0 += w[j] * v[i + j]
            o[i] = (a0 + a1) + (a2 + a3)
    return out
