# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel for the partial-curve-mapping minimisation.

Same contract and algorithm as ``wordeq._pcm_py.partial_curve_min``: breakpoint
enumeration, then exact minimisation of the piecewise-convex mapped area by
bisection on its derivative.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport hypot, INFINITY

cnp.import_array()

DEF BISECTION_STEPS = 64


cdef void _arc(const double[::1] x, const double[::1] y, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i
    out[0] = 0.0
    for i in range(1, x.shape[0]):
        out[i] = out[i - 1] + hypot(x[i] - x[i - 1], y[i] - y[i - 1])


cdef double _area(double t, const double[::1] weight, const double[::1] wx, const double[::1] wy,
                  const double[::1] ax, const double[::1] ay) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(weight.shape[0]):
        acc += weight[i] * hypot(wx[i] - t * ax[i], wy[i] - t * ay[i])
    return acc


cdef double _slope(double t, const double[::1] weight, const double[::1] wx, const double[::1] wy,
                   const double[::1] ax, const double[::1] ay) noexcept nogil:
    cdef double acc = 0.0, dx, dy, d
    cdef Py_ssize_t i
    for i in range(weight.shape[0]):
        dx = wx[i] - t * ax[i]
        dy = wy[i] - t * ay[i]
        d = hypot(dx, dy)
        if d > 0.0:
            acc -= weight[i] * (dx * ax[i] + dy * ay[i]) / d
    return acc


def partial_curve_min(sx_in, sy_in, lx_in, ly_in):
    cdef const double[::1] sx = np.ascontiguousarray(sx_in, dtype=np.float64)
    cdef const double[::1] sy = np.ascontiguousarray(sy_in, dtype=np.float64)
    cdef const double[::1] lx = np.ascontiguousarray(lx_in, dtype=np.float64)
    cdef const double[::1] ly = np.ascontiguousarray(ly_in, dtype=np.float64)
    cdef Py_ssize_t n = sx.shape[0], m = lx.shape[0]
    cdef Py_ssize_t i, k, j, step, seg

    s_arr = np.empty(n)
    S_arr = np.empty(m)
    cdef double[::1] s = s_arr
    cdef double[::1] S = S_arr
    _arc(sx, sy, s)
    _arc(lx, ly, S)
    cdef double span = S[m - 1] - s[n - 1]
    if span < 0.0:
        span = 0.0

    cdef double[::1] weight = np.zeros(n)
    for i in range(n - 1):
        weight[i] += 0.5 * (s[i + 1] - s[i])
        weight[i + 1] += 0.5 * (s[i + 1] - s[i])

    cdef double[::1] ux = np.zeros(m - 1)
    cdef double[::1] uy = np.zeros(m - 1)
    cdef double seg_len
    for k in range(m - 1):
        seg_len = S[k + 1] - S[k]
        if seg_len > 0.0:
            ux[k] = (lx[k + 1] - lx[k]) / seg_len
            uy[k] = (ly[k + 1] - ly[k]) / seg_len

    cuts = (S_arr[:, None] - s_arr[None, :]).ravel()
    cuts = cuts[(cuts > 0.0) & (cuts < span)]
    cdef double[::1] knots = np.unique(np.concatenate(([0.0, span], cuts)))
    cdef Py_ssize_t n_knots = knots.shape[0]
    cdef Py_ssize_t n_pieces = n_knots - 1 if n_knots > 1 else 1

    cdef double[::1] wx = np.empty(n)
    cdef double[::1] wy = np.empty(n)
    cdef double[::1] ax = np.empty(n)
    cdef double[::1] ay = np.empty(n)
    cdef double lo, hi, mid, a, b, c, u, val
    cdef double best = INFINITY

    with nogil:
        for j in range(n_pieces):
            lo = knots[j]
            hi = knots[j + 1] if n_knots > 1 else knots[j]
            mid = 0.5 * (lo + hi)
            seg = 0
            for i in range(n):
                u = s[i] + mid
                while seg < m - 2 and S[seg + 1] <= u:
                    seg += 1
                ax[i] = ux[seg]
                ay[i] = uy[seg]
                wx[i] = sx[i] - lx[seg] - (s[i] - S[seg]) * ux[seg]
                wy[i] = sy[i] - ly[seg] - (s[i] - S[seg]) * uy[seg]

            val = _area(lo, weight, wx, wy, ax, ay)
            if val < best:
                best = val
            val = _area(hi, weight, wx, wy, ax, ay)
            if val < best:
                best = val
            if _slope(lo, weight, wx, wy, ax, ay) < 0.0 and _slope(hi, weight, wx, wy, ax, ay) > 0.0:
                a = lo
                b = hi
                for step in range(BISECTION_STEPS):
                    c = 0.5 * (a + b)
                    if _slope(c, weight, wx, wy, ax, ay) > 0.0:
                        b = c
                    else:
                        a = c
                val = _area(0.5 * (a + b), weight, wx, wy, ax, ay)
                if val < best:
                    best = val
    return best
