# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: nearest-site assignment and circle-lens geometry.

Semantics match ``_pykernels`` exactly; ``kernels`` picks one at import.
"""
import numpy as np

from libc.math cimport acos, floor, sqrt, M_PI


cdef inline double _clip1(double v) nogil:
    if v > 1.0:
        return 1.0
    if v < -1.0:
        return -1.0
    return v


def nearest_site(const double[::1] px, const double[::1] py,
                 const double[::1] sx, const double[::1] sy,
                 double period=0.0):
    """Index of the nearest site for every point (lowest index on ties).

    ``period > 0`` measures distances on a square torus of that side.
    """
    cdef Py_ssize_t n = px.shape[0], m = sx.shape[0], i, j, best
    cdef double dx, dy, d2, bd2
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] o = out
    if m == 0:
        out.fill(-1)
        return out
    with nogil:
        for i in range(n):
            best = 0
            bd2 = 1e308
            for j in range(m):
                dx = px[i] - sx[j]
                dy = py[i] - sy[j]
                if period > 0.0:
                    dx = dx - period * floor(dx / period + 0.5)
                    dy = dy - period * floor(dy / period + 0.5)
                d2 = dx * dx + dy * dy
                if d2 < bd2:
                    bd2 = d2
                    best = j
            o[i] = best
    return out


cdef inline double _lens(double r, double y, double x) nogil:
    cdef double w1 = r * r + y * y - x * x
    cdef double w2 = x * x + y * y - r * r
    cdef double c1 = _clip1(w1 / (2.0 * y * r))
    cdef double c2 = _clip1(w2 / (2.0 * y * x))
    cdef double disc = 4.0 * y * y * x * x - w2 * w2
    if disc < 0.0:
        disc = 0.0
    return r * r * acos(c1) + x * x * acos(c2) - 0.5 * sqrt(disc)


def lens_area(const double[::1] r, const double[::1] y, const double[::1] x):
    """Elementwise intersection area of b(o, r) and b((y, 0), x)."""
    cdef Py_ssize_t n = r.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(n):
            o[k] = _lens(r[k], y[k], x[k])
    return out


def lens_area_dr(const double[::1] r, const double[::1] y, const double[::1] x):
    """Elementwise derivative of :func:`lens_area` with respect to ``r``."""
    cdef Py_ssize_t n = r.shape[0], k
    cdef double c1
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(n):
            c1 = _clip1((r[k] * r[k] + y[k] * y[k] - x[k] * x[k]) / (2.0 * y[k] * r[k]))
            o[k] = 2.0 * r[k] * acos(c1)
    return out
