# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled inner kernels.

Each function mirrors one in ``_pykernels`` and must stay numerically
identical to it for the element-wise kernels (same operation order, no fused
multiply-add). ``nonneg_ista`` uses plain loops for its small products, so it
agrees with the NumPy version to rounding only.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


cdef inline double _shrink(double v, double t) nogil:
    # sign(v) * max(|v| - t, 0), branch-free and in the fallback's operation order
    cdef double r = fabs(v) - t
    cdef double s = <double>((v > 0.0) - (v < 0.0))
    return s * (r if r > 0.0 else 0.0)


def soft_threshold(const double[:, ::1] m, double theta):
    cdef Py_ssize_t r = m.shape[0], c = m.shape[1], i, j
    out = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(r):
            for j in range(c):
                o[i, j] = _shrink(m[i, j], theta)
    return out


def proxy_bregman(const double[:, ::1] dx, const double[:, ::1] b, double theta, bint literal):
    cdef Py_ssize_t r = dx.shape[0], c = dx.shape[1], i, j
    cdef double v, z
    z_arr = np.empty((r, c), dtype=np.float64)
    b_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] zo = z_arr
    cdef double[:, ::1] bo = b_arr
    with nogil:
        if literal:
            for i in range(r):
                for j in range(c):
                    z = _shrink(dx[i, j] + b[i, j], theta)
                    zo[i, j] = z
                    bo[i, j] = (z - dx[i, j]) - b[i, j]
        else:
            for i in range(r):
                for j in range(c):
                    v = dx[i, j] + b[i, j]
                    z = _shrink(v, theta)
                    zo[i, j] = z
                    bo[i, j] = v - z
    return z_arr, b_arr


def nonneg_ista(const double[:, ::1] gram, const double[:, ::1] dtx, z0,
                double step, double lam, Py_ssize_t max_iter, double tol):
    cdef Py_ssize_t m = gram.shape[0], n = dtx.shape[1], i, j, k, it = 0
    cdef double acc, v, diff2, norm2, slam = step * lam
    z_arr = np.array(z0, dtype=np.float64, order="C", copy=True)
    w_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] z = z_arr
    cdef double[:, ::1] w = w_arr
    cdef double[:, ::1] tmp
    with nogil:
        while it < max_iter:
            it += 1
            diff2 = 0.0
            norm2 = 0.0
            for i in range(m):
                for j in range(n):
                    acc = 0.0
                    for k in range(m):
                        acc = acc + gram[i, k] * z[k, j]
                    v = z[i, j] - step * (acc - dtx[i, j]) - slam
                    if v < 0.0:
                        v = 0.0
                    w[i, j] = v
                    diff2 = diff2 + (v - z[i, j]) * (v - z[i, j])
                    norm2 = norm2 + v * v
            tmp = z
            z = w
            w = tmp
            if sqrt(diff2) <= tol * sqrt(norm2):
                break
    return np.asarray(z).copy(), it
