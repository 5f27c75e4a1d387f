# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused row-wise kernels for the tensor engine.

Every kernel takes C-contiguous float64 2-D arrays (rows x cols) and
returns freshly allocated outputs. Semantics match ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, tanh

cnp.import_array()

cdef double SQRT_2_OVER_PI = 0.7978845608028654
cdef double GELU_C = 0.044715


def layer_norm_forward(const double[:, ::1] x, const double[::1] gamma, const double[::1] beta, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    y_arr = np.empty((n, d), dtype=np.float64)
    xhat_arr = np.empty((n, d), dtype=np.float64)
    rstd_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    cdef double mean, var, r, t
    with nogil:
        for i in range(n):
            mean = 0.0
            for j in range(d):
                mean += x[i, j]
            mean /= d
            var = 0.0
            for j in range(d):
                t = x[i, j] - mean
                var += t * t
            var /= d
            r = 1.0 / sqrt(var + eps)
            rstd[i] = r
            for j in range(d):
                t = (x[i, j] - mean) * r
                xhat[i, j] = t
                y[i, j] = t * gamma[j] + beta[j]
    return y_arr, xhat_arr, rstd_arr


def layer_norm_backward(const double[:, ::1] g, const double[:, ::1] xhat, const double[::1] rstd, const double[::1] gamma):
    cdef Py_ssize_t n = g.shape[0], d = g.shape[1], i, j
    dx_arr = np.empty((n, d), dtype=np.float64)
    dgamma_arr = np.zeros(d, dtype=np.float64)
    dbeta_arr = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgamma = dgamma_arr
    cdef double[::1] dbeta = dbeta_arr
    cdef double s1, s2, gh
    with nogil:
        for i in range(n):
            s1 = 0.0
            s2 = 0.0
            for j in range(d):
                gh = g[i, j] * gamma[j]
                s1 += gh
                s2 += gh * xhat[i, j]
                dgamma[j] += g[i, j] * xhat[i, j]
                dbeta[j] += g[i, j]
            s1 /= d
            s2 /= d
            for j in range(d):
                gh = g[i, j] * gamma[j]
                dx[i, j] = rstd[i] * (gh - s1 - xhat[i, j] * s2)
    return dx_arr, dgamma_arr, dbeta_arr


def softmax_forward(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    y_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double m, s, e
    with nogil:
        for i in range(n):
            m = x[i, 0]
            for j in range(1, d):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(d):
                e = exp(x[i, j] - m)
                y[i, j] = e
                s += e
            for j in range(d):
                y[i, j] /= s
    return y_arr


def softmax_backward(const double[:, ::1] y, const double[:, ::1] g):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], i, j
    dx_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double dot
    with nogil:
        for i in range(n):
            dot = 0.0
            for j in range(d):
                dot += g[i, j] * y[i, j]
            for j in range(d):
                dx[i, j] = y[i, j] * (g[i, j] - dot)
    return dx_arr


def gelu_forward(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    y_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double v
    with nogil:
        for i in range(n):
            for j in range(d):
                v = x[i, j]
                y[i, j] = 0.5 * v * (1.0 + tanh(SQRT_2_OVER_PI * (v + GELU_C * v * v * v)))
    return y_arr


def gelu_backward(const double[:, ::1] x, const double[:, ::1] g):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    dx_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double v, th, inner_d
    with nogil:
        for i in range(n):
            for j in range(d):
                v = x[i, j]
                th = tanh(SQRT_2_OVER_PI * (v + GELU_C * v * v * v))
                inner_d = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * v * v)
                dx[i, j] = g[i, j] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * inner_d)
    return dx_arr
