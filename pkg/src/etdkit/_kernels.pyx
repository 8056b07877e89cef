# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise kernels; same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef _coefficients(y, r, g):
    shape = np.shape(y)
    rv = np.ascontiguousarray(np.broadcast_to(r, shape), dtype=np.float64).ravel()
    gv = np.ascontiguousarray(np.broadcast_to(g, shape), dtype=np.float64).ravel()
    return rv, gv


cdef _real_nonlinearity(const double[::1] yv, const double[::1] rv, const double[::1] gv,
                        double[::1] ov):
    cdef Py_ssize_t i
    cdef double a, a2
    for i in range(yv.shape[0]):
        a = yv[i]
        a2 = a * a
        ov[i] = rv[i] * a + gv[i] * a2 - a2 * a


cdef _complex_nonlinearity(const double[::1] yv, const double[::1] rv, const double[::1] gv,
                           double[::1] ov):
    # interleaved (re, im) pairs; explicit arithmetic avoids the C99 complex helpers
    cdef Py_ssize_t i, n = rv.shape[0]
    cdef double x, z, x2, z2
    for i in range(n):
        x = yv[2 * i]
        z = yv[2 * i + 1]
        x2 = x * x - z * z
        z2 = 2.0 * x * z
        ov[2 * i] = rv[i] * x + gv[i] * x2 - (x2 * x - z2 * z)
        ov[2 * i + 1] = rv[i] * z + gv[i] * z2 - (x2 * z + z2 * x)


def sh_nonlinearity(y, r, g):
    rv, gv = _coefficients(y, r, g)
    if np.iscomplexobj(y):
        yc = np.ascontiguousarray(y, dtype=np.complex128).ravel()
        out = np.empty_like(yc)
        _complex_nonlinearity(yc.view(np.float64), rv, gv, out.view(np.float64))
    else:
        yr = np.ascontiguousarray(y, dtype=np.float64).ravel()
        out = np.empty_like(yr)
        _real_nonlinearity(yr, rv, gv, out)
    return out.reshape(np.shape(y))


cdef _real_jacobian(const double[::1] yv, const double[::1] rv, const double[::1] gv,
                    double[::1] ov):
    cdef Py_ssize_t i
    cdef double a
    for i in range(yv.shape[0]):
        a = yv[i]
        ov[i] = rv[i] + 2.0 * gv[i] * a - 3.0 * a * a


cdef _complex_jacobian(const double[::1] yv, const double[::1] rv, const double[::1] gv,
                       double[::1] ov):
    cdef Py_ssize_t i, n = rv.shape[0]
    cdef double x, z
    for i in range(n):
        x = yv[2 * i]
        z = yv[2 * i + 1]
        ov[2 * i] = rv[i] + 2.0 * gv[i] * x - 3.0 * (x * x - z * z)
        ov[2 * i + 1] = 2.0 * gv[i] * z - 6.0 * x * z


def sh_jacobian(y, r, g):
    rv, gv = _coefficients(y, r, g)
    if np.iscomplexobj(y):
        yc = np.ascontiguousarray(y, dtype=np.complex128).ravel()
        out = np.empty_like(yc)
        _complex_jacobian(yc.view(np.float64), rv, gv, out.view(np.float64))
    else:
        yr = np.ascontiguousarray(y, dtype=np.float64).ravel()
        out = np.empty_like(yr)
        _real_jacobian(yr, rv, gv, out)
    return out.reshape(np.shape(y))


def huber_tv(field, double eps):
    cdef const double[:, ::1] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], i, j, ip, jp, im, jm
    px_arr = np.empty((nx, ny))
    py_arr = np.empty((nx, ny))
    grad = np.empty((nx, ny))
    cdef double[:, ::1] px = px_arr
    cdef double[:, ::1] py = py_arr
    cdef double[:, ::1] gr = grad
    cdef double dx, dy, t, w, value = 0.0
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            dx = f[ip, j] - f[i, j]
            dy = f[i, jp] - f[i, j]
            t = sqrt(dx * dx + dy * dy)
            if t <= eps:
                value += t * t / (2.0 * eps)
                w = 1.0 / eps
            else:
                value += t - 0.5 * eps
                w = 1.0 / t
            px[i, j] = w * dx
            py[i, j] = w * dy
    for i in range(nx):
        im = i - 1 if i > 0 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else ny - 1
            gr[i, j] = (px[im, j] - px[i, j]) + (py[i, jm] - py[i, j])
    return value, grad
