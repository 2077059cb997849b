# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py`` (same precision)."""

import numpy as np

from libc.math cimport fabsl


def cauchy2d(s, t, Py_ssize_t n):
    cdef const double[:, ::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[:, ::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t ds = sv.shape[1], dt = tv.shape[1]
    out = np.zeros((n, ds + dt - 1))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, p, q
    cdef double x
    for i in range(n):
        for j in range(i + 1):
            for p in range(ds):
                x = sv[j, p]
                if x == 0.0:
                    continue
                for q in range(dt):
                    ov[i, p + q] += x * tv[i - j, q]
    return out


ctypedef long double real


cdef inline void _tmul_acc(real[:, ::1] out, const real[:, ::1] s, real[:, ::1] t,
                           Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, j, e
    for i in range(n):
        for j in range(i + 1):
            for e in range(m):
                out[i, e] += s[j, e] * t[i - j, e]


cdef void _pair_step(const real[:, ::1] x0, const real[:, ::1] y0,
                     const real[:, ::1] p0, const real[:, ::1] q0,
                     real[:, ::1] x, real[:, ::1] y,
                     real[:, ::1] xn, real[:, ::1] yn,
                     Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    # xn = x0*x + x' + q0*y ; yn = y0*x + y' + p0*y
    cdef Py_ssize_t i, e
    for i in range(n):
        for e in range(m):
            xn[i, e] = (i + 1) * x[i + 1, e]
            yn[i, e] = (i + 1) * y[i + 1, e]
    _tmul_acc(xn, x0, x, n, m)
    _tmul_acc(xn, q0, y, n, m)
    _tmul_acc(yn, y0, x, n, m)
    _tmul_acc(yn, p0, y, n, m)


cdef void _normalize(real[:, ::1] x, real[:, ::1] y, Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, e
    cdef real big, v
    for e in range(m):
        big = 0.0
        for i in range(n):
            v = fabsl(x[i, e])
            if v > big:
                big = v
            v = fabsl(y[i, e])
            if v > big:
                big = v
        if big == 0.0:
            continue
        big = 1.0 / big
        for i in range(n):
            x[i, e] *= big
            y[i, e] *= big


def level_values(a0, b0, c0, d0, Py_ssize_t n_levels, bint normalize=True):
    cdef const real[:, ::1] A0 = np.ascontiguousarray(a0, dtype=np.longdouble)
    cdef const real[:, ::1] B0 = np.ascontiguousarray(b0, dtype=np.longdouble)
    cdef const real[:, ::1] C0 = np.ascontiguousarray(c0, dtype=np.longdouble)
    cdef const real[:, ::1] D0 = np.ascontiguousarray(d0, dtype=np.longdouble)
    cdef Py_ssize_t size = A0.shape[0], m = A0.shape[1]
    if n_levels > size - 1:
        raise ValueError(f"need series order >= {n_levels}, have {size - 1}")
    out = np.empty((4, n_levels + 1, m), dtype=np.longdouble)
    cdef real[:, :, ::1] ov = out
    work = np.zeros((8, size, m), dtype=np.longdouble)
    cdef real[:, ::1] a = work[0], b = work[1], c = work[2], d = work[3]
    cdef real[:, ::1] an = work[4], bn = work[5], cn = work[6], dn = work[7]
    cdef real[:, ::1] tmp
    cdef Py_ssize_t level, n, e
    a[:, :] = A0
    b[:, :] = B0
    c[:, :] = C0
    d[:, :] = D0
    for e in range(m):
        ov[0, 0, e] = a[0, e]
        ov[1, 0, e] = b[0, e]
        ov[2, 0, e] = c[0, e]
        ov[3, 0, e] = d[0, e]
    with nogil:
        for level in range(1, n_levels + 1):
            n = size - level
            _pair_step(A0, B0, C0, D0, a, b, an, bn, n, m)
            _pair_step(C0, D0, A0, B0, c, d, cn, dn, n, m)
            if normalize:
                _normalize(an, bn, n, m)
                _normalize(cn, dn, n, m)
            tmp = a; a = an; an = tmp
            tmp = b; b = bn; bn = tmp
            tmp = c; c = cn; cn = tmp
            tmp = d; d = dn; dn = tmp
            for e in range(m):
                ov[0, level, e] = a[0, e]
                ov[1, level, e] = b[0, e]
                ov[2, level, e] = c[0, e]
                ov[3, level, e] = d[0, e]
    return out[0], out[1], out[2], out[3]
