# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in `_kernels_py`.

Same signatures, same draw-consumption order; selected by `panelboot._backend`.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


cdef inline double _sig(double a) nogil:
    cdef double e
    if a >= 0.0:
        return 1.0 / (1.0 + exp(-a))
    e = exp(a)
    return e / (1.0 + e)


cdef inline double _sp(double a) nogil:
    # log(1 + e^a)
    if a > 0.0:
        return a + log1p(exp(-a))
    return log1p(exp(a))


def nm_blocks(const double[:, ::1] y, const double[::1] eta, double phi):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1]
    ll_np = np.empty(n); sp_np = np.empty(n); se_np = np.empty(n)
    hpp_np = np.empty(n); hpe_np = np.empty(n); hee_np = np.empty(n)
    cdef double[::1] ll = ll_np, sp = sp_np, se = se_np
    cdef double[::1] hpp = hpp_np, hpe = hpe_np, hee = hee_np
    cdef Py_ssize_t i, t
    cdef double r, sr, sr2, lphi = log(phi), phi2 = phi * phi
    with nogil:
        for i in range(n):
            sr = 0.0; sr2 = 0.0
            for t in range(m):
                r = y[i, t] - eta[i]
                sr += r
                sr2 += r * r
            ll[i] = -0.5 * m * (LOG_2PI + lphi) - sr2 / (2.0 * phi)
            se[i] = sr / phi
            sp[i] = -m / (2.0 * phi) + sr2 / (2.0 * phi2)
            hee[i] = -m / phi
            hpe[i] = -sr / phi2
            hpp[i] = m / (2.0 * phi2) - sr2 / (phi2 * phi)
    return ll_np, sp_np, se_np, hpp_np, hpe_np, hee_np


def dl_blocks(const double[:, ::1] y, const double[:, ::1] ylag, const double[::1] eta, double phi):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1]
    ll_np = np.empty(n); sp_np = np.empty(n); se_np = np.empty(n)
    hpp_np = np.empty(n); hpe_np = np.empty(n); hee_np = np.empty(n)
    cdef double[::1] ll = ll_np, sp = sp_np, se = se_np
    cdef double[::1] hpp = hpp_np, hpe = hpe_np, hee = hee_np
    cdef Py_ssize_t i, t
    cdef double a, pr, w, lag, s_ll, s_se, s_sp, s_ee, s_pe, s_pp
    with nogil:
        for i in range(n):
            s_ll = 0.0; s_se = 0.0; s_sp = 0.0
            s_ee = 0.0; s_pe = 0.0; s_pp = 0.0
            for t in range(m):
                lag = ylag[i, t]
                a = eta[i] + phi * lag
                pr = _sig(a)
                w = pr * (1.0 - pr)
                s_ll += y[i, t] * a - _sp(a)
                s_se += y[i, t] - pr
                s_sp += (y[i, t] - pr) * lag
                s_ee -= w
                s_pe -= w * lag
                s_pp -= w * lag * lag
            ll[i] = s_ll; se[i] = s_se; sp[i] = s_sp
            hee[i] = s_ee; hpe[i] = s_pe; hpp[i] = s_pp
    return ll_np, sp_np, se_np, hpp_np, hpe_np, hee_np


def dl_simulate_core(const double[::1] y0, const double[:, ::1] u, const double[::1] eta, double phi):
    cdef Py_ssize_t n = u.shape[0], m = u.shape[1]
    y_np = np.empty((n, m))
    cdef double[:, ::1] y = y_np
    cdef Py_ssize_t i, t
    cdef double lag, pr
    with nogil:
        for i in range(n):
            lag = y0[i]
            for t in range(m):
                pr = _sig(eta[i] + phi * lag)
                lag = 1.0 if u[i, t] < pr else 0.0
                y[i, t] = lag
    return y_np
