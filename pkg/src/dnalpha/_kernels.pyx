# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled modal time-stepping kernels (see ``_kernels_py`` for the reference)."""

import numpy as np

from libc.math cimport fabs, isfinite, log, sqrt

cdef double RESCALE_AT = 1e150

SC_CONVERGED = 0
SC_MAX_ITER = 1
SC_BLOWUP = 2


cdef inline double _max5(double a, double b, double c, double d, double e) nogil:
    cdef double m = a
    if b > m:
        m = b
    if c > m:
        m = c
    if d > m:
        m = d
    if e > m:
        m = e
    return m


def lc_run(double ms, double beta, double mf, double dt, double alpha,
           double eta0, double eta1, double eta2, double w0,
           double u0, double u1, double p0, forcing, Py_ssize_t n_steps):
    cdef double[::1] f = np.ascontiguousarray(forcing, dtype=np.float64)
    out = np.empty(n_steps + 1)
    scale = np.zeros(n_steps + 1)
    cdef double[::1] eta = out
    cdef double[::1] log_scale = scale
    cdef double c = 1.0 - alpha
    cdef double inv = 1.0, ls = 0.0, w = w0
    cdef double f_old, f_new, u_new, a, q, p_new, rhs, eta_new, big, s
    cdef Py_ssize_t n
    eta[0] = eta0
    with nogil:
        for n in range(n_steps):
            f_old = f[n] * inv
            f_new = f[n + 1] * inv
            u_new = c * u0 + alpha * w
            a = u0 + c * (u0 - u1)
            q = -mf * dt * (u_new - a)
            p_new = c * p0 + q
            rhs = (ms * (2.0 * eta0 - eta1) + f_new
                   + c * (ms * (eta0 - 2.0 * eta1 + eta2) + beta * eta0 - p0 - f_old)
                   + p_new)
            eta_new = rhs / (ms + beta)
            w = (eta_new - eta0) / dt
            eta2 = eta1
            eta1 = eta0
            eta0 = eta_new
            u1 = u0
            u0 = u_new
            p0 = p_new
            big = _max5(fabs(eta0), fabs(eta1), fabs(eta2), fabs(u0) * dt, fabs(u1) * dt)
            if big > RESCALE_AT:
                s = 1.0 / big
                eta0 *= s
                eta1 *= s
                eta2 *= s
                u0 *= s
                u1 *= s
                p0 *= s
                w *= s
                inv *= s
                ls += log(big)
            eta[n + 1] = eta0
            log_scale[n + 1] = ls
    return out, scale


def mono_run(double ms, double beta, double mf, double dt,
             double eta0, double eta1, double u0, forcing, Py_ssize_t n_steps):
    cdef double[::1] f = np.ascontiguousarray(forcing, dtype=np.float64)
    out = np.empty(n_steps + 1)
    cdef double[::1] eta = out
    cdef double denom = ms + beta + mf
    cdef double eta_new
    cdef Py_ssize_t n
    eta[0] = eta0
    with nogil:
        for n in range(n_steps):
            eta_new = (ms * (2.0 * eta0 - eta1) + mf * (eta0 + dt * u0) + f[n + 1]) / denom
            u0 = (eta_new - eta0) / dt
            eta1 = eta0
            eta0 = eta_new
            eta[n + 1] = eta0
    return out


def sc_iterate(double ms, double beta, double mf, double dt, double alpha,
               double eta_n, double eta_nm1, double u_n, double f,
               double tol, Py_ssize_t max_iter, double floor, double blowup, record):
    cdef double[::1] rec = record
    cdef double sigma = ms + beta
    cdef double mult = (1.0 - alpha) * sigma - alpha * mf
    cdef double const = alpha * (ms * (2.0 * eta_n - eta_nm1) + f + mf * (eta_n + dt * u_n))
    cdef double eta = eta_n, eta_new, d, w_new, p_new, num, den, inc
    cdef double ref = fabs(eta_n)
    cdef double wfac = 1.0 + 2.0 / (dt * dt) + mf * mf
    cdef Py_ssize_t k
    rec[0] = eta
    for k in range(1, max_iter + 1):
        eta_new = (mult * eta + const) / sigma
        rec[k] = eta_new
        d = eta_new - eta
        w_new = (eta_new - eta_n) / dt
        p_new = -mf * (eta_new - eta_n - dt * u_n)
        num = sqrt(d * d * wfac)
        den = sqrt(eta_new * eta_new + 2.0 * w_new * w_new + p_new * p_new)
        inc = num / (den if den > floor else floor)
        eta = eta_new
        if k == 1 and fabs(eta_new) > ref:
            ref = fabs(eta_new)
        if inc < tol:
            return eta, k, SC_CONVERGED
        if not isfinite(eta) or fabs(eta) > blowup * (ref if ref > floor else floor):
            return eta, k, SC_BLOWUP
    return eta, max_iter, SC_MAX_ITER
