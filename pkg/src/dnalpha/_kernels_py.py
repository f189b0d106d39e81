"""Pure-Python modal time-stepping kernels.

Reference implementation of the compiled ``_kernels`` extension; the two
must agree to round-off.  Every kernel works on one Fourier mode of the
interface, described by

    ms = rho_s h_s / dt^2,  mf = rho_f mu / dt^2,  beta

so that the structure operator is ``(ms + beta)`` and the fluid delivers an
interface pressure increment ``-mf * dt * (velocity jump)``.
"""

import math

import numpy as np

#: rescale the recurrence once the state exceeds this magnitude
RESCALE_AT = 1e150

SC_CONVERGED = 0
SC_MAX_ITER = 1
SC_BLOWUP = 2


def lc_run(ms, beta, mf, dt, alpha, eta0, eta1, eta2, w0, u0, u1, p0, forcing, n_steps):
    """Advance one mode ``n_steps`` LC-DN-alpha steps.

    ``eta0, eta1, eta2`` are eta^n, eta^{n-1}, eta^{n-2}; ``u0, u1`` the
    interface fluid velocity at n and n-1; ``p0`` the interface pressure.
    ``forcing[k]`` is the interface load at step k (length ``n_steps + 1``).

    Returns ``(eta, log_scale)``: the displacement at every step in a
    rescaled unit and the natural log of the scale, so that the physical
    value is ``eta * exp(log_scale)``.  Rescaling only happens when the
    state grows past ``RESCALE_AT``; the recurrence is affine in the state
    and the forcing, so the forcing is rescaled along with it.
    """
    eta = np.empty(n_steps + 1)
    log_scale = np.zeros(n_steps + 1)
    eta[0] = eta0
    c = 1.0 - alpha
    inv = 1.0
    ls = 0.0
    w = w0
    for n in range(n_steps):
        f_old = forcing[n] * inv
        f_new = forcing[n + 1] * inv
        u_new = c * u0 + alpha * w
        a = u0 + c * (u0 - u1)
        q = -mf * dt * (u_new - a)
        p_new = c * p0 + q
        rhs = (
            ms * (2.0 * eta0 - eta1)
            + f_new
            + c * (ms * (eta0 - 2.0 * eta1 + eta2) + beta * eta0 - p0 - f_old)
            + p_new
        )
        eta_new = rhs / (ms + beta)
        w = (eta_new - eta0) / dt
        eta2, eta1, eta0 = eta1, eta0, eta_new
        u1, u0 = u0, u_new
        p0 = p_new
        big = max(abs(eta0), abs(eta1), abs(eta2), abs(u0) * dt, abs(u1) * dt)
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
            ls += math.log(big)
        eta[n + 1] = eta0
        log_scale[n + 1] = ls
    return eta, log_scale


def mono_run(ms, beta, mf, dt, eta0, eta1, u0, forcing, n_steps):
    """Advance one mode of the monolithic benchmark; returns the displacement series."""
    eta = np.empty(n_steps + 1)
    eta[0] = eta0
    denom = ms + beta + mf
    for n in range(n_steps):
        eta_new = (ms * (2.0 * eta0 - eta1) + mf * (eta0 + dt * u0) + forcing[n + 1]) / denom
        u0 = (eta_new - eta0) / dt
        eta1, eta0 = eta0, eta_new
        eta[n + 1] = eta0
    return eta


def sc_iterate(ms, beta, mf, dt, alpha, eta_n, eta_nm1, u_n, f, tol, max_iter, floor, blowup, record):
    """Fixed-point SC-DN-alpha iteration for one mode and one time step.

    The iterate is ``eta_(k)``; the interface velocity is kept kinematic,
    ``w_(k) = (eta_(k) - eta_n) / dt``, and at the modal level the fluid
    velocity trace equals ``w``.  Convergence is declared when the Euclidean
    increment of the tuple (u-trace, p-trace, eta, w), relative to the
    tuple's norm, drops below ``tol``.  ``record`` (length ``max_iter + 1``)
    receives the iterates.

    Returns ``(eta, iterations, status)``.
    """
    sigma = ms + beta
    mult = (1.0 - alpha) * sigma - alpha * mf
    const = alpha * (ms * (2.0 * eta_n - eta_nm1) + f + mf * (eta_n + dt * u_n))
    eta = eta_n
    record[0] = eta
    ref = abs(eta_n)
    for k in range(1, max_iter + 1):
        eta_new = (mult * eta + const) / sigma
        record[k] = eta_new
        d = eta_new - eta
        w_new = (eta_new - eta_n) / dt
        p_new = -mf * (eta_new - eta_n - dt * u_n)
        num = math.sqrt(d * d * (1.0 + 2.0 / (dt * dt) + mf * mf))
        den = math.sqrt(eta_new * eta_new + 2.0 * w_new * w_new + p_new * p_new)
        inc = num / max(den, floor)
        eta = eta_new
        if k == 1:
            ref = max(ref, abs(eta_new))
        if inc < tol:
            return eta, k, SC_CONVERGED
        if not math.isfinite(eta) or abs(eta) > blowup * max(ref, floor):
            return eta, k, SC_BLOWUP
    return eta, max_iter, SC_MAX_ITER
