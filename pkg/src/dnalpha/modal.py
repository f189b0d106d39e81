"""Per-mode simulators for the monolithic, SC-DN-alpha and LC-DN-alpha schemes.

At this level the added-mass operator is diagonal: each Fourier mode of the
interface evolves independently, and the fluid reduces to the scalar map

    interface pressure increment = -(rho_f mu / dt) * (normal velocity jump)

where ``mu`` is the mode's added-mass eigenvalue.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .params import CouplingConfig, ParameterError, PhysicalParams, Scheme, TimeParams

__all__ = [
    "ModalState",
    "RunReport",
    "SCModalResult",
    "detect_growth",
    "lc_modal_step",
    "monolithic_modal_step",
    "run_modal",
    "sc_modal_block_solve",
    "sc_modal_solve",
]

#: relative-increment normalisation floor
NORM_FLOOR = 1e-14
#: an iterate this many times larger than the start is declared divergent
BLOWUP = 1e12
#: growth factors above 1 + GROWTH_TOL are reported unstable
GROWTH_TOL = 1e-6


@dataclass(frozen=True)
class ModalState:
    """Time history of one interface mode.

    ``eta`` holds (eta^n, eta^{n-1}, eta^{n-2}) [cm]; ``u`` the fluid normal
    velocity on the interface at n and n-1 [cm/s]; ``w`` the structure
    velocity [cm/s]; ``p`` the interface pressure [dyne/cm^2]; ``f`` the
    external interface load applied at step n.
    """

    eta: tuple[float, float, float]
    w: float = 0.0
    u: tuple[float, float] = (0.0, 0.0)
    p: float = 0.0
    f: float = 0.0
    step: int = 0

    @classmethod
    def at_rest(cls, eta0: float) -> "ModalState":
        """Displaced but at rest: eta^{-1} = eta^{-2} = eta^0, zero velocities."""
        eta0 = float(eta0)
        return cls(eta=(eta0, eta0, eta0))

    def advance(self, eta_new: float, w_new: float, u_new: float, p_new: float, f_new: float) -> "ModalState":
        e0, e1, _ = self.eta
        return ModalState(
            eta=(eta_new, e0, e1),
            w=w_new,
            u=(u_new, self.u[0]),
            p=p_new,
            f=f_new,
            step=self.step + 1,
        )


def _mode_coefficients(mu: float, params: PhysicalParams, time: TimeParams) -> tuple[float, float, float]:
    dt2 = time.dt**2
    return params.surface_mass / dt2, params.beta, params.rho_f * mu / dt2


def monolithic_modal_step(
    state: ModalState, mu: float, params: PhysicalParams, time: TimeParams, forcing: float = 0.0
) -> ModalState:
    """Exact per-mode solution of one step of the coupled benchmark.

    Eliminating the pressure through the added-mass map and the velocity
    through the kinematic condition gives

        (rho_s h_s + beta dt^2 + rho_f mu) eta^{n+1}
            = rho_s h_s (2 eta^n - eta^{n-1}) + rho_f mu (eta^n + dt u^n) + dt^2 f
    """
    ms, beta, mf = _mode_coefficients(mu, params, time)
    dt = time.dt
    e0, e1, _ = state.eta
    u_n = state.u[0]
    eta_new = (ms * (2.0 * e0 - e1) + mf * (e0 + dt * u_n) + forcing) / (ms + beta + mf)
    w_new = (eta_new - e0) / dt
    p_new = -mf * dt * (w_new - u_n)
    return state.advance(eta_new, w_new, w_new, p_new, forcing)


@dataclass
class SCModalResult:
    state: ModalState
    iterations: int
    converged: bool
    iterates: np.ndarray
    amplification_estimate: float
    diverged: bool = False

    @property
    def error_ratios(self) -> np.ndarray:
        """Successive-error ratios |e_{k+1} / e_k| against the last iterate."""
        return _ratio_of_increments(self.iterates)


def _ratio_of_increments(iterates: np.ndarray) -> np.ndarray:
    d = np.diff(iterates)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(d[1:] / d[:-1])
    return r[np.isfinite(r)]


def sc_modal_solve(
    state: ModalState,
    mu: float,
    alpha: float,
    cfg: CouplingConfig,
    params: PhysicalParams,
    time: TimeParams,
    forcing: float = 0.0,
) -> SCModalResult:
    """Sub-iterate one time step of SC-DN-alpha for one mode.

    Starting from ``eta_(0) = eta^n`` the scalar fixed-point map

        (rho_s h_s/dt^2 + beta) eta_(k+1)
            = [(1 - alpha)(rho_s h_s/dt^2 + beta) - alpha rho_f mu/dt^2] eta_(k) + const

    is applied until the tuple increment drops below ``cfg.tol``.  The
    converged value is the monolithic step.  When the iteration does not
    converge the returned state is left at step n and ``diverged`` is set,
    with the empirical per-iteration ratio in ``amplification_estimate``.
    """
    if not alpha > 0:
        raise ParameterError(f"alpha must be > 0, got {alpha!r}")
    ms, beta, mf = _mode_coefficients(mu, params, time)
    dt = time.dt
    e0, e1, _ = state.eta
    u_n = state.u[0]
    record = np.zeros(cfg.max_iter + 1)
    eta, k, status = kernels.sc_iterate(
        ms, beta, mf, dt, alpha, e0, e1, u_n, forcing, cfg.tol, cfg.max_iter, NORM_FLOOR, BLOWUP, record
    )
    iterates = record[: k + 1]
    ratios = _ratio_of_increments(iterates)
    estimate = float(ratios[-1]) if ratios.size else 0.0
    if status != kernels.SC_CONVERGED:
        return SCModalResult(state, k, False, iterates, estimate, diverged=True)
    w_new = (eta - e0) / dt
    p_new = -mf * dt * (w_new - u_n)
    new_state = state.advance(eta, w_new, w_new, p_new, forcing)
    return SCModalResult(new_state, k, True, iterates, estimate)


def sc_modal_block_solve(
    state: ModalState,
    mu: float,
    alpha: float,
    cfg: CouplingConfig,
    params: PhysicalParams,
    time: TimeParams,
    forcing: float = 0.0,
) -> SCModalResult:
    """SC-DN-alpha for one mode with the interface unknowns kept separate.

    Unknowns ``(u_S, p, eta, w)`` start at level n (``w_(0) = w^n``) and
    obey the relaxed block Gauss-Seidel sweep

        u_S <- (1-a) u_S + a w
        p   <- (1-a)(p + m u_S_old) + a m u^n - m u_S       m = rho_f mu / dt
        eta <- [(1-a)(sigma eta - p_old) + a g + p] / sigma
        w   <- (1-a)(w - (eta_old - eta^n)/dt) + (eta - eta^n)/dt

    which is the projection of the grid iteration onto one mode.  Its error
    has two rates: ``sc_amplification(alpha)`` and ``|1 - alpha|``; the
    scalar model :func:`sc_modal_solve` only carries the first.  Same
    stopping rule and divergence report as :func:`sc_modal_solve`.
    """
    if not alpha > 0:
        raise ParameterError(f"alpha must be > 0, got {alpha!r}")
    ms, beta, mf = _mode_coefficients(mu, params, time)
    dt = time.dt
    sigma = ms + beta
    m = mf * dt
    c = 1.0 - alpha
    e0, e1, _ = state.eta
    u_n = state.u[0]
    g = ms * (2.0 * e0 - e1) + forcing
    us, p, eta, w = u_n, state.p, e0, state.w
    record = [eta]
    ref = max(abs(e0), NORM_FLOOR)
    for k in range(1, cfg.max_iter + 1):
        us_new = c * us + alpha * w
        p_new = c * (p + m * us) + alpha * m * u_n - m * us_new
        eta_new = (c * (sigma * eta - p) + alpha * g + p_new) / sigma
        w_new = c * (w - (eta - e0) / dt) + (eta_new - e0) / dt
        d = math.sqrt((us_new - us) ** 2 + (p_new - p) ** 2 + (eta_new - eta) ** 2 + (w_new - w) ** 2)
        nrm = math.sqrt(us_new**2 + p_new**2 + eta_new**2 + w_new**2)
        us, p, eta, w = us_new, p_new, eta_new, w_new
        record.append(eta)
        if d / max(nrm, NORM_FLOOR) < cfg.tol:
            new_state = state.advance(eta, w, us, p, forcing)
            iterates = np.asarray(record)
            ratios = _ratio_of_increments(iterates)
            return SCModalResult(new_state, k, True, iterates, float(ratios[-1]) if ratios.size else 0.0)
        if not math.isfinite(eta) or abs(eta) > BLOWUP * ref:
            break
    iterates = np.asarray(record)
    ratios = _ratio_of_increments(iterates)
    return SCModalResult(state, len(record) - 1, False, iterates,
                         float(ratios[-1]) if ratios.size else 0.0, diverged=True)


def lc_modal_step(
    state: ModalState,
    mu: float,
    alpha: float,
    params: PhysicalParams,
    time: TimeParams,
    forcing: float = 0.0,
) -> ModalState:
    """One explicit LC-DN-alpha step for one mode.

    Fluid: the interface velocity is ``(1-alpha) u^n + alpha w^n`` and the
    momentum right-hand side carries ``(1-alpha)(u^n - u^{n-1})``; the
    pressure picks up ``(1-alpha) p^n``.  Structure: the BDF1 membrane with
    the ``(1-alpha)`` consistency correction built from eta^n..eta^{n-2}.
    """
    ms, beta, mf = _mode_coefficients(mu, params, time)
    dt = time.dt
    c = 1.0 - alpha
    e0, e1, e2 = state.eta
    u0, u1 = state.u
    u_new = c * u0 + alpha * state.w
    a = u0 + c * (u0 - u1)
    p_new = c * state.p - mf * dt * (u_new - a)
    rhs = (
        ms * (2.0 * e0 - e1)
        + forcing
        + c * (ms * (e0 - 2.0 * e1 + e2) + beta * e0 - state.p - state.f)
        + p_new
    )
    eta_new = rhs / (ms + beta)
    w_new = (eta_new - e0) / dt
    return state.advance(eta_new, w_new, u_new, p_new, forcing)


def detect_growth(series, log_scale=None, min_length: int = 50) -> tuple[bool, float]:
    """Estimate the asymptotic per-step growth factor of a sequence.

    The second half of the series is cut into windows; the log of the
    largest magnitude in each window is fitted with a straight line and the
    growth factor is ``exp(slope)``.  Window maxima make the fit insensitive
    to sign changes and to oscillating (complex-root) behaviour.

    ``log_scale`` is the per-entry log of a rescaling factor, as returned by
    the long-run kernels, so that magnitudes far beyond the float range can
    be analysed.  Returns ``(unstable, growth_factor)``.
    """
    x = np.abs(np.asarray(series, dtype=float))
    if x.size < min_length:
        raise ValueError(f"need at least {min_length} samples, got {x.size}")
    if not np.any(x > 0):
        return False, 1.0
    with np.errstate(divide="ignore"):
        logmag = np.log(x)
    if log_scale is not None:
        logmag = logmag + np.asarray(log_scale, dtype=float)
    tail = logmag[x.size // 2 :]
    width = max(5, tail.size // 10)
    n_win = tail.size // width
    centers, peaks = [], []
    for j in range(n_win):
        chunk = tail[j * width : (j + 1) * width]
        if np.isfinite(chunk).any():
            k = int(np.nanargmax(np.where(np.isfinite(chunk), chunk, -np.inf)))
            centers.append(j * width + k)
            peaks.append(chunk[k])
    if len(peaks) < 2:
        return False, 1.0
    slope = np.polyfit(np.asarray(centers, float), np.asarray(peaks), 1)[0]
    growth = float(math.exp(slope))
    return growth > 1.0 + GROWTH_TOL, growth


@dataclass
class RunReport:
    """Outcome of a time-marching run, one row per step in ``iterations``/``residuals``."""

    scheme: str
    level: str
    alpha: float | None
    iterations: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    unstable: bool = False
    growth_factor: float = 1.0
    wall_time: float = 0.0
    diverged_step: int | None = None
    series: np.ndarray | None = None
    #: physical values are ``series * exp(series_log_scale)``
    series_log_scale: float = 0.0

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations)) if self.iterations else 0.0


def _forcing_array(forcing, n_steps: int, dt: float) -> np.ndarray:
    if forcing is None:
        return np.zeros(n_steps + 1)
    if callable(forcing):
        return np.array([float(forcing(k * dt)) for k in range(n_steps + 1)])
    arr = np.asarray(forcing, dtype=float)
    if arr.shape != (n_steps + 1,):
        raise ValueError(f"forcing must have length n_steps + 1 = {n_steps + 1}")
    return arr


def run_modal(
    scheme: Scheme,
    mu: float,
    params: PhysicalParams,
    time: TimeParams,
    *,
    alpha: float | None = None,
    cfg: CouplingConfig | None = None,
    n_steps: int | None = None,
    state: ModalState | None = None,
    forcing=None,
) -> RunReport:
    """March one mode for ``n_steps`` (default ``time.n_steps``) and classify growth.

    ``forcing`` is ``None``, a callable of time, or an array of loads per step.
    """
    n_steps = time.n_steps if n_steps is None else int(n_steps)
    state = ModalState.at_rest(1e-3) if state is None else state
    f = _forcing_array(forcing, n_steps, time.dt)
    ms, beta, mf = _mode_coefficients(mu, params, time)
    dt = time.dt
    t0 = _time.perf_counter()
    report = RunReport(scheme=scheme.value, level="modal", alpha=alpha)
    e0, e1, e2 = state.eta
    if scheme is Scheme.MONOLITHIC:
        eta = kernels.mono_run(ms, beta, mf, dt, e0, e1, state.u[0], f, n_steps)
        log_scale = None
    elif scheme is Scheme.LC_DN_ALPHA:
        if alpha is None:
            raise ParameterError("LC runs need alpha")
        eta, log_scale = kernels.lc_run(
            ms, beta, mf, dt, alpha, e0, e1, e2, state.w, state.u[0], state.u[1], state.p, f, n_steps
        )
    else:
        if alpha is None:
            raise ParameterError("SC runs need alpha")
        cfg = CouplingConfig() if cfg is None else cfg
        values = [e0]
        log_scale = None
        for n in range(n_steps):
            res = sc_modal_solve(state, mu, alpha, cfg, params, time, forcing=f[n + 1])
            report.iterations.append(res.iterations)
            iters = res.iterates
            report.residuals.append(float(abs(iters[-1] - iters[-2])) if iters.size > 1 else 0.0)
            if not res.converged:
                report.diverged_step = n + 1
                report.unstable = True
                report.growth_factor = res.amplification_estimate
                break
            state = res.state
            values.append(state.eta[0])
        eta = np.asarray(values)
    if log_scale is None:
        report.series = eta
    else:
        report.series = eta * np.exp(log_scale - log_scale[-1])
        report.series_log_scale = float(log_scale[-1])
    if report.diverged_step is None and eta.size >= 50:
        report.unstable, report.growth_factor = detect_growth(eta, log_scale)
    elif report.diverged_step is None:
        report.unstable = not np.all(np.isfinite(eta))
    report.wall_time = _time.perf_counter() - t0
    return report
