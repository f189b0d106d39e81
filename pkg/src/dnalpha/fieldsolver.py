"""Time-marching drivers on the structured grid.

The fluid is the inviscid, linearised channel flow of the benchmark: backward
Euler in time, incompressible, with the interface normal velocity as
Dirichlet datum.  Eliminating the face velocities through the momentum
equation leaves a pressure Poisson problem (see :mod:`dnalpha.grid`); the
membrane is a pointwise ring model solved in closed form node by node.

All three drivers share one Dirichlet-Neumann substep cycle, :meth:`FieldSolver.dn_cycle`:

1. interface fluid velocity ``u_S = w_(k) + C_int``,
2. fluid solve with momentum right-hand side ``rho_f u^n / dt + C_mom`` and
   divergence target ``C_div``,
3. structure solve ``sigma eta - p_S = rho_s h_s e / dt^2 + f + C_s``,
4. velocity update ``w = (eta - eta^n)/dt + C_w``.

The ``C_*`` are the relaxation correction terms.  Each carries an explicit
factor ``(1 - alpha)``, so ``alpha = 1`` recovers the standard DN cycle.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, assemble_laplacian
from .modal import BLOWUP, NORM_FLOOR, RunReport, detect_growth
from .params import AlphaStrategy, CouplingConfig, ParameterError, PhysicalParams, Scheme, TimeParams

__all__ = [
    "Corrections",
    "FieldSolver",
    "GridState",
    "Iterate",
    "LinearSolverError",
    "SCGridResult",
]

#: relative tolerance of the optional conjugate-gradient pressure solve
CG_RTOL = 1e-12
#: runs whose interface norm grows by this factor are stopped as unstable
RUN_BLOWUP = 1e100
#: MR stagnation: this many consecutive residual ratios above 1 - STALL_EPS
STALL_COUNT = 20
STALL_EPS = 1e-12


class LinearSolverError(RuntimeError):
    """Raised when a pressure solve fails or leaves a large residual."""


@dataclass(frozen=True)
class GridState:
    """Fluid and membrane state at time level n.

    ``u`` holds face velocities (x-faces then y-faces), ``u_sigma`` the fluid
    normal velocity on the interface nodes, ``p`` the vertex pressures.
    ``eta``/``w`` are membrane displacement and velocity on the interface
    nodes; ``eta_prev``, ``eta_prev2`` and ``u_prev`` are the older levels
    the LC corrections need.  ``f`` is the interface load applied at level n.
    """

    u: np.ndarray
    u_prev: np.ndarray
    p: np.ndarray
    u_sigma: np.ndarray
    eta: np.ndarray
    eta_prev: np.ndarray
    eta_prev2: np.ndarray
    w: np.ndarray
    f: np.ndarray
    step: int = 0
    t: float = 0.0

    @classmethod
    def at_rest(cls, grid: Grid, eta0=1e-3) -> "GridState":
        """Fluid at rest, membrane displaced by ``eta0``.

        A scalar ``eta0`` means ``eta0 * sin(pi x / L)``; otherwise one value
        per interface node.
        """
        n = grid.n_interface
        if np.ndim(eta0) == 0:
            eta = float(eta0) * grid.mode_shape(1)
        else:
            eta = np.array(eta0, dtype=float)
            if eta.shape != (n,):
                raise ParameterError(f"eta0 needs {n} interface values, got shape {eta.shape}")
        zf = np.zeros(grid.n_faces)
        zi = np.zeros(n)
        return cls(
            u=zf, u_prev=zf.copy(), p=np.zeros(grid.n_pressure), u_sigma=zi, eta=eta,
            eta_prev=eta.copy(), eta_prev2=eta.copy(), w=zi.copy(), f=zi.copy(),
        )

    def advance(self, it: "Iterate", f_new: np.ndarray, dt: float) -> "GridState":
        return GridState(
            u=it.u, u_prev=self.u, p=it.p, u_sigma=it.u_sigma, eta=it.eta,
            eta_prev=self.eta, eta_prev2=self.eta_prev, w=it.w, f=f_new,
            step=self.step + 1, t=self.t + dt,
        )

    @property
    def iterate(self) -> "Iterate":
        """The level-n unknowns, used as the initial coupling iterate."""
        return Iterate(self.u, self.p, self.u_sigma, self.eta, self.w)


@dataclass(frozen=True)
class Iterate:
    """Unknowns of one coupling iteration (or of a completed step)."""

    u: np.ndarray
    p: np.ndarray
    u_sigma: np.ndarray
    eta: np.ndarray
    w: np.ndarray

    def combine(self, other: "Iterate", a: float, b: float) -> "Iterate":
        """``a * self + b * other`` blockwise."""
        return Iterate(*(a * x + b * y for x, y in zip(self.blocks, other.blocks)))

    @property
    def blocks(self) -> tuple[np.ndarray, ...]:
        return (self.u, self.p, self.u_sigma, self.eta, self.w)


@dataclass(frozen=True)
class Corrections:
    """Relaxation correction terms entering the DN cycle right-hand sides.

    ``momentum`` is a force density on faces, ``divergence`` a flux per
    control volume, ``interface_velocity``, ``structure`` and ``velocity``
    live on interface nodes.
    """

    momentum: np.ndarray
    divergence: np.ndarray
    interface_velocity: np.ndarray
    structure: np.ndarray
    velocity: np.ndarray

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v), initial=0.0)) for v in
                   (self.momentum, self.divergence, self.interface_velocity, self.structure, self.velocity))


@dataclass
class SCGridResult:
    state: GridState
    iterations: int
    converged: bool
    diverged: bool = False
    stalled: bool = False
    increments: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    iterates: list[Iterate] | None = None

    @property
    def amplification_estimate(self) -> float:
        """Ratio of the last two absolute increments."""
        if len(self.steps) < 2 or self.steps[-2] == 0.0:
            return math.nan
        return self.steps[-1] / self.steps[-2]


class FieldSolver:
    """Grid, physics and time step bundled with their cached factorisations.

    Parameters
    ----------
    grid, params, time
        Discretisation and physics.  ``grid.L``/``grid.R`` must match
        ``params``.
    linear_solver : {"direct", "cg"}
        Sparse LU (default) or conjugate gradients at relative tolerance 1e-12.
    """

    def __init__(self, grid: Grid, params: PhysicalParams, time: TimeParams, linear_solver: str = "direct"):
        if not (math.isclose(grid.L, params.L) and math.isclose(grid.R, params.R)):
            raise ParameterError("grid dimensions do not match the physical parameters")
        if linear_solver not in ("direct", "cg"):
            raise ParameterError(f"linear_solver must be 'direct' or 'cg', got {linear_solver!r}")
        self.grid = grid
        self.params = params
        self.time = time
        self.linear_solver = linear_solver
        dt = time.dt
        self.sigma = params.surface_mass / dt**2 + params.beta
        self.ms = params.surface_mass / dt**2

    # -- linear algebra -----------------------------------------------------
    @cached_property
    def laplacian(self) -> sp.csc_matrix:
        return assemble_laplacian(self.grid)

    @cached_property
    def robin_matrix(self) -> sp.csc_matrix:
        """Pressure operator of the coupled step, structure eliminated on the interface."""
        g = self.grid
        coef = self.params.rho_f * g.hx / (self.sigma * self.time.dt**2)
        E = g.interface_injection
        return sp.csc_matrix(self.laplacian + coef * (E @ E.T))

    @cached_property
    def _lu_laplacian(self):
        return spla.splu(self.laplacian)

    @cached_property
    def _lu_robin(self):
        return spla.splu(self.robin_matrix)

    def _solve(self, which: str, rhs: np.ndarray) -> np.ndarray:
        A = self.laplacian if which == "laplacian" else self.robin_matrix
        if self.linear_solver == "direct":
            lu = self._lu_laplacian if which == "laplacian" else self._lu_robin
            x = lu.solve(rhs)
        else:
            x, info = spla.cg(A, rhs, rtol=CG_RTOL, atol=0.0, maxiter=20 * A.shape[0])
            if info != 0:
                raise LinearSolverError(f"CG did not converge (info={info})")
        if not np.all(np.isfinite(x)):
            raise LinearSolverError("non-finite pressure solution")
        scale = np.linalg.norm(rhs)
        if scale > 0:
            res = np.linalg.norm(A @ x - rhs) / scale
            if res > 1e-8:
                raise LinearSolverError(f"pressure solve residual {res:.3e}")
        return x

    # -- substeps -----------------------------------------------------------
    def forcing_at(self, forcing, t: float) -> np.ndarray:
        """Interface load at time t: None, scalar (times sin(pi x/L)) or one value per node."""
        n = self.grid.n_interface
        if forcing is None:
            return np.zeros(n)
        value = forcing(t) if callable(forcing) else forcing
        if np.ndim(value) == 0:
            return float(value) * self.grid.mode_shape(1)
        arr = np.asarray(value, dtype=float)
        if arr.shape != (n,):
            raise ParameterError(f"forcing must give {n} interface values, got shape {arr.shape}")
        return arr

    def fluid_substep(self, momentum: np.ndarray, u_sigma: np.ndarray, div_target: np.ndarray):
        """Incompressible backward-Euler fluid step with Dirichlet interface velocity.

        ``momentum`` is the face force density ``rho_f u^n/dt + C_mom``;
        ``div_target`` the required outward flux per control volume.
        Returns ``(u, p)``.
        """
        g = self.grid
        dt, rho_f = self.time.dt, self.params.rho_f
        a = (dt / rho_f) * momentum
        rhs = (rho_f / dt) * (div_target - g.divergence @ a - g.interface_flux(u_sigma))
        p = self._solve("laplacian", rhs)
        u = a - (dt / rho_f) * (g.gradient @ p)
        return u, p

    def structure_rhs(self, state: GridState, f_new: np.ndarray) -> np.ndarray:
        """Known part of the membrane equation, ``rho_s h_s (2 eta^n - eta^{n-1})/dt^2 + f``."""
        return self.ms * (2.0 * state.eta - state.eta_prev) + f_new

    def dn_cycle(self, state: GridState, it: Iterate, corr: Corrections, f_new: np.ndarray) -> Iterate:
        """One Dirichlet-Neumann substep cycle from iterate ``it`` with the given corrections.

        The fluid receives the structure velocity of ``it`` as Dirichlet
        datum; everything else restarts from level n.
        """
        g = self.grid
        dt, rho_f = self.time.dt, self.params.rho_f
        u_sigma = it.w + corr.interface_velocity
        # the standard DN cycle restarts the fluid from level n
        momentum = (rho_f / dt) * state.u + corr.momentum
        u, p = self.fluid_substep(momentum, u_sigma, corr.divergence)
        eta = (g.trace(p) + self.structure_rhs(state, f_new) + corr.structure) / self.sigma
        w = (eta - state.eta) / dt + corr.velocity
        return Iterate(u, p, u_sigma, eta, w)

    # -- correction terms ---------------------------------------------------
    def sc_correction_terms(self, state: GridState, it: Iterate, alpha: float, f_new: np.ndarray) -> Corrections:
        """Strongly coupled corrections built from the current iterate ``it``.

        Each term is ``(1 - alpha)`` times the residual of the corresponding
        equation at ``it`` (its standard-DN right-hand side removed), so the
        cycle realises ``X + alpha P^{-1}(b - A X)``.
        """
        g = self.grid
        dt, rho_f = self.time.dt, self.params.rho_f
        c = 1.0 - alpha
        mom = c * ((rho_f / dt) * (it.u - state.u) + g.gradient @ it.p)
        div = c * g.flux_divergence(it.u, it.u_sigma)
        vel_s = c * (it.u_sigma - it.w)
        struct = c * (self.sigma * it.eta - g.trace(it.p) - self.structure_rhs(state, f_new))
        vel = c * (it.w - (it.eta - state.eta) / dt)
        return Corrections(mom, div, vel_s, struct, vel)

    def lc_correction_terms(self, state: GridState, alpha: float) -> Corrections:
        """Loosely coupled corrections, built from levels n, n-1 and n-2 only."""
        g = self.grid
        dt, rho_f = self.time.dt, self.params.rho_f
        c = 1.0 - alpha
        mom = c * ((rho_f / dt) * (state.u - state.u_prev) + g.gradient @ state.p)
        div = c * g.flux_divergence(state.u, state.u_sigma)
        vel_s = c * (state.u_sigma - state.w)
        struct = c * (
            self.ms * (state.eta - 2.0 * state.eta_prev + state.eta_prev2)
            + self.params.beta * state.eta
            - g.trace(state.p)
            - state.f
        )
        vel = np.zeros_like(state.w)
        return Corrections(mom, div, vel_s, struct, vel)

    # -- drivers ------------------------------------------------------------
    def monolithic_step(self, state: GridState, forcing=None) -> GridState:
        """Exact solution of the coupled step through a Robin pressure problem."""
        g = self.grid
        dt, rho_f = self.time.dt, self.params.rho_f
        f_new = self.forcing_at(forcing, state.t + dt)
        srhs = self.structure_rhs(state, f_new)
        # w = (p_S + srhs)/(sigma dt) - eta^n/dt; the p_S part moves to the matrix
        c_vec = (srhs / self.sigma - state.eta) / dt
        a = state.u
        rhs = (rho_f / dt) * (-(g.divergence @ a) - g.interface_flux(c_vec))
        p = self._solve("robin", rhs)
        eta = (g.trace(p) + srhs) / self.sigma
        w = (eta - state.eta) / dt
        u = a - (dt / rho_f) * (g.gradient @ p)
        return state.advance(Iterate(u, p, w, eta, w), f_new, dt)

    def lc_step(self, state: GridState, alpha: float, forcing=None) -> GridState:
        """One explicit LC-DN-alpha step: a single fluid and a single structure solve."""
        if not alpha > 0:
            raise ParameterError(f"alpha must be > 0, got {alpha!r}")
        dt = self.time.dt
        f_new = self.forcing_at(forcing, state.t + dt)
        it = self.dn_cycle(state, state.iterate, self.lc_correction_terms(state, alpha), f_new)
        return state.advance(it, f_new, dt)

    @staticmethod
    def _tuple_increment(new: Iterate, old: Iterate, p_new: np.ndarray, p_old: np.ndarray) -> tuple[float, float]:
        """Absolute and relative increment of the interface tuple (u_S, p_S, eta, w)."""
        d = np.concatenate([new.u_sigma - old.u_sigma, p_new - p_old, new.eta - old.eta, new.w - old.w])
        ref = np.concatenate([new.u_sigma, p_new, new.eta, new.w])
        step = float(np.linalg.norm(d))
        return step, step / max(float(np.linalg.norm(ref)), NORM_FLOOR)

    def sc_step(
        self,
        state: GridState,
        strategy: AlphaStrategy,
        cfg: CouplingConfig,
        forcing=None,
        *,
        keep_iterates: bool = False,
    ) -> SCGridResult:
        """Sub-iterate one SC-DN-alpha time step.

        Starts from the level-n unknowns and repeats the DN cycle until the
        relative increment of the interface tuple (u_S, p_S, eta, w) drops
        below ``cfg.tol``.  With the Minimum-Residual strategy each step
        length is the residual-norm minimiser along the DN correction;
        after a stall the fixed fallback ``strategy.value`` takes over.
        On failure the returned state is the unchanged level n.
        """
        g = self.grid
        dt = self.time.dt
        f_new = self.forcing_at(forcing, state.t + dt)
        it = state.iterate
        res = SCGridResult(state, 0, False)
        if keep_iterates:
            res.iterates = [it]
        system = None
        mr = strategy.kind == "mr"
        if mr:
            from .blockengine import assemble_block_system

            system = assemble_block_system(self, state, f_new)
            r_norm = system.residual_norm(it)
            stall = 0
        ref = max(float(np.max(np.abs(state.eta))), NORM_FLOOR)
        for k in range(1, cfg.max_iter + 1):
            if mr:
                trial = self.dn_cycle(state, it, self.sc_correction_terms(state, it, 1.0, f_new), f_new)
                z = trial.combine(it, 1.0, -1.0)
                alpha = system.minimum_residual_alpha(it, z)
                if not math.isfinite(alpha) or alpha == 0.0:
                    alpha = strategy.value
                new = it.combine(z, 1.0, alpha)
                new_norm = system.residual_norm(new)
                stall = stall + 1 if new_norm > (1.0 - STALL_EPS) * r_norm else 0
                r_norm = new_norm
                res.residuals.append(new_norm)
                if stall >= STALL_COUNT:
                    mr = False
                    res.stalled = True
            else:
                alpha = strategy.value
                new = self.dn_cycle(state, it, self.sc_correction_terms(state, it, alpha, f_new), f_new)
            res.alphas.append(alpha)
            step, inc = self._tuple_increment(new, it, g.trace(new.p), g.trace(it.p))
            res.increments.append(inc)
            res.steps.append(step)
            it = new
            if keep_iterates:
                res.iterates.append(it)
            if inc < cfg.tol:
                res.state = state.advance(it, f_new, dt)
                res.iterations = k
                res.converged = True
                return res
            big = float(np.max(np.abs(it.eta)))
            if not math.isfinite(big) or big > BLOWUP * ref:
                res.iterations = k
                res.diverged = True
                return res
        res.iterations = cfg.max_iter
        res.diverged = True
        return res

    # -- time marching ------------------------------------------------------
    def interface_norm(self, eta: np.ndarray) -> float:
        return float(math.sqrt(self.grid.hx * np.dot(eta, eta)))

    def run(
        self,
        scheme: Scheme,
        *,
        alpha: float | None = None,
        strategy: AlphaStrategy | None = None,
        cfg: CouplingConfig | None = None,
        n_steps: int | None = None,
        state: GridState | None = None,
        forcing=None,
        observer=None,
    ) -> tuple[RunReport, GridState]:
        """March ``n_steps`` steps and classify the interface displacement growth.

        ``report.series`` is the interface L2 norm of eta at every level;
        ``observer(state)``, if given, sees the initial and every new state.
        """
        n_steps = self.time.n_steps if n_steps is None else int(n_steps)
        state = GridState.at_rest(self.grid) if state is None else state
        if scheme is not Scheme.MONOLITHIC and alpha is None and strategy is None:
            raise ParameterError(f"{scheme.value} runs need alpha")
        if scheme is Scheme.SC_DN_ALPHA:
            strategy = strategy or AlphaStrategy.fixed(alpha)
            cfg = cfg or CouplingConfig()
        report = RunReport(scheme=scheme.value, level="grid", alpha=alpha)
        t0 = _time.perf_counter()
        norms = [self.interface_norm(state.eta)]
        start = max(norms[0], NORM_FLOOR)
        if observer is not None:
            observer(state)
        for n in range(n_steps):
            if scheme is Scheme.MONOLITHIC:
                state = self.monolithic_step(state, forcing)
            elif scheme is Scheme.LC_DN_ALPHA:
                state = self.lc_step(state, alpha, forcing)
            else:
                r = self.sc_step(state, strategy, cfg, forcing)
                report.iterations.append(r.iterations)
                report.residuals.append(r.increments[-1] if r.increments else 0.0)
                if not r.converged:
                    report.diverged_step = n + 1
                    report.unstable = True
                    report.growth_factor = r.amplification_estimate
                    break
                state = r.state
            if observer is not None:
                observer(state)
            nrm = self.interface_norm(state.eta)
            norms.append(nrm)
            if not math.isfinite(nrm) or nrm > RUN_BLOWUP * start:
                report.diverged_step = n + 1
                report.unstable = True
                break
        series = np.asarray(norms)
        report.series = series
        if scheme is not Scheme.SC_DN_ALPHA or report.diverged_step is None:
            finite = series[np.isfinite(series)]
            if finite.size >= 50:
                unstable, growth = detect_growth(finite)
                report.unstable = report.unstable or unstable
                report.growth_factor = growth
            elif report.diverged_step is not None and finite.size >= 2 and finite[-2] > 0:
                report.growth_factor = float(finite[-1] / finite[-2])
        report.wall_time = _time.perf_counter() - t0
        return report, state
