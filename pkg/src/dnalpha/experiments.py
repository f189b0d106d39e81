"""Experiment orchestration and CSV emission.

Every experiment kind returns a header and a list of rows; :func:`write_csv`
prints floats in their shortest round-trip form so that identical
configurations give byte-identical files.  CSV columns per kind are listed
in :data:`HEADERS`.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    added_mass_eigenvalue,
    classify_roots,
    cubic_root_magnitudes,
    jury_test,
    lc_char_poly,
    lc_instability_predicate,
    lc_stability_bounds,
    root_magnitudes_batch,
    sc_amplification,
    sc_mode_bound,
    sc_optimal_alpha,
)
from .config import ExperimentSpec
from .grid import Grid, discrete_added_mass, discrete_added_mass_spectrum, write_snapshot
from .modal import ModalState, RunReport, run_modal
from .params import AlphaStrategy, CouplingConfig, ParameterError, PhysicalParams, Scheme, TimeParams

__all__ = [
    "EXIT_ERROR",
    "EXIT_OK",
    "EXIT_UNSTABLE",
    "HEADERS",
    "ExperimentResult",
    "RefinementError",
    "WORKERS_ENV",
    "format_value",
    "make_forcing",
    "refine_study",
    "run_experiment",
    "worker_count",
    "write_csv",
]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSTABLE = 2

#: environment variable sizing the sweep worker pool
WORKERS_ENV = "DNALPHA_WORKERS"

#: relative band around |root| = 1 treated as marginal in jury sampling
JURY_BAND = 1e-9

HEADERS = {
    "eigs": ("mode", "mu", "mu_grid", "mu_grid_closed_form", "rel_error"),
    "bounds": ("mode", "mu", "sc_alpha_max", "sc_alpha_opt", "sc_amplification", "lc_alpha_bar",
               "lc_predicate", "lc_max_root", "jury_stable"),
    "jury": ("sample", "rho_f", "rho_s", "h_s", "beta", "dt", "alpha", "mode", "mu",
             "jury_stable", "max_root", "root_class", "agree"),
    "simulate": ("step", "t", "eta", "eta_norm", "iterations", "residual"),
    "sweep": ("param", "value", "scheme", "level", "unstable", "growth_factor",
              "mean_iterations", "max_iterations", "diverged_step"),
    "richardson": ("iteration", "alpha", "residual", "relative_residual", "increment"),
    "refine": ("dt", "error", "order"),
}


class RefinementError(RuntimeError):
    """A refinement run turned unstable; ``dt`` names the offending step."""

    def __init__(self, dt: float, message: str):
        self.dt = dt
        super().__init__(message)


@dataclass
class ExperimentResult:
    kind: str
    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    exit_code: int = EXIT_OK
    summary: str = ""


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(result: ExperimentResult, target=None) -> str:
    """Render the result as CSV; write it to ``target`` (a path) if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.header)
    for row in result.rows:
        w.writerow([format_value(v) for v in row])
    text = buf.getvalue()
    if target is not None:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ParameterError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


# -- helpers ---------------------------------------------------------------
class _Load:
    """Picklable interface load profile (scalar, mode-1 amplitude)."""

    def __init__(self, kind: str, amplitude: float, dt: float, frequency: float):
        self.kind, self.amplitude, self.dt, self.frequency = kind, amplitude, dt, frequency

    def __call__(self, t: float) -> float:
        n = round(t / self.dt)
        if self.kind == "impulse":
            return self.amplitude if n == 1 else 0.0
        if self.kind == "doublet":
            return {1: self.amplitude, 2: -self.amplitude}.get(n, 0.0)
        return self.amplitude * math.sin(math.pi * self.frequency * t) ** 2


def make_forcing(values: dict, dt: float):
    """Load profile from config values, or ``None`` for an unloaded run.

    ``impulse`` loads the first step, ``doublet`` loads the first step and
    unloads the second (zero net momentum), ``pulse`` is the smooth
    ``A sin^2(pi f t)``.
    """
    kind = values["forcing"]
    if kind == "none":
        return None
    return _Load(kind, values["forcing_amplitude"], dt, values["forcing_frequency"])


def _n_steps(values: dict, time: TimeParams) -> int:
    return values["n_steps"] or time.n_steps


def _grid(values: dict, params: PhysicalParams) -> Grid:
    return Grid(values["nx"], values["ny"], params.L, params.R)


def _spectrum(values: dict, params: PhysicalParams, n: int) -> np.ndarray:
    if values["level"] == "grid":
        return discrete_added_mass_spectrum(_grid(values, params), n)
    return np.array([added_mass_eigenvalue(i, params.L, params.R) for i in range(1, n + 1)])


def _strategy(values: dict) -> AlphaStrategy:
    if values["alpha_strategy"] == "mr":
        return AlphaStrategy.minimum_residual(values["alpha"])
    return AlphaStrategy.fixed(values["alpha"])


def simulate(values: dict, params: PhysicalParams, time: TimeParams, cfg: CouplingConfig, observer=None):
    """Run one simulation; returns ``(report, per-step rows)``."""
    from .fieldsolver import FieldSolver, GridState

    scheme = Scheme.parse(values["scheme"])
    n_steps = _n_steps(values, time)
    forcing = make_forcing(values, time.dt)
    alpha = values["alpha"]
    rows: list[tuple] = []
    if values["level"] == "modal":
        mode = values["mode"]
        mu = added_mass_eigenvalue(mode, params.L, params.R)
        report = run_modal(scheme, mu, params, time, alpha=alpha, cfg=cfg, n_steps=n_steps,
                           state=ModalState.at_rest(values["eta0"]), forcing=forcing)
        with np.errstate(over="ignore", invalid="ignore"):
            eta = report.series * np.exp(report.series_log_scale)
        for k, e in enumerate(eta):
            it = report.iterations[k - 1] if 0 < k <= len(report.iterations) else 0
            res = report.residuals[k - 1] if 0 < k <= len(report.residuals) else 0.0
            rows.append((k, k * time.dt, float(e), abs(float(e)), it, res))
        return report, rows, None
    grid = _grid(values, params)
    solver = FieldSolver(grid, params, time, linear_solver=values["linear_solver"])
    modes = []

    def watch(state):
        modes.append(grid.project(state.eta, 1))
        if observer is not None:
            observer(state)

    report, final = solver.run(
        scheme, alpha=alpha, strategy=_strategy(values) if scheme is Scheme.SC_DN_ALPHA else None,
        cfg=cfg, n_steps=n_steps, state=GridState.at_rest(grid, values["eta0"]), forcing=forcing,
        observer=watch,
    )
    for k, (e, nrm) in enumerate(zip(modes, report.series)):
        it = report.iterations[k - 1] if 0 < k <= len(report.iterations) else 0
        res = report.residuals[k - 1] if 0 < k <= len(report.residuals) else 0.0
        rows.append((k, k * time.dt, float(e), float(nrm), it, res))
    return report, rows, (grid, final)


# -- experiment kinds -------------------------------------------------------
def _eigs(spec, params, time, cfg) -> ExperimentResult:
    v = spec.values
    grid = _grid(v, params)
    n = min(v["n_modes"], grid.n_interface)
    numeric = discrete_added_mass(grid).eigenvalues[:n]
    closed = discrete_added_mass_spectrum(grid, n)
    res = ExperimentResult("eigs", HEADERS["eigs"])
    for i in range(1, n + 1):
        mu = added_mass_eigenvalue(i, params.L, params.R)
        res.rows.append((i, mu, float(numeric[i - 1]), float(closed[i - 1]), abs(numeric[i - 1] - mu) / mu))
    return res


def _bounds(spec, params, time, cfg) -> ExperimentResult:
    v = spec.values
    n = v["n_modes"]
    alpha = v["alpha"]
    spectrum = _spectrum(v, params, n)
    lcb = lc_stability_bounds(params, time, spectrum=spectrum)
    res = ExperimentResult("bounds", HEADERS["bounds"])
    for i, mu in enumerate(spectrum, start=1):
        coeffs = lc_char_poly(alpha, i, params, time, mu=float(mu))
        pred = lc_instability_predicate(alpha, float(mu), params, time) if alpha <= 1.0 else None
        res.rows.append((
            i, float(mu), sc_mode_bound(mu, params, time), sc_optimal_alpha(mu, params, time),
            sc_amplification(alpha, float(mu), params, time), lcb.alpha_bar, pred,
            cubic_root_magnitudes(coeffs)[0], jury_test(coeffs).stable,
        ))
    return res


def jury_samples(n_samples: int, seed: int, params: PhysicalParams, n_modes: int = 5):
    """Random parameter points around ``params`` (log-uniform over decades)."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_samples):
        p = params.with_(
            rho_f=float(params.rho_f * 10 ** rng.uniform(-1, 1)),
            rho_s=float(params.rho_s * 10 ** rng.uniform(-2, 1)),
            h_s=float(params.h_s * 10 ** rng.uniform(-1, 0.5)),
            beta=float(params.beta * 10 ** rng.uniform(-3, 1)),
        )
        dt = float(10 ** rng.uniform(-5, -2))
        alpha = float(rng.uniform(0.005, 1.0))
        mode = int(rng.integers(1, n_modes + 1))
        out.append((k, p, dt, alpha, mode))
    return out


def _jury(spec, params, time, cfg) -> ExperimentResult:
    v = spec.values
    res = ExperimentResult("jury", HEADERS["jury"])
    disagreements = 0
    for k, p, dt, alpha, mode in jury_samples(v["n_samples"], v["seed"], params, v["n_modes"]):
        t = TimeParams(dt=dt)
        mu = added_mass_eigenvalue(mode, p.L, p.R)
        coeffs = lc_char_poly(alpha, mode, p, t, mu=mu)
        stable = jury_test(coeffs).stable
        top = cubic_root_magnitudes(coeffs)[0]
        cls = classify_roots(top, band=JURY_BAND)
        agree = cls == "marginal" or (cls == "stable") == stable
        disagreements += not agree
        res.rows.append((k, p.rho_f, p.rho_s, p.h_s, p.beta, dt, alpha, mode, mu, stable, top, cls, agree))
    res.summary = f"{len(res.rows)} samples, {disagreements} non-marginal disagreements"
    if disagreements:
        res.exit_code = EXIT_ERROR
    return res


def _simulate(spec, params, time, cfg) -> ExperimentResult:
    v = spec.values
    report, rows, grid_final = simulate(v, params, time, cfg)
    res = ExperimentResult("simulate", HEADERS["simulate"], rows)
    if v["snapshot"] and grid_final is not None:
        grid, final = grid_final
        write_snapshot(v["snapshot"], grid, grid.node_field(final.p), final.t)
    res.summary = (
        f"{report.scheme}/{report.level}: growth factor {report.growth_factor:.6g}, "
        f"{'unstable' if report.unstable else 'stable'}"
    )
    res.exit_code = EXIT_UNSTABLE if report.unstable else EXIT_OK
    return res


def _sweep_point(args) -> tuple:
    values, param, value = args
    from .config import build

    entries = {k: (val, 0) for k, val in values.items()}
    entries[param] = (value, 0)
    params, time, cfg, spec = build("simulate", entries)
    report, _, _ = simulate(spec.values, params, time, cfg)
    iters = report.iterations
    return (
        param, value, report.scheme, report.level, report.unstable, report.growth_factor,
        report.mean_iterations if iters else None, max(iters) if iters else None, report.diverged_step,
    )


def run_sweep(spec: ExperimentSpec, workers: int | None = None) -> ExperimentResult:
    """Simulate every point of the sweep axis; rows follow the axis order."""
    axis = spec.sweep
    jobs = [(dict(spec.values), axis.param, x) for x in axis.values()]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    res = ExperimentResult("sweep", HEADERS["sweep"], rows)
    res.summary = f"{len(rows)} points, {sum(bool(r[4]) for r in rows)} unstable"
    return res


def _richardson(spec, params, time, cfg) -> ExperimentResult:
    from .blockengine import Preconditioner, assemble_block_system, certify_equivalence, richardson_iterate
    from .fieldsolver import FieldSolver, GridState

    v = spec.values
    grid = _grid(v, params)
    solver = FieldSolver(grid, params, time, linear_solver=v["linear_solver"])
    state = GridState.at_rest(grid, v["eta0"])
    forcing = make_forcing(v, time.dt)
    f_new = solver.forcing_at(forcing, time.dt)
    system = assemble_block_system(solver, state, f_new)
    r = richardson_iterate(system, Preconditioner(system), system.pack(state.iterate), _strategy(v), cfg)
    bnorm = float(np.linalg.norm(system.rhs)) or 1.0
    res = ExperimentResult("richardson", HEADERS["richardson"])
    res.rows.append((0, None, r.residuals[0], r.residuals[0] / bnorm, None))
    for k in range(1, r.iterations + 1):
        res.rows.append((k, r.alphas[k - 1], r.residuals[k], r.residuals[k] / bnorm, r.increments[k - 1]))
    cert = certify_equivalence(solver, state, v["alpha"], min(20, cfg.max_iter), forcing=forcing)
    res.summary = (
        f"status {r.status} after {r.iterations} iterations"
        f"{' (fell back to fixed alpha)' if r.fell_back else ''}; "
        f"Richardson vs DN deviation {cert.max_deviation:.3e}"
    )
    if not r.converged:
        res.exit_code = EXIT_ERROR
    return res


def _final_interface(values, params, time, scheme: Scheme, alpha, cfg, dt: float) -> tuple[np.ndarray, float, RunReport]:
    """Interface displacement at ``t_final`` and the L2 weight of its norm."""
    t = time.with_(dt=dt)
    n = round(t.t_final / dt)
    if not math.isclose(n * dt, t.t_final, rel_tol=1e-9, abs_tol=1e-15):
        raise ParameterError(f"t_final={t.t_final} is not a multiple of dt={dt}")
    vals = {**values, "n_steps": n}
    vals["scheme"] = scheme.value
    vals["alpha"] = alpha
    report, rows, grid_final = simulate(vals, params, t, cfg)
    if grid_final is None:
        return np.array([rows[-1][2]]), 1.0, report
    grid, final = grid_final
    return final.eta, grid.hx, report


def _lc_max_root(values: dict, params: PhysicalParams, alpha: float, dt: float) -> float:
    """Largest LC characteristic root over the spectrum the run evolves."""
    if values["level"] == "grid":
        mus = discrete_added_mass_spectrum(_grid(values, params))
    else:
        mus = [added_mass_eigenvalue(values["mode"], params.L, params.R)]
    t = TimeParams(dt=dt)
    coeffs = np.array([lc_char_poly(alpha, 1, params, t, mu=float(mu)) for mu in mus])
    return float(root_magnitudes_batch(coeffs)[:, 0].max())


def refine_study(spec: ExperimentSpec, params: PhysicalParams, time: TimeParams, cfg: CouplingConfig) -> ExperimentResult:
    """Interface error at ``t_final`` against the monolithic scheme, per time step.

    ``reference = same`` compares with the monolithic run at the same dt
    (splitting error); ``fine`` with one monolithic run at the finest dt / 8
    (total time error).  An unstable run aborts the study: an LC run is
    unstable when any mode of its spectrum has a characteristic root
    outside the unit disk, an SC run when a step fails to converge.  Growth
    of the (forced) trajectory itself is not used, since a rising load is
    not an instability.
    """
    v = spec.values
    scheme = Scheme.parse(v["scheme"])
    dts = sorted(v["dt_list"], reverse=True)
    res = ExperimentResult("refine", HEADERS["refine"])
    fine = None
    if v["reference"] == "fine":
        fine, _, _ = _final_interface(v, params, time, Scheme.MONOLITHIC, v["alpha"], cfg, dts[-1] / 8)
    errors = []
    for dt in dts:
        if scheme is Scheme.LC_DN_ALPHA:
            top = _lc_max_root(v, params, v["alpha"], dt)
            if top > 1.0 + JURY_BAND:
                raise RefinementError(dt, f"lc scheme unstable at dt={dt!r} (largest root {top:.6g})")
        eta, weight, report = _final_interface(v, params, time, scheme, v["alpha"], cfg, dt)
        if report.diverged_step is not None or not np.all(np.isfinite(eta)):
            raise RefinementError(dt, f"{scheme.value} run failed at dt={dt!r}, step {report.diverged_step} "
                                      f"(growth factor {report.growth_factor:.6g})")
        ref = fine
        if ref is None:
            ref, _, _ = _final_interface(v, params, time, Scheme.MONOLITHIC, v["alpha"], cfg, dt)
        err = float(math.sqrt(weight * np.sum((eta - ref) ** 2)))
        order = None
        if errors and err > 0 and errors[-1][1] > 0:
            order = math.log(errors[-1][1] / err) / math.log(errors[-1][0] / dt)
        errors.append((dt, err))
        res.rows.append((dt, err, order))
    orders = [r[2] for r in res.rows if r[2] is not None]
    res.summary = f"observed orders: {', '.join(f'{o:.3f}' for o in orders)}"
    return res


_RUNNERS = {
    "eigs": _eigs,
    "bounds": _bounds,
    "jury": _jury,
    "simulate": _simulate,
    "richardson": _richardson,
}


def run_experiment(spec: ExperimentSpec, params: PhysicalParams, time: TimeParams, cfg: CouplingConfig) -> ExperimentResult:
    """Dispatch one experiment.  Raises on invalid input; instability is an exit code."""
    if spec.kind == "sweep":
        return run_sweep(spec)
    if spec.kind == "refine":
        try:
            return refine_study(spec, params, time, cfg)
        except RefinementError as exc:
            res = ExperimentResult("refine", HEADERS["refine"], exit_code=EXIT_UNSTABLE, summary=str(exc))
            return res
    return _RUNNERS[spec.kind](spec, params, time, cfg)
