"""Closed-form spectral and stability analysis of the DN-alpha schemes.

Everything here is a pure function of its arguments.  The quantities are
per Fourier mode of the interface added-mass operator, whose eigenvalues
``mu_i`` have a closed form for the rectangular channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .params import ParameterError, PhysicalParams, TimeParams

__all__ = [
    "JuryVerdict",
    "LCStabilityBounds",
    "ModeAnalysis",
    "added_mass_eigenvalue",
    "added_mass_spectrum",
    "analyze_mode",
    "chi_at",
    "classify_roots",
    "cubic_root_magnitudes",
    "jury_test",
    "jury_test_batch",
    "lc_char_poly",
    "lc_instability_predicate",
    "lc_stability_bounds",
    "root_magnitudes_batch",
    "sc_alpha_bound",
    "sc_amplification",
    "sc_mode_bound",
    "sc_optimal_alpha",
]

#: default number of modes used when a bound is minimised over the spectrum
DEFAULT_N_MODES = 10
#: half-width of the band around |root| = 1 treated as marginal
ROOT_BAND = 1e-12


class DegeneratePolynomialError(ValueError):
    """Leading coefficient of a cubic is zero."""


def added_mass_eigenvalue(i: int, L: float, R: float) -> float:
    """Eigenvalue ``mu_i = L / (i pi tanh(i pi R / L))`` [cm] of the added-mass operator."""
    if int(i) != i or i < 1:
        raise ParameterError(f"mode index must be a positive integer, got {i!r}")
    if not (L > 0 and R > 0):
        raise ParameterError(f"channel dimensions must be positive, got L={L!r}, R={R!r}")
    k = i * math.pi / L
    return 1.0 / (k * math.tanh(k * R))


def added_mass_spectrum(n_modes: int, L: float, R: float) -> np.ndarray:
    return np.array([added_mass_eigenvalue(i, L, R) for i in range(1, n_modes + 1)])


def _mu(mode, params: PhysicalParams) -> float:
    # a ModeAnalysis carries its own eigenvalue; a bare number is taken as mu
    if isinstance(mode, ModeAnalysis):
        return mode.mu
    return float(mode)


def _structure_mass(params: PhysicalParams, time: TimeParams) -> float:
    # rho_s h_s + beta dt^2: the structure operator scaled by dt^2
    return params.surface_mass + params.beta * time.dt**2


def sc_amplification(alpha: float, mode, params: PhysicalParams, time: TimeParams) -> float:
    """Modulus of the SC-DN-alpha fixed-point multiplier for one mode.

    ``mode`` is a :class:`ModeAnalysis` or an added-mass eigenvalue ``mu``.
    The iteration contracts iff the value is below one.
    """
    mu = _mu(mode, params)
    s = _structure_mass(params, time)
    return abs((1.0 - alpha) * s - params.rho_f * alpha * mu) / s


def sc_mode_bound(mu: float, params: PhysicalParams, time: TimeParams) -> float:
    """Upper end of the convergent alpha interval for a single mode."""
    s = _structure_mass(params, time)
    return 2.0 * s / (s + params.rho_f * mu)


def sc_optimal_alpha(mu: float, params: PhysicalParams, time: TimeParams) -> float:
    """alpha at which the mode's multiplier vanishes (half the mode bound)."""
    s = _structure_mass(params, time)
    return s / (s + params.rho_f * mu)


def sc_alpha_bound(
    params: PhysicalParams,
    time: TimeParams,
    n_modes: int = DEFAULT_N_MODES,
    spectrum: Sequence[float] | None = None,
) -> float:
    """Largest alpha for which every mode in the spectrum converges.

    Since ``mu_i`` decreases with ``i`` the minimum is attained at the first
    mode; the explicit minimum is kept so that a user-supplied (discrete)
    spectrum is handled without assuming its ordering.
    """
    if n_modes < 1:
        raise ParameterError("n_modes must be >= 1")
    if spectrum is None:
        spectrum = added_mass_spectrum(n_modes, params.L, params.R)
    return min(sc_mode_bound(mu, params, time) for mu in spectrum)


def lc_char_poly(
    alpha: float,
    i: int,
    params: PhysicalParams,
    time: TimeParams,
    *,
    mu: float | None = None,
) -> tuple[float, float, float, float]:
    """Normalised characteristic cubic ``(a3, a2, a1, a0)`` of the LC-DN-alpha recurrence.

    The cubic is the characteristic polynomial of the one-step LC recurrence
    scaled by ``dt^2 / (rho_s h_s)``.  ``mu`` overrides the closed-form
    eigenvalue of mode ``i`` (e.g. with a discrete spectrum).

    The linear coefficient is ``3 - 2 alpha - 2 alpha m``: this is what the
    finite-difference recurrence produces and what makes ``Q(1) > 0`` for
    every ``alpha > 0``.
    """
    if mu is None:
        mu = added_mass_eigenvalue(i, params.L, params.R)
    m = params.rho_f * mu / params.surface_mass
    b = params.beta * time.dt**2 / params.surface_mass
    a3 = 1.0 + b
    a2 = -3.0 + alpha - (1.0 - alpha) * b + alpha * m
    a1 = 3.0 - 2.0 * alpha - 2.0 * alpha * m
    a0 = alpha * m - 1.0 + alpha
    return a3, a2, a1, a0


def chi_at(y: float, alpha: float, mu: float, params: PhysicalParams, time: TimeParams) -> float:
    """Unscaled characteristic polynomial evaluated at ``y`` [dyne/cm^3 per cm]."""
    a3, a2, a1, a0 = lc_char_poly(alpha, 1, params, time, mu=mu)
    scale = params.surface_mass / time.dt**2
    return scale * (((a3 * y + a2) * y + a1) * y + a0)


@dataclass(frozen=True)
class JuryVerdict:
    cond1: bool
    cond2: bool
    cond3: bool
    cond4: bool

    @property
    def stable(self) -> bool:
        return self.cond1 and self.cond2 and self.cond3 and self.cond4

    def failed(self) -> list[int]:
        return [k + 1 for k, ok in enumerate((self.cond1, self.cond2, self.cond3, self.cond4)) if not ok]


def _check_cubic(coeffs) -> tuple[float, float, float, float]:
    if len(coeffs) != 4:
        raise ValueError(f"expected 4 coefficients (a3, a2, a1, a0), got {len(coeffs)}")
    a3, a2, a1, a0 = (float(c) for c in coeffs)
    if a3 == 0.0:
        raise DegeneratePolynomialError("leading coefficient a3 is zero")
    if a3 < 0:
        # Q and -Q share their roots; the inequalities assume a3 > 0
        a3, a2, a1, a0 = -a3, -a2, -a1, -a0
    return a3, a2, a1, a0


def jury_test(coeffs) -> JuryVerdict:
    """Jury's test for all roots of ``a3 y^3 + a2 y^2 + a1 y + a0`` inside the unit disk.

    Conditions: Q(1) > 0, Q(-1) < 0, |a3| > |a0|, |a0^2 - a3^2| > |a0 a2 - a1 a3|.
    """
    a3, a2, a1, a0 = _check_cubic(coeffs)
    q1 = a3 + a2 + a1 + a0
    qm1 = -a3 + a2 - a1 + a0
    return JuryVerdict(
        cond1=q1 > 0,
        cond2=qm1 < 0,
        cond3=abs(a3) > abs(a0),
        cond4=abs(a0 * a0 - a3 * a3) > abs(a0 * a2 - a1 * a3),
    )


def jury_test_batch(coeffs: np.ndarray) -> np.ndarray:
    """Vectorised Jury verdict for an ``(n, 4)`` array of cubics; returns a bool array."""
    c = np.asarray(coeffs, dtype=float)
    if np.any(c[:, 0] == 0):
        raise DegeneratePolynomialError("leading coefficient a3 is zero")
    c = c * np.sign(c[:, :1])
    a3, a2, a1, a0 = c.T
    cond1 = (a3 + a2 + a1 + a0) > 0
    cond2 = (-a3 + a2 - a1 + a0) < 0
    cond3 = np.abs(a3) > np.abs(a0)
    cond4 = np.abs(a0 * a0 - a3 * a3) > np.abs(a0 * a2 - a1 * a3)
    return cond1 & cond2 & cond3 & cond4


def _companion(a3, a2, a1, a0) -> np.ndarray:
    return np.array(
        [
            [-a2 / a3, -a1 / a3, -a0 / a3],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
        ]
    )


def cubic_roots(coeffs) -> np.ndarray:
    a3, a2, a1, a0 = _check_cubic(coeffs)
    return np.linalg.eigvals(_companion(a3, a2, a1, a0))


def cubic_root_magnitudes(coeffs) -> tuple[float, float, float]:
    """Moduli of the three roots, descending, from companion-matrix eigenvalues."""
    mags = np.sort(np.abs(cubic_roots(coeffs)))[::-1]
    return float(mags[0]), float(mags[1]), float(mags[2])


def root_magnitudes_batch(coeffs: np.ndarray) -> np.ndarray:
    """Descending root moduli for an ``(n, 4)`` array of cubics, shape ``(n, 3)``."""
    c = np.asarray(coeffs, dtype=float)
    if np.any(c[:, 0] == 0):
        raise DegeneratePolynomialError("leading coefficient a3 is zero")
    n = c.shape[0]
    comp = np.zeros((n, 3, 3))
    comp[:, 0, :] = -c[:, 1:] / c[:, :1]
    comp[:, 1, 0] = 1.0
    comp[:, 2, 1] = 1.0
    mags = np.abs(np.linalg.eigvals(comp))
    return -np.sort(-mags, axis=1)


def classify_roots(max_magnitude: float, band: float = ROOT_BAND) -> str:
    """``'stable'``, ``'unstable'`` or ``'marginal'`` from the largest root modulus."""
    if max_magnitude < 1.0 - band:
        return "stable"
    if max_magnitude > 1.0 + band:
        return "unstable"
    return "marginal"


def lc_instability_predicate(alpha: float, mu: float, params: PhysicalParams, time: TimeParams) -> bool:
    """Sufficient condition for absolute instability of one LC-DN-alpha mode."""
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"instability predicate assumes 0 < alpha <= 1, got {alpha!r}")
    rhs = params.beta * (2.0 - alpha) * time.dt**2 / (4.0 * alpha) + (
        2.0 * (1.0 - alpha) / alpha + 1.0
    ) * params.surface_mass
    return params.rho_f * mu > rhs


@dataclass(frozen=True)
class LCStabilityBounds:
    """Result of :func:`lc_stability_bounds`.

    ``alpha_bar`` is ``None`` when no mode satisfies the precondition
    ``rho_s h_s < rho_f mu_i``; ``excluded_modes`` lists the (1-based) modes
    left out of the minimum for that reason.
    """

    alpha_bar: float | None
    binding_mode: int | None
    excluded_modes: tuple[int, ...]
    spectrum: tuple[float, ...]
    params: PhysicalParams
    time: TimeParams

    @property
    def applicable(self) -> bool:
        return self.alpha_bar is not None

    def unstable(self, alpha: float, mode: int) -> bool:
        """Instability predicate for the 1-based ``mode``."""
        return lc_instability_predicate(alpha, self.spectrum[mode - 1], self.params, self.time)

    @property
    def instability_predicate(self) -> Callable[[float, int], bool]:
        return self.unstable


def lc_stability_bounds(
    params: PhysicalParams,
    time: TimeParams,
    n_modes: int = DEFAULT_N_MODES,
    spectrum: Sequence[float] | None = None,
) -> LCStabilityBounds:
    if n_modes < 1:
        raise ParameterError("n_modes must be >= 1")
    if spectrum is None:
        spectrum = added_mass_spectrum(n_modes, params.L, params.R)
    spectrum = tuple(float(mu) for mu in spectrum)
    best, binding, excluded = None, None, []
    for i, mu in enumerate(spectrum, start=1):
        r = params.surface_mass / (params.rho_f * mu)
        if r >= 1.0:
            excluded.append(i)
            continue
        value = 2.0 * r / (r + 1.0)
        if best is None or value < best:
            best, binding = value, i
    return LCStabilityBounds(best, binding, tuple(excluded), spectrum, params, time)


@dataclass(frozen=True)
class ModeAnalysis:
    mode_index: int
    mu: float
    alpha: float
    sc_amplification: float
    lc_coeffs: tuple[float, float, float, float]
    jury: JuryVerdict
    root_magnitudes: tuple[float, float, float]

    @property
    def lc_class(self) -> str:
        return classify_roots(self.root_magnitudes[0])


def analyze_mode(
    i: int,
    alpha: float,
    params: PhysicalParams,
    time: TimeParams,
    *,
    mu: float | None = None,
) -> ModeAnalysis:
    if mu is None:
        mu = added_mass_eigenvalue(i, params.L, params.R)
    coeffs = lc_char_poly(alpha, i, params, time, mu=mu)
    return ModeAnalysis(
        mode_index=i,
        mu=mu,
        alpha=alpha,
        sc_amplification=sc_amplification(alpha, mu, params, time),
        lc_coeffs=coeffs,
        jury=jury_test(coeffs),
        root_magnitudes=cubic_root_magnitudes(coeffs),
    )
