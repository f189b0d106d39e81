"""Parameter containers for the membrane/channel benchmark.

Units are CGS throughout: lengths in cm, densities in g/cm^3, pressures in
dyne/cm^2 and the ring stiffness ``beta`` in dyne/cm^4.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace


class ParameterError(ValueError):
    """Raised when a parameter set violates its invariants."""


@dataclass(frozen=True)
class PhysicalParams:
    """Physics of the channel/membrane benchmark.

    The defaults are the reference configuration (REF): blood-like fluid in
    a 6 cm x 0.5 cm channel bounded by a 0.1 cm thick membrane.
    """

    rho_f: float = 1.0
    rho_s: float = 1.1
    h_s: float = 0.1
    beta: float = 5.7e6
    L: float = 6.0
    R: float = 0.5

    def __post_init__(self):
        for name in ("rho_f", "rho_s", "h_s", "beta", "L", "R"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ParameterError(f"{name} must be a finite number, got {value!r}")
            # a ring model without stiffness is allowed; nothing else may vanish
            if value < 0 or (value == 0 and name != "beta"):
                raise ParameterError(f"{name} must be {'>= 0' if name == 'beta' else 'strictly positive'}, got {value!r}")

    @property
    def surface_mass(self) -> float:
        """Membrane mass per unit area, rho_s * h_s [g/cm^2]."""
        return self.rho_s * self.h_s

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class TimeParams:
    dt: float = 1e-3
    t_final: float = 0.03

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be > 0, got {self.dt!r}")
        if not (math.isfinite(self.t_final) and self.t_final >= 0):
            raise ParameterError(f"t_final must be >= 0, got {self.t_final!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def with_(self, **changes) -> "TimeParams":
        return replace(self, **changes)


class Scheme(enum.Enum):
    MONOLITHIC = "mono"
    SC_DN_ALPHA = "sc"
    LC_DN_ALPHA = "lc"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        key = text.strip().lower()
        aliases = {
            "mono": cls.MONOLITHIC,
            "monolithic": cls.MONOLITHIC,
            "sc": cls.SC_DN_ALPHA,
            "sc_dn_alpha": cls.SC_DN_ALPHA,
            "lc": cls.LC_DN_ALPHA,
            "lc_dn_alpha": cls.LC_DN_ALPHA,
        }
        if key not in aliases:
            raise ParameterError(f"unknown scheme {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class AlphaStrategy:
    """How the acceleration parameter is chosen at each coupling iteration.

    ``kind`` is ``"fixed"`` (use ``value`` every iteration) or
    ``"mr"`` (Minimum-Residual step length, recomputed per iteration).
    """

    kind: str = "fixed"
    value: float = 0.5

    def __post_init__(self):
        if self.kind not in ("fixed", "mr"):
            raise ParameterError(f"alpha strategy must be 'fixed' or 'mr', got {self.kind!r}")
        if self.kind == "fixed" and not (0.0 < self.value < 2.0):
            raise ParameterError(f"fixed alpha must lie in (0, 2), got {self.value!r}")

    @classmethod
    def fixed(cls, value: float) -> "AlphaStrategy":
        return cls("fixed", float(value))

    @classmethod
    def minimum_residual(cls, fallback: float = 0.5) -> "AlphaStrategy":
        return cls("mr", float(fallback))

    @property
    def is_fixed(self) -> bool:
        return self.kind == "fixed"


@dataclass(frozen=True)
class CouplingConfig:
    scheme: Scheme = Scheme.SC_DN_ALPHA
    alpha_strategy: AlphaStrategy = field(default_factory=lambda: AlphaStrategy.fixed(0.5))
    tol: float = 1e-4
    max_iter: int = 500

    def __post_init__(self):
        if not (self.tol > 0):
            raise ParameterError(f"tol must be > 0, got {self.tol!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ParameterError(f"max_iter must be an integer >= 1, got {self.max_iter!r}")

    def with_(self, **changes) -> "CouplingConfig":
        return replace(self, **changes)


REF = PhysicalParams()
REF_TIME = TimeParams()
