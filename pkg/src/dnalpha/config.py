"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored; every other line must be
``key = value`` with a known key.  Missing keys take the reference
defaults.  Every error names its source and line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .params import AlphaStrategy, CouplingConfig, ParameterError, PhysicalParams, Scheme, TimeParams

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "KEYS",
    "KINDS",
    "SWEEPABLE",
    "SweepAxis",
    "build",
    "parse_config",
    "parse_text",
]

KINDS = ("eigs", "bounds", "jury", "simulate", "sweep", "richardson", "refine")


class ConfigError(ValueError):
    """Invalid configuration entry; ``source`` and ``line`` locate it."""

    def __init__(self, source: str, line: int | None, message: str):
        self.source, self.line = source, line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _positive(v):
    if not v > 0:
        raise ValueError("must be > 0")


def _nonneg(v):
    if not v >= 0:
        raise ValueError("must be >= 0")


def _alpha(v):
    if not 0 < v < 2:
        raise ValueError("must lie in (0, 2)")


def _at_least(n):
    def check(v):
        if v < n:
            raise ValueError(f"must be >= {n}")
    return check


def _choice(*options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
    return check


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(text: str) -> int:
    return int(text)


def _str(text: str) -> str:
    return text


def _float_list(text: str) -> tuple[float, ...]:
    items = tuple(_float(t) for t in text.replace(",", " ").split())
    if not items:
        raise ValueError("needs at least one value")
    return items


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], object]
    default: object
    check: Callable | None = None
    help: str = ""


KEYS: dict[str, Key] = {
    # physics
    "rho_f": Key(_float, 1.0, _positive, "fluid density [g/cm^3]"),
    "rho_s": Key(_float, 1.1, _positive, "structure density [g/cm^3]"),
    "h_s": Key(_float, 0.1, _positive, "membrane thickness [cm]"),
    "beta": Key(_float, 5.7e6, _nonneg, "ring stiffness [dyne/cm^4]"),
    "L": Key(_float, 6.0, _positive, "channel length [cm]"),
    "R": Key(_float, 0.5, _positive, "channel half-height [cm]"),
    # time
    "dt": Key(_float, 1e-3, _positive, "time step [s]"),
    "t_final": Key(_float, 0.03, _nonneg, "final time [s]"),
    "n_steps": Key(_int, 0, _nonneg, "step count; 0 means t_final/dt"),
    # coupling
    "scheme": Key(_str, "sc", _choice("mono", "sc", "lc"), "coupling scheme"),
    "alpha": Key(_float, 0.5, _alpha, "relaxation parameter (fallback for mr)"),
    "alpha_strategy": Key(_str, "fixed", _choice("fixed", "mr"), "fixed alpha or minimum residual"),
    "tol": Key(_float, 1e-4, _positive, "coupling tolerance"),
    "max_iter": Key(_int, 500, _at_least(1), "coupling iteration cap"),
    # discretisation
    "level": Key(_str, "modal", _choice("modal", "grid"), "per-mode model or full grid"),
    "mode": Key(_int, 1, _at_least(1), "interface mode for modal runs"),
    "n_modes": Key(_int, 10, _at_least(1), "modes in spectra and bounds"),
    "nx": Key(_int, 120, _at_least(4), "grid cells along the channel"),
    "ny": Key(_int, 20, _at_least(4), "grid cells across the half-channel"),
    "linear_solver": Key(_str, "direct", _choice("direct", "cg"), "pressure solver"),
    # initial data and load
    "eta0": Key(_float, 1e-3, None, "initial mode-1 displacement [cm]"),
    "forcing": Key(_str, "none", _choice("none", "impulse", "doublet", "pulse"), "interface load profile"),
    "forcing_amplitude": Key(_float, 1000.0, None, "load amplitude [dyne/cm^2]"),
    "forcing_frequency": Key(_float, 5.0, _positive, "pulse frequency [Hz]"),
    # sweeps and studies
    "param": Key(_str, "alpha", None, "swept parameter"),
    "from": Key(_float, 0.05, None, "sweep start"),
    "to": Key(_float, 0.9, None, "sweep end"),
    "steps": Key(_int, 18, _at_least(2), "sweep points"),
    "scale": Key(_str, "linear", _choice("linear", "log"), "sweep spacing"),
    "dt_list": Key(_float_list, (4e-3, 2e-3, 1e-3, 5e-4), None, "time steps of a refinement study"),
    "reference": Key(_str, "same", _choice("same", "fine"), "monolithic reference: same dt or finest/8"),
    "n_samples": Key(_int, 10000, _at_least(1), "random samples (jury)"),
    "seed": Key(_int, 12345, None, "random seed"),
    "snapshot": Key(_str, "", None, "path of a final pressure snapshot (grid simulate)"),
}

#: numeric keys a sweep may vary
SWEEPABLE = ("alpha", "rho_f", "rho_s", "h_s", "beta", "L", "R", "dt", "tol", "eta0", "forcing_amplitude")


@dataclass(frozen=True)
class SweepAxis:
    param: str
    start: float
    stop: float
    steps: int
    scale: str = "linear"

    def values(self) -> list[float]:
        import numpy as np

        if self.scale == "log":
            return [float(v) for v in np.geomspace(self.start, self.stop, self.steps)]
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: its kind plus every resolved setting (``values``)."""

    kind: str
    values: dict = field(default_factory=dict)
    out: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    @property
    def sweep(self) -> SweepAxis:
        v = self.values
        return SweepAxis(v["param"], v["from"], v["to"], v["steps"], v["scale"])

    def with_values(self, **changes) -> "ExperimentSpec":
        return ExperimentSpec(self.kind, {**self.values, **changes}, self.out)


def parse_text(text: str, source: str = "<config>") -> dict[str, tuple[object, int]]:
    """Parse config text into ``{key: (value, line)}``."""
    entries: dict[str, tuple[object, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(source, lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key] = (_convert(key, value, source, lineno), lineno)
    return entries


def _convert(key: str, value: str, source: str, line: int | None):
    if key not in KEYS:
        raise ConfigError(source, line, f"unknown key {key!r}")
    spec = KEYS[key]
    try:
        v = spec.parse(value)
    except ValueError:
        kind = {_float: "a number", _int: "an integer", _float_list: "a list of numbers"}.get(spec.parse, "valid")
        raise ConfigError(source, line, f"{key} must be {kind}, got {value!r}") from None
    if spec.check is not None:
        try:
            spec.check(v)
        except ValueError as exc:
            raise ConfigError(source, line, f"{key} {exc}, got {value!r}") from None
    return v


def build(kind: str, entries: dict[str, tuple[object, int]], out: str | None = None, source: str = "<config>"):
    """Resolve entries against defaults and construct the typed parameter objects."""
    if kind not in KINDS:
        raise ConfigError(source, None, f"unknown experiment kind {kind!r}")
    values = {k: spec.default for k, spec in KEYS.items()}
    lines = {}
    for k, (v, line) in entries.items():
        values[k] = v
        lines[k] = line

    def fail(key, message):
        line = lines.get(key)
        origin = "command line" if key in entries and line is None else source
        raise ConfigError(origin, line, message)

    if values["param"] not in SWEEPABLE:
        fail("param", f"param must name a sweepable parameter ({', '.join(SWEEPABLE)}), got {values['param']!r}")
    if values["scale"] == "log" and not (values["from"] > 0 and values["to"] > 0):
        fail("scale", "a log sweep needs positive from/to")
    try:
        params = PhysicalParams(**{k: values[k] for k in ("rho_f", "rho_s", "h_s", "beta", "L", "R")})
    except ParameterError as exc:
        fail(str(exc).split()[0], str(exc))
    time = TimeParams(dt=values["dt"], t_final=values["t_final"])
    if values["alpha_strategy"] == "mr":
        strategy = AlphaStrategy.minimum_residual(values["alpha"])
    else:
        strategy = AlphaStrategy.fixed(values["alpha"])
    cfg = CouplingConfig(Scheme.parse(values["scheme"]), strategy, values["tol"], values["max_iter"])
    return params, time, cfg, ExperimentSpec(kind, values, out)


def parse_config(path, kind: str = "simulate", overrides: dict[str, str] | None = None, out: str | None = None):
    """Read ``path`` (or only defaults when ``None``) and apply string overrides.

    Returns ``(PhysicalParams, TimeParams, CouplingConfig, ExperimentSpec)``.
    """
    entries: dict[str, tuple[object, int | None]] = {}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(source, None, f"cannot read config: {exc.strerror}") from None
        entries.update(parse_text(text, source))
    for key, value in (overrides or {}).items():
        entries[key] = (_convert(key, str(value), "command line", None), None)
    return build(kind, entries, out, source)
