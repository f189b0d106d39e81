"""Structured finite-volume discretisation of the channel.

Pressure lives on the vertices ``(x_i, y_j) = (i hx, j hy)``.  The columns
``i = 0`` and ``i = nx`` carry the homogeneous Dirichlet condition of the
inlet and outlet and are eliminated, so the unknowns are
``i = 1..nx-1, j = 0..ny``.  Each unknown owns a dual control volume; rows
``j = 0`` (symmetry line, no flux) and ``j = ny`` (the interface) own half
cells.  Velocities are staggered:

* x-faces between ``(i, j)`` and ``(i+1, j)`` for ``i = 0..nx-1``,
* y-faces between ``(i, j)`` and ``(i, j+1)`` for ``i = 1..nx-1``,
* the interface normal velocity at ``(i, ny)``, entering as a boundary flux.

With ``D`` the face-flux divergence and ``G`` the two-point gradient, one
has ``G = -V_f^{-1} D^T`` with face volumes ``V_f``, and the pressure
operator ``D V_f^{-1} D^T`` is the symmetric positive-definite 5-point
Laplacian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .params import ParameterError

__all__ = [
    "AddedMassMatrix",
    "Grid",
    "assemble_laplacian",
    "discrete_added_mass",
    "discrete_added_mass_spectrum",
    "read_snapshot",
    "write_snapshot",
]


@dataclass(frozen=True)
class Grid:
    nx: int = 120
    ny: int = 20
    L: float = 6.0
    R: float = 0.5

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ParameterError(f"grid needs nx, ny >= 4, got nx={self.nx}, ny={self.ny}")
        if not (self.L > 0 and self.R > 0):
            raise ParameterError("grid dimensions must be positive")

    @property
    def hx(self) -> float:
        return self.L / self.nx

    @property
    def hy(self) -> float:
        return self.R / self.ny

    @property
    def n_interface(self) -> int:
        return self.nx - 1

    @property
    def n_pressure(self) -> int:
        return (self.nx - 1) * (self.ny + 1)

    @property
    def n_xfaces(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n_yfaces(self) -> int:
        return (self.nx - 1) * self.ny

    @property
    def n_faces(self) -> int:
        return self.n_xfaces + self.n_yfaces

    def node(self, i: int, j: int) -> int:
        """Index of pressure unknown at vertex (i, j), 1 <= i <= nx-1."""
        return j * (self.nx - 1) + (i - 1)

    @property
    def x_interface(self) -> np.ndarray:
        return self.hx * np.arange(1, self.nx)

    @cached_property
    def interface_nodes(self) -> np.ndarray:
        return np.arange(self.nx - 1) + self.ny * (self.nx - 1)

    @cached_property
    def node_volumes(self) -> np.ndarray:
        rows = np.full(self.ny + 1, self.hy)
        rows[0] = rows[-1] = 0.5 * self.hy
        return np.repeat(rows * self.hx, self.nx - 1)

    @cached_property
    def face_volumes(self) -> np.ndarray:
        lengths = np.full(self.ny + 1, self.hy)
        lengths[0] = lengths[-1] = 0.5 * self.hy
        vx = np.repeat(lengths * self.hx, self.nx)
        vy = np.full(self.n_yfaces, self.hx * self.hy)
        return np.concatenate([vx, vy])

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """Net outward face flux per control volume, shape (n_pressure, n_faces)."""
        nx, ny = self.nx, self.ny
        rows, cols, vals = [], [], []
        lengths = np.full(ny + 1, self.hy)
        lengths[0] = lengths[-1] = 0.5 * self.hy
        f = 0
        for j in range(ny + 1):
            ell = lengths[j]
            for i in range(nx):
                # face between vertex i (west) and i+1 (east)
                if i >= 1:
                    rows.append(self.node(i, j)); cols.append(f); vals.append(ell)
                if i + 1 <= nx - 1:
                    rows.append(self.node(i + 1, j)); cols.append(f); vals.append(-ell)
                f += 1
        for j in range(ny):
            for i in range(1, nx):
                rows.append(self.node(i, j)); cols.append(f); vals.append(self.hx)
                rows.append(self.node(i, j + 1)); cols.append(f); vals.append(-self.hx)
                f += 1
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_pressure, self.n_faces))

    @cached_property
    def gradient(self) -> sp.csr_matrix:
        """Two-point pressure gradient on faces, ``-V_f^{-1} D^T``."""
        return sp.csr_matrix(-sp.diags(1.0 / self.face_volumes) @ self.divergence.T)

    @cached_property
    def interface_injection(self) -> sp.csr_matrix:
        """E: interface values -> pressure-node vector (top row)."""
        n = self.n_interface
        return sp.csr_matrix(
            (np.ones(n), (self.interface_nodes, np.arange(n))), shape=(self.n_pressure, n)
        )

    def interface_flux(self, u_sigma: np.ndarray) -> np.ndarray:
        """Outward flux through the interface into each node's balance."""
        out = np.zeros(self.n_pressure)
        out[self.interface_nodes] = self.hx * np.asarray(u_sigma)
        return out

    def flux_divergence(self, u: np.ndarray, u_sigma: np.ndarray) -> np.ndarray:
        """Total outward flux per control volume (interior faces plus interface)."""
        return self.divergence @ u + self.interface_flux(u_sigma)

    def discrete_div(self, u: np.ndarray, u_sigma: np.ndarray) -> np.ndarray:
        """Velocity divergence per unit area."""
        return self.flux_divergence(u, u_sigma) / self.node_volumes

    def trace(self, p: np.ndarray) -> np.ndarray:
        return np.asarray(p)[self.interface_nodes]

    def node_field(self, p: np.ndarray) -> np.ndarray:
        """Pressure on all (ny+1) x (nx+1) vertices, Dirichlet columns filled with zeros."""
        full = np.zeros((self.ny + 1, self.nx + 1))
        full[:, 1:-1] = np.asarray(p).reshape(self.ny + 1, self.nx - 1)
        return full

    def mode_shape(self, k: int) -> np.ndarray:
        """sin(k pi x / L) sampled on the interface nodes."""
        return np.sin(k * math.pi * self.x_interface / self.L)

    def project(self, values: np.ndarray, k: int) -> float:
        """Coefficient of mode ``k`` in interface data (discrete sine transform)."""
        s = self.mode_shape(k)
        return float(np.dot(values, s) / np.dot(s, s))


def assemble_laplacian(grid: Grid) -> sp.csc_matrix:
    """Symmetric positive-definite 5-point operator ``D V_f^{-1} D^T``.

    Acting on a pressure vector it returns ``-integral(Laplacian p)`` over each
    control volume; divide by :attr:`Grid.node_volumes` for pointwise values.
    The inlet/outlet Dirichlet condition is built in; the symmetry line and
    the interface carry natural (zero-flux) conditions, interface fluxes
    being supplied separately.
    """
    D = grid.divergence
    return sp.csc_matrix(D @ sp.diags(1.0 / grid.face_volumes) @ D.T)


@dataclass(frozen=True)
class AddedMassMatrix:
    """Dense interface-to-interface added-mass operator [cm]."""

    matrix: np.ndarray
    grid: Grid

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        vals, vecs = np.linalg.eigh(0.5 * (self.matrix + self.matrix.T))
        order = np.argsort(vals)[::-1]
        return vals[order], vecs[:, order]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigh[0]

    @property
    def leading_eigenvector(self) -> np.ndarray:
        return self.eigh[1][:, 0]


def discrete_added_mass(grid: Grid) -> AddedMassMatrix:
    """Interface trace of the Laplace solution driven by unit Neumann data at each node.

    Column ``j`` is the pressure trace produced by a unit normal derivative
    at interface node ``j``, weighted by the interface quadrature weight hx.
    """
    A = assemble_laplacian(grid)
    lu = spla.splu(A)
    E = grid.interface_injection.toarray()
    sol = lu.solve(grid.hx * E)
    M = E.T @ sol
    if not np.all(np.isfinite(M)):
        raise ParameterError("singular pressure operator")
    return AddedMassMatrix(M, grid)


def discrete_added_mass_spectrum(grid: Grid, n_modes: int | None = None) -> np.ndarray:
    """Closed-form eigenvalues of :func:`discrete_added_mass` (separable grid).

    Mode ``k`` has x-eigenvalue ``lam = 4/hx^2 sin^2(k pi hx / 2L)``; the
    y-profile ``cosh(kappa y)`` with ``2(cosh(kappa hy) - 1)/hy^2 = lam``
    gives a trace/flux ratio ``hy / (tanh(kappa R) sinh(kappa hy))``.
    """
    n_modes = grid.n_interface if n_modes is None else n_modes
    k = np.arange(1, n_modes + 1)
    lam = 4.0 / grid.hx**2 * np.sin(k * math.pi * grid.hx / (2.0 * grid.L)) ** 2
    kappa = np.arccosh(1.0 + 0.5 * grid.hy**2 * lam) / grid.hy
    return grid.hy / (np.tanh(kappa * grid.R) * np.sinh(kappa * grid.hy))


def write_snapshot(path, grid: Grid, field: np.ndarray, t: float) -> None:
    """Write a vertex field as plain text, one row per grid line."""
    field = np.asarray(field)
    with open(path, "w") as fh:
        fh.write(f"# {grid.nx} {grid.ny} {grid.hx!r} {grid.hy!r} {float(t)!r}\n")
        for row in np.atleast_2d(field):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_snapshot(path) -> tuple[dict, np.ndarray]:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# nx ny hx hy t' header")
        nx, ny, hx, hy, t = header[1:].split()
        data = np.loadtxt(fh, ndmin=2)
    return {"nx": int(nx), "ny": int(ny), "hx": float(hx), "hy": float(hy), "t": float(t)}, data
