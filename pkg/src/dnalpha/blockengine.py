"""Monolithic block system of one time step and its Richardson solvers.

Unknowns are ordered in six blocks::

    1 U    interior fluid velocity (face velocities)
    2 P    pressure (vertices)
    3 U_S  fluid normal velocity on the interface
    4 D_S  interface displacement
    5 D    interior structure displacement (empty for a membrane)
    6 W_S  interface structure velocity

and the matrix is::

    [ K_f   B^T   .     .       .  .    ]
    [ B     .     B_S   .       .  .    ]
    [ .     .     M_S   .       .  -M_S ]
    [ .     B_S^T .     K_SS    .  .    ]
    [ .     .     .     .       .  .    ]
    [ .     .     .     -M_S/dt .  M_S  ]

with ``K_f = rho_f/dt V_f``, ``B = -D`` (the flux divergence),
``B_S = -hx E``, ``M_S = hx I`` and ``K_SS = hx sigma I``.  Zeroing the
block (3, 6) gives the block Gauss-Seidel preconditioner: one Richardson
step with it is one Dirichlet-Neumann substep cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fieldsolver import FieldSolver, GridState, Iterate
from .modal import NORM_FLOOR
from .params import AlphaStrategy, CouplingConfig, ParameterError

__all__ = [
    "BLOCK_NAMES",
    "BlockSystem",
    "CertificationError",
    "EquivalenceReport",
    "Preconditioner",
    "RichardsonResult",
    "assemble_block_system",
    "certify_equivalence",
    "richardson_iterate",
]

BLOCK_NAMES = ("fluid velocity", "pressure", "interface fluid velocity",
               "interface displacement", "interior displacement", "interface structure velocity")

#: certification threshold on the relative deviation
CERTIFY_TOL = 1e-9
STALL_COUNT = 20
STALL_EPS = 1e-12


class CertificationError(AssertionError):
    """Richardson and DN iterates disagree beyond the certification threshold."""


@dataclass
class BlockSystem:
    """Assembled per-step system ``A X = b`` in six-block layout."""

    blocks: dict
    sizes: tuple[int, ...]
    rhs: np.ndarray

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(_assemble(self.blocks, self.sizes))

    def block(self, x: np.ndarray, i: int) -> np.ndarray:
        """Slice of block ``i`` (1-based, as in the layout above)."""
        return x[self.offsets[i - 1]: self.offsets[i]]

    def pack(self, it: Iterate) -> np.ndarray:
        empty = np.zeros(0)
        return np.concatenate([it.u, it.p, it.u_sigma, it.eta, empty, it.w])

    def unpack(self, x: np.ndarray) -> Iterate:
        b = [self.block(x, i) for i in range(1, 7)]
        return Iterate(b[0].copy(), b[1].copy(), b[2].copy(), b[3].copy(), b[5].copy())

    def _vec(self, x) -> np.ndarray:
        return self.pack(x) if isinstance(x, Iterate) else np.asarray(x, dtype=float)

    def residual(self, x) -> np.ndarray:
        return self.rhs - self.matrix @ self._vec(x)

    def residual_norm(self, x) -> float:
        return float(np.linalg.norm(self.residual(x)))

    def solve(self) -> np.ndarray:
        x = spla.spsolve(sp.csc_matrix(self.matrix), self.rhs)
        if not np.all(np.isfinite(x)):
            raise ParameterError("singular block system")
        return x

    def minimum_residual_alpha(self, x, z) -> float:
        """Step length minimising ``|b - A(x + alpha z)|`` (Euclidean)."""
        Az = self.matrix @ self._vec(z)
        den = float(np.dot(Az, Az))
        if den == 0.0:
            return 0.0
        return float(np.dot(Az, self.residual(x)) / den)


def _assemble(blocks: dict, sizes) -> sp.spmatrix:
    grid = [[blocks.get((i, j)) for j in range(1, 7)] for i in range(1, 7)]
    for i in range(6):
        if grid[i][i] is None:
            grid[i][i] = sp.csr_matrix((sizes[i], sizes[i]))
    return sp.bmat(grid, format="csr")


def assemble_block_system(solver: FieldSolver, state: GridState, f_new=None) -> BlockSystem:
    """Blocks and right-hand side of the step from level n to n+1.

    ``f_new`` is the interface load at the new level (zero by default).
    """
    g = solver.grid
    dt, rho_f = solver.time.dt, solver.params.rho_f
    n_i = g.n_interface
    f_new = np.zeros(n_i) if f_new is None else np.asarray(f_new, dtype=float)
    D = g.divergence
    E = g.interface_injection
    K_f = sp.diags((rho_f / dt) * g.face_volumes)
    B = -D
    B_S = -g.hx * E
    M_S = g.hx * sp.identity(n_i, format="csr")
    K_SS = g.hx * solver.sigma * sp.identity(n_i, format="csr")
    blocks = {
        (1, 1): K_f, (1, 2): sp.csr_matrix(B.T),
        (2, 1): B, (2, 3): B_S,
        (3, 3): M_S, (3, 6): -M_S,
        (4, 2): sp.csr_matrix(B_S.T), (4, 4): K_SS,
        (6, 4): -M_S / dt, (6, 6): M_S,
    }
    sizes = (g.n_faces, g.n_pressure, n_i, n_i, 0, n_i)
    rhs = np.concatenate([
        K_f @ state.u,
        np.zeros(g.n_pressure),
        np.zeros(n_i),
        g.hx * solver.structure_rhs(state, f_new),
        np.zeros(0),
        -g.hx * state.eta / dt,
    ])
    return BlockSystem(blocks, sizes, rhs)


class Preconditioner:
    """Block Gauss-Seidel preconditioner: ``A`` with block (3, 6) removed.

    :meth:`solve` is exact block forward substitution in the order
    interface velocity, fluid (velocity and pressure), displacement,
    structure velocity.  With ``full=True`` the preconditioner is ``A``
    itself (negative control), solved by sparse LU.
    """

    def __init__(self, system: BlockSystem, full: bool = False):
        self.system = system
        self.full = full
        self.blocks = dict(system.blocks)
        if not full:
            self.blocks.pop((3, 6))

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(_assemble(self.blocks, self.system.sizes))

    @cached_property
    def _kf_inv(self) -> np.ndarray:
        return 1.0 / self.blocks[(1, 1)].diagonal()

    @cached_property
    def _schur_lu(self):
        B = self.blocks[(2, 1)]
        S = B @ sp.diags(self._kf_inv) @ self.blocks[(1, 2)]
        return spla.splu(sp.csc_matrix(S))

    @cached_property
    def _full_lu(self):
        return spla.splu(sp.csc_matrix(self.matrix))

    def solve(self, r: np.ndarray) -> np.ndarray:
        if self.full:
            return self._full_lu.solve(r)
        s, bl = self.system, self.blocks
        r1, r2, r3, r4, _, r6 = (s.block(r, i) for i in range(1, 7))
        u_s = r3 / bl[(3, 3)].diagonal()
        # fluid saddle point: eliminate the diagonal velocity mass
        g = r2 - bl[(2, 3)] @ u_s
        B = bl[(2, 1)]
        p = self._schur_lu.solve(B @ (self._kf_inv * r1) - g)
        u = self._kf_inv * (r1 - bl[(1, 2)] @ p)
        d_s = (r4 - bl[(4, 2)] @ p) / bl[(4, 4)].diagonal()
        w = (r6 - bl[(6, 4)] @ d_s) / bl[(6, 6)].diagonal()
        return np.concatenate([u, p, u_s, d_s, np.zeros(0), w])

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


@dataclass
class RichardsonResult:
    x: np.ndarray
    iterations: int
    residuals: list[float]
    increments: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    status: str = "converged"
    fell_back: bool = False
    iterates: list[np.ndarray] | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def richardson_iterate(
    system: BlockSystem,
    precond: Preconditioner,
    x0: np.ndarray,
    strategy: AlphaStrategy,
    cfg: CouplingConfig,
    *,
    keep_iterates: bool = False,
    max_iter: int | None = None,
    stop: bool = True,
) -> RichardsonResult:
    """Preconditioned Richardson iteration ``x <- x + alpha P^{-1}(b - A x)``.

    Stops when ``|r| / |b| < cfg.tol`` (``|r| < cfg.tol`` if ``b = 0``).
    ``status`` is ``"converged"``, ``"max_iter"`` or ``"stagnated"`` (the
    residual ratio stayed above ``1 - 1e-12`` for 20 iterations).  A stalled
    Minimum-Residual run falls back to the fixed ``strategy.value`` and
    continues, recording ``fell_back``.  ``stop=False`` runs exactly
    ``max_iter`` iterations regardless of convergence.
    """
    max_iter = cfg.max_iter if max_iter is None else int(max_iter)
    x = np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(system.rhs))
    scale = bnorm if bnorm > 0 else 1.0
    r = system.residual(x)
    rnorm = float(np.linalg.norm(r))
    res = RichardsonResult(x, 0, [rnorm])
    if keep_iterates:
        res.iterates = [x.copy()]
    if stop and rnorm / scale < cfg.tol:
        return res
    mr = strategy.kind == "mr"
    stall = 0
    for k in range(1, max_iter + 1):
        z = precond.solve(r)
        if mr:
            alpha = system.minimum_residual_alpha(x, z)
            if not math.isfinite(alpha) or alpha == 0.0:
                alpha = strategy.value
        else:
            alpha = strategy.value
        step = alpha * z
        x = x + step
        r = system.residual(x)
        new = float(np.linalg.norm(r))
        res.alphas.append(alpha)
        res.residuals.append(new)
        res.increments.append(float(np.linalg.norm(step) / max(np.linalg.norm(x), NORM_FLOOR)))
        if keep_iterates:
            res.iterates.append(x.copy())
        stall = stall + 1 if new > (1.0 - STALL_EPS) * rnorm else 0
        rnorm = new
        res.x, res.iterations = x, k
        if stop and rnorm / scale < cfg.tol:
            res.status = "converged"
            return res
        if not math.isfinite(rnorm):
            res.status = "stagnated"
            return res
        if stall >= STALL_COUNT:
            if mr:
                mr = False
                res.fell_back = True
                stall = 0
            else:
                res.status = "stagnated"
                return res
    res.status = "max_iter" if stop else "converged"
    return res


@dataclass
class EquivalenceReport:
    max_deviation: float
    per_block: dict
    offending_block: str | None
    offending_iteration: int | None

    @property
    def passed(self) -> bool:
        return self.max_deviation <= CERTIFY_TOL

    def check(self) -> "EquivalenceReport":
        if not self.passed:
            raise CertificationError(
                f"deviation {self.max_deviation:.3e} in block '{self.offending_block}' "
                f"at iteration {self.offending_iteration}"
            )
        return self


def certify_equivalence(
    solver: FieldSolver,
    state: GridState,
    alpha: float,
    k_max: int,
    *,
    forcing=None,
    negative_control: bool = False,
) -> EquivalenceReport:
    """Compare Richardson iterates with the field solver's DN substep cycle.

    Both start from the level-n unknowns.  The deviation of block ``j`` at
    iteration ``k`` is ``|X_k^R - X_k^DN|_j / max(|X_k^DN|_j, 1e-14)``;
    the report carries the maximum over ``k <= k_max`` and over blocks.
    ``negative_control`` replaces the preconditioner with ``A`` itself.
    """
    f_new = solver.forcing_at(forcing, state.t + solver.time.dt)
    system = assemble_block_system(solver, state, f_new)
    precond = Preconditioner(system, full=negative_control)
    cfg = CouplingConfig(tol=1e-300, max_iter=max(1, k_max))
    rich = richardson_iterate(
        system, precond, system.pack(state.iterate), AlphaStrategy.fixed(alpha), cfg,
        keep_iterates=True, max_iter=k_max, stop=False,
    )
    it = state.iterate
    worst, where, when = 0.0, None, None
    per_block = {name: 0.0 for name in BLOCK_NAMES}
    for k in range(1, k_max + 1):
        it = solver.dn_cycle(state, it, solver.sc_correction_terms(state, it, alpha, f_new), f_new)
        xd = system.pack(it)
        xr = rich.iterates[k]
        for j, name in enumerate(BLOCK_NAMES, start=1):
            a, b = system.block(xr, j), system.block(xd, j)
            if a.size == 0:
                continue
            dev = float(np.linalg.norm(a - b) / max(np.linalg.norm(b), NORM_FLOOR))
            if not math.isfinite(dev):
                dev = math.inf
            per_block[name] = max(per_block[name], dev)
            if dev > worst:
                worst, where, when = dev, name, k
    return EquivalenceReport(worst, per_block, where if worst > CERTIFY_TOL else None,
                             when if worst > CERTIFY_TOL else None)
