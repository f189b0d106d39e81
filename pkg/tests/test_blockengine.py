import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnalpha.blockengine import (
    BLOCK_NAMES,
    CertificationError,
    Preconditioner,
    assemble_block_system,
    certify_equivalence,
    richardson_iterate,
)
from dnalpha.fieldsolver import FieldSolver, GridState
from dnalpha.grid import Grid
from dnalpha.params import REF, REF_TIME, AlphaStrategy, CouplingConfig

from oracles import random_grid_state

COARSE = Grid(24, 6)


@pytest.fixture(scope="module")
def solver():
    return FieldSolver(COARSE, REF, REF_TIME)


@pytest.fixture(scope="module")
def system(solver):
    s = solver.monolithic_step(GridState.at_rest(COARSE))
    return assemble_block_system(solver, s, solver.forcing_at(10.0, 2e-3)), s


def test_layout(system):
    sys_, _ = system
    g = COARSE
    assert sys_.sizes == (g.n_faces, g.n_pressure, g.n_interface, g.n_interface, 0, g.n_interface)
    assert sys_.matrix.shape == (sum(sys_.sizes),) * 2
    assert len(BLOCK_NAMES) == 6


def test_zero_data_zero_solution(solver):
    sys_ = assemble_block_system(solver, GridState.at_rest(COARSE, 0.0))
    assert np.all(sys_.rhs == 0)
    assert np.all(sys_.solve() == 0)


def test_solution_is_monolithic_step(solver, system):
    sys_, s = system
    x = sys_.solve()
    mono = solver.monolithic_step(s, forcing=10.0)
    it = sys_.unpack(x)
    np.testing.assert_allclose(it.eta, mono.eta, rtol=1e-10)
    np.testing.assert_allclose(it.p, mono.p, rtol=1e-8, atol=1e-10 * np.max(np.abs(mono.p)))
    np.testing.assert_allclose(it.w, mono.w, rtol=1e-8)


def test_pack_unpack_round_trip(system):
    sys_, s = system
    x = sys_.pack(s.iterate)
    back = sys_.unpack(x)
    for a, b in zip(back.blocks, s.iterate.blocks):
        np.testing.assert_array_equal(a, b)


def test_exact_start_needs_no_iterations(system):
    sys_, _ = system
    x = sys_.solve()
    r = richardson_iterate(sys_, Preconditioner(sys_), x, AlphaStrategy.fixed(0.5), CouplingConfig())
    assert r.iterations == 0 and r.converged
    assert r.residuals[0] <= 1e-10 * np.linalg.norm(sys_.rhs)


def test_preconditioner_drops_only_structure_to_fluid_block(system):
    sys_, _ = system
    P = Preconditioner(sys_)
    diff = (sys_.matrix - P.matrix).tocoo()
    off = sys_.offsets
    rows_in = (diff.row >= off[2]) & (diff.row < off[3])
    cols_in = (diff.col >= off[5]) & (diff.col < off[6])
    assert diff.nnz > 0 and np.all(rows_in & cols_in)


@given(seed=st.integers(0, 2**32 - 1))
def test_preconditioner_solve_exact(system, seed):
    sys_, _ = system
    P = Preconditioner(sys_)
    r = np.random.default_rng(seed).standard_normal(sys_.matrix.shape[0])
    z = P.solve(r)
    assert np.linalg.norm(P.apply(z) - r) <= 1e-12 * np.linalg.norm(r)


def test_fixed_richardson_converges(system):
    sys_, s = system
    r = richardson_iterate(sys_, Preconditioner(sys_), sys_.pack(s.iterate), AlphaStrategy.fixed(0.5),
                           CouplingConfig(tol=1e-8))
    assert r.converged
    assert r.residuals[-1] / np.linalg.norm(sys_.rhs) < 1e-8
    np.testing.assert_allclose(r.x, sys_.solve(), rtol=1e-5, atol=1e-8 * np.max(np.abs(r.x)))


def test_minimum_residual_non_increasing(system):
    sys_, s = system
    r = richardson_iterate(sys_, Preconditioner(sys_), sys_.pack(s.iterate), AlphaStrategy.minimum_residual(0.5),
                           CouplingConfig(tol=1e-10))
    assert r.converged
    res = np.array(r.residuals)
    assert np.all(res[1:] <= res[:-1] * (1 + 1e-12))


def test_minimum_residual_alpha_is_optimal(system):
    sys_, s = system
    P = Preconditioner(sys_)
    x = sys_.pack(s.iterate)
    z = P.solve(sys_.residual(x))
    a = sys_.minimum_residual_alpha(x, z)
    best = sys_.residual_norm(x + a * z)
    for da in (-1e-3, 1e-3):
        assert best <= sys_.residual_norm(x + (a + da) * z)


def test_divergent_alpha_hits_iteration_cap(system):
    sys_, s = system
    r = richardson_iterate(sys_, Preconditioner(sys_), sys_.pack(s.iterate), AlphaStrategy.fixed(1.9),
                           CouplingConfig(max_iter=50))
    assert not r.converged and r.status in ("max_iter", "stagnated")


def test_stagnation_detected(system):
    sys_, s = system
    # a vanishing step length never moves the iterate
    r = richardson_iterate(sys_, Preconditioner(sys_), sys_.pack(s.iterate), AlphaStrategy.fixed(1e-300),
                           CouplingConfig(max_iter=100))
    assert r.status == "stagnated" and r.iterations == 20


@pytest.mark.parametrize("alpha,k", [(1.0, 1), (0.14, 20), (0.1, 20), (1.0, 20)])
def test_certification(solver, alpha, k):
    s = random_grid_state(COARSE, np.random.default_rng(7))
    rep = certify_equivalence(solver, s, alpha, k, forcing=5.0)
    assert rep.max_deviation <= 1e-9
    assert rep.check() is rep


def test_negative_control(solver):
    s = random_grid_state(COARSE, np.random.default_rng(8))
    rep = certify_equivalence(solver, s, 0.14, 5, negative_control=True)
    assert rep.max_deviation > 1e-3
    assert rep.offending_block in BLOCK_NAMES and rep.offending_iteration >= 1
    with pytest.raises(CertificationError, match=rep.offending_block):
        rep.check()
