import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnalpha import _kernels_py, kernels

compiled = pytest.importorskip("dnalpha._kernels")


def _coeffs(log_rs, log_beta, dt, mu=7.46):
    ms = 1.1 * 10**log_rs * 0.1 / dt**2
    return ms, 5.7e6 * 10**log_beta, mu / dt**2


def test_compiled_backend_selected():
    assert kernels.BACKEND == "cython"


def test_pure_python_forced_by_environment():
    env = dict(os.environ, DNALPHA_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import dnalpha.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


@given(
    alpha=st.floats(0.005, 1.0), log_rs=st.floats(-2, 1), log_beta=st.floats(-3, 1),
    log_dt=st.floats(-4, -2), n=st.integers(1, 400),
)
def test_lc_run_agrees(alpha, log_rs, log_beta, log_dt, n):
    dt = 10**log_dt
    ms, beta, mf = _coeffs(log_rs, log_beta, dt)
    f = np.sin(np.arange(n + 1) * 0.3) * 10.0
    args = (ms, beta, mf, dt, alpha, 1e-3, 0.9e-3, 0.8e-3, 0.1, 0.1, 0.05, 2.0, f, n)
    ea, sa = compiled.lc_run(*args)
    eb, sb = _kernels_py.lc_run(*args)
    assert np.array_equal(sa, sb)
    np.testing.assert_allclose(ea, eb, rtol=1e-11, atol=1e-300)


def test_lc_run_rescales_huge_growth():
    dt = 1e-3
    ms, beta, mf = _coeffs(0, -20, dt)
    f = np.zeros(5001)
    for impl in (compiled, _kernels_py):
        eta, log_scale = impl.lc_run(ms, beta, mf, dt, 1.0, 1e-3, 0.9e-3, 0.8e-3, 0.1, 0.1, 0.1, 0.0, f, 5000)
        assert np.all(np.isfinite(eta))
        assert np.max(log_scale) > 0


@given(log_rs=st.floats(-2, 1), log_beta=st.floats(-3, 1), log_dt=st.floats(-4, -2), n=st.integers(1, 300))
def test_mono_run_agrees(log_rs, log_beta, log_dt, n):
    dt = 10**log_dt
    ms, beta, mf = _coeffs(log_rs, log_beta, dt)
    f = np.cos(np.arange(n + 1)) * 5.0
    args = (ms, beta, mf, dt, 1e-3, 0.7e-3, 0.3, f, n)
    np.testing.assert_allclose(compiled.mono_run(*args), _kernels_py.mono_run(*args), rtol=1e-11, atol=1e-300)


@given(alpha=st.floats(0.01, 1.9), log_rs=st.floats(-2, 1), log_dt=st.floats(-4, -2))
def test_sc_iterate_agrees(alpha, log_rs, log_dt):
    dt = 10**log_dt
    ms, beta, mf = _coeffs(log_rs, 0.0, dt)
    ra, rb = np.zeros(301), np.zeros(301)
    args = (ms, beta, mf, dt, alpha, 1e-3, 0.9e-3, 0.1, 3.0, 1e-6, 300, 1e-14, 1e12)
    a = compiled.sc_iterate(*args, ra)
    b = _kernels_py.sc_iterate(*args, rb)
    assert a[1:] == b[1:]
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    np.testing.assert_allclose(ra, rb, rtol=1e-12)
