"""Kernel selection: the compiled extension when importable, else pure Python.

Set ``DNALPHA_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("DNALPHA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

lc_run = _impl.lc_run
mono_run = _impl.mono_run
sc_iterate = _impl.sc_iterate

SC_CONVERGED = _kernels_py.SC_CONVERGED
SC_MAX_ITER = _kernels_py.SC_MAX_ITER
SC_BLOWUP = _kernels_py.SC_BLOWUP

__all__ = ["BACKEND", "lc_run", "mono_run", "sc_iterate", "SC_CONVERGED", "SC_MAX_ITER", "SC_BLOWUP"]
