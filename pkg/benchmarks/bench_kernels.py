"""Time the compiled kernels against the pure-Python fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.  Each kernel is
run on identical inputs by both backends; the table reports the best wall
time of ``N`` repeats and the speed-up.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from dnalpha import _kernels_py

try:
    from dnalpha import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def _cases():
    dt = 1e-3
    ms, beta, mf = 1.1 * 0.1 / dt**2, 5.7e6, 7.461 / dt**2
    n = 20_000
    f = np.sin(np.arange(n + 1) * 0.01) * 10.0
    rec = np.zeros(2001)
    return {
        "lc_run (20k steps)": ("lc_run", (ms, beta, mf, dt, 0.02, 1e-3, 0.9e-3, 0.8e-3, 0.1, 0.1, 0.05, 2.0, f, n)),
        "mono_run (20k steps)": ("mono_run", (ms, beta, mf, dt, 1e-3, 0.7e-3, 0.3, f, n)),
        "sc_iterate (2k iterations)": (
            "sc_iterate", (ms, beta, mf, dt, 0.87, 1e-3, 0.9e-3, 0.1, 3.0, 1e-300, 2000, 0.0, 1e300, rec)),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<28}{'python [ms]':>14}{'cython [ms]':>14}{'speed-up':>10}")
    for label, (name, call_args) in _cases().items():
        py = min(timeit.repeat(lambda: getattr(_kernels_py, name)(*call_args), number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{label:<28}{py * 1e3:>14.2f}{'n/a':>14}{'n/a':>10}")
            continue
        cy = min(timeit.repeat(lambda: getattr(compiled, name)(*call_args), number=1, repeat=args.repeat))
        print(f"{label:<28}{py * 1e3:>14.2f}{cy * 1e3:>14.3f}{py / cy:>9.0f}x")


if __name__ == "__main__":
    main()
