"""Compiled vs numpy kernels.

Times ``level_values`` on Rabi coefficients over an energy grid, and a full
spectrum solve under each backend (the solve runs in a subprocess so the
backend is picked at import, as in normal use).

    python3 benchmarks/bench_kernels.py [--levels 40] [--points 2000]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from aimsolve import _kernels_py
from aimsolve.models import RabiParams, rabi_coefficients

try:
    from aimsolve import _kernels
except ImportError:
    _kernels = None

SOLVE = (
    "import time; from aimsolve import kernels; from aimsolve.models import RabiParams, rabi_spectrum;"
    "t = time.perf_counter(); rabi_spectrum(RabiParams(0.5, 0.75), 3);"
    "print(kernels.BACKEND, time.perf_counter() - t)"
)


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def solve_time(pure):
    env = dict(os.environ)
    env.pop("AIMSOLVE_PURE_PYTHON", None)
    if pure:
        env["AIMSOLVE_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", SOLVE], capture_output=True, text=True, env=env, check=True)
    name, t = out.stdout.split()
    return name, float(t)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=40)
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    c = rabi_coefficients(RabiParams(0.5, 0.75), args.levels + 2)
    energies = np.linspace(-2.0, 6.0, args.points)
    coeffs = c.at_energy(energies, args.levels, dtype=np.longdouble)

    print(f"level_values: {args.levels} levels, {args.points} energies")
    t_py = best(lambda: _kernels_py.level_values(*coeffs, args.levels), args.repeat)
    print(f"  python    {t_py:8.3f} s")
    if _kernels is None:
        print("  compiled  not built (python3 setup.py build_ext --inplace)")
    else:
        t_c = best(lambda: _kernels.level_values(*coeffs, args.levels), args.repeat)
        ref = _kernels_py.level_values(*coeffs, args.levels)
        got = _kernels.level_values(*coeffs, args.levels)
        diff = max(float(np.max(np.abs(r - g))) for r, g in zip(ref, got))
        print(f"  compiled  {t_c:8.3f} s   speedup {t_py / t_c:5.1f}x   max |diff| {diff:.1e}")

    print("rabi_spectrum(omega0=0.5, kappa=0.75, n_max=3)")
    for pure in (True, False):
        name, t = solve_time(pure)
        print(f"  {name:9s} {t:8.3f} s")


if __name__ == "__main__":
    main()
