"""Compare the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--trial-seconds S]

Prints per-call times for each hot kernel and the wall time of one simulated
trial with each backend (run in a subprocess, since the backend is fixed at
import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from relpose import _pykernels

try:
    from relpose import _kernels
except ImportError:
    _kernels = None

TRIAL_SNIPPET = """
import time
from relpose.kernels import BACKEND
from relpose.simulation import SimConfig, run_trial
t = time.perf_counter()
run_trial(SimConfig(duration={duration}), (0, 0))
print(BACKEND, time.perf_counter() - t)
"""


def kernel_cases(rng):
    w, a = rng.normal(0, 1, 3), rng.normal(0, 3, 3)
    xi = rng.normal(0, 1, 9)
    C = _pykernels.so3_exp(rng.normal(0, 1, 3))
    v, r = rng.normal(size=3), rng.normal(size=3)
    return {
        "so3_exp": lambda m: m.so3_exp(w),
        "b_blocks": lambda m: m.b_blocks(w, a, 0.01),
        "b_jacobians": lambda m: m.b_jacobians(w, a, 0.01),
        "se23_left_jacobian": lambda m: m.se23_left_jacobian(xi),
        "de23_adjoint": lambda m: m.de23_adjoint(C, v, r, -0.05),
        "de23_compose": lambda m: m.de23_compose(C, v, r, 0.0, C.T, r, v, 0.01),
        "de23_inverse": lambda m: m.de23_inverse(C, v, r, 0.01),
    }


def per_call(fn, mod, repeat):
    n = 2000
    return min(timeit.repeat(lambda: fn(mod), number=n, repeat=repeat)) / n


def trial_time(pure: bool, duration: float) -> tuple[str, float]:
    env = dict(os.environ)
    if pure:
        env["RELPOSE_PURE_PYTHON"] = "1"
    else:
        env.pop("RELPOSE_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", TRIAL_SNIPPET.format(duration=duration)],
                         env=env, check=True, capture_output=True, text=True).stdout.split()
    return out[0], float(out[1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--trial-seconds", type=float, default=20.0, help="simulated duration of the trial")
    args = p.parse_args(argv)

    if _kernels is None:
        print("compiled kernels not built; only the python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'python [us]':>14}{'cython [us]':>14}{'speedup':>10}")
    for name, fn in kernel_cases(rng).items():
        tp = per_call(fn, _pykernels, args.repeat) * 1e6
        if _kernels is None:
            print(f"{name:<22}{tp:>14.2f}{'-':>14}{'-':>10}")
            continue
        tc = per_call(fn, _kernels, args.repeat) * 1e6
        print(f"{name:<22}{tp:>14.2f}{tc:>14.2f}{tp / tc:>9.1f}x")

    print(f"\none {args.trial_seconds:g} s trial:")
    times = {}
    for pure in (True, False):
        backend, t = trial_time(pure, args.trial_seconds)
        times[backend] = t
        print(f"  {backend:<8}{t:8.2f} s")
    if len(times) == 2:
        print(f"  speedup {times['python'] / times['cython']:.2f}x")


if __name__ == "__main__":
    main()
