"""Velocity-Verlet step time: compiled kernel vs numpy fallback.

    python benchmarks/bench_md.py [--steps 2000] [--sizes 5 10 25]
"""

import argparse
import time

import numpy as np

from iontransport.md import backend
from iontransport.md.engine import MDState, integrate
from iontransport.statics import solve_equilibrium
from iontransport.trap import TrapConfig


def time_kernel(kernel, trap, config, n_steps, repeats=3):
    state = MDState.displaced(config, 1, 1e-3)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        integrate(state, trap, n_steps, sample_every=n_steps, kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    return best / n_steps


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--sizes", type=int, nargs="+", default=[5, 10, 25])
    args = parser.parse_args(argv)
    trap = TrapConfig.default()
    if backend.compiled_kernel is None:
        print("compiled kernel not built; only the fallback is timed")
    print(f"{'N':>4} {'python us/step':>15} {'cython us/step':>15} {'speedup':>8}")
    for n in args.sizes:
        config = solve_equilibrium(trap, n)
        py = time_kernel(backend.python_kernel, trap, config, args.steps)
        if backend.compiled_kernel is None:
            print(f"{n:>4} {py * 1e6:>15.2f} {'-':>15} {'-':>8}")
            continue
        cy = time_kernel(backend.compiled_kernel, trap, config, args.steps)
        print(f"{n:>4} {py * 1e6:>15.2f} {cy * 1e6:>15.2f} {py / cy:>8.1f}")


if __name__ == "__main__":
    main()
