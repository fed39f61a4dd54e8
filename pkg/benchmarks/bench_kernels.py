"""Time the compiled and numpy GRAPE sweeps on the restricted-space problems.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from rydsim import kernels
from rydsim.grape import GrapeConfig, _problem, initial_pulses


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="*", default=[4, 6, 8, 10])
    args = ap.parse_args()
    compiled = kernels.compiled_grape_sweep()
    print(f"{'N':>3} {'dim':>5} {'python ms':>10} {'cython ms':>10} {'speedup':>8} {'max |dgrad|':>12}")
    for n in args.sizes:
        sched = initial_pulses(n, GrapeConfig(t_final=n / 2))
        _, controls, psi0, psif = _problem(sched, None, None, None)
        amps, dt = sched.amplitudes(), sched.grid.dt

        def run(fn):
            return fn(controls, amps, dt, psi0, psif, True)

        t_py = min(timeit.repeat(lambda: run(kernels.python_grape_sweep), number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{n:>3} {len(psi0):>5} {1e3 * t_py:>10.2f} {'n/a':>10}")
            continue
        t_cy = min(timeit.repeat(lambda: run(compiled), number=1, repeat=args.repeat))
        diff = np.abs(run(compiled)[1] - run(kernels.python_grape_sweep)[1]).max()
        print(f"{n:>3} {len(psi0):>5} {1e3 * t_py:>10.2f} {1e3 * t_cy:>10.2f} {t_py / t_cy:>8.1f} {diff:>12.2e}")


if __name__ == "__main__":
    main()
