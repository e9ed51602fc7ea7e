"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--no-e2e]

Kernel timings call the ``*_numba`` and ``*_numpy`` functions side by side on
the same inputs (after one warm-up call, so compilation is excluded).  The
end-to-end rows run a capacity solve in fresh interpreters, once per value of
``SOBOLEV_LAB_NO_JIT``, so they include import and compile cost.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sobolev_lab import kernels
from sobolev_lab._jit import HAVE_NUMBA
from sobolev_lab.capacity import _Energy
from sobolev_lab.grid import Grid

E2E = """
import time, numpy as np
from sobolev_lab.capacity import CondenserProblem, p_capacity
from sobolev_lab.grid import Grid
g = Grid((-1.0, -1.0), (1.0, 1.0), (65, 65))
P = g.points(); r = np.sqrt((P * P).sum(-1))
t = time.perf_counter()
e = p_capacity(CondenserProblem(g, r <= 0.25, r < 1 - 1e-12, 1.5)).energy
print(f"{time.perf_counter() - t:.3f} {e:.12g}")
"""


def cases():
    rng = np.random.default_rng(0)
    values = rng.normal(size=200_000)
    offsets = np.arange(-40, 41, 4, dtype=np.int64)
    out_idx = np.arange(100, 199_900, dtype=np.int64)
    weights = rng.random(offsets.size)
    yield "gather_convolve (200k x 21)", "gather_convolve", (values, out_idx, offsets, weights)

    grid = Grid((0.0, 0.0), (1.0, 1.0), (257, 257))
    e = _Energy(grid)
    u = rng.random(grid.size)
    args = (u, e.cells, e.edge_a, e.edge_b, e.edge_w, 1.5, 1e-4, e.vol, True)
    yield "cell_energy 2D 257^2, p=1.5", "cell_energy", args

    x0, y0 = rng.uniform(-1.2, 1.2, (2, 100_000))
    x1, y1 = x0 + 0.05, y0 + 0.05
    yield "disc_rect_area (100k cells)", "disc_rect_area", (x0, x1, y0, y1, 0.9)


def best_of(fn, args, repeat):
    fn(*args)
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def e2e():
    rows = []
    for flag in ("0", "1"):
        env = dict(os.environ, SOBOLEV_LAB_NO_JIT=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        seconds, energy = out.stdout.split()
        rows.append(("numpy" if flag == "1" else "numba", float(seconds), energy))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-e2e", action="store_true", help="skip the subprocess capacity solve")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    print(f"{'kernel':<32}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for label, name, kargs in cases():
        t_np = best_of(getattr(kernels, f"{name}_numpy"), kargs, args.repeat)
        t_nb = best_of(getattr(kernels, f"{name}_numba"), kargs, args.repeat)
        print(f"{label:<32}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")

    if not args.no_e2e:
        print("\ncapacity solve, annulus 65^2, p=1.5 (fresh process)")
        for backend, seconds, energy in e2e():
            print(f"  {backend:<6} {seconds:8.3f} s   energy {energy}")


if __name__ == "__main__":
    main()
