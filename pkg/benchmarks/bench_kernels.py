"""Compare the compiled and pure-Python path kernels.

Each kernel runs on the same generator state in both backends; the script
checks that outputs agree bit for bit and reports time per call and speedup.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from condbm import kernels
from condbm.analytic import DriftSpec
from condbm.rng import RngStream
from condbm.sde import meander_grid


def cases():
    grid = meander_grid(1.0).times
    drift = DriftSpec("-x - 0.3*tanh(x)", 1.0)
    t_theta = np.linspace(1e-3, 1.0, 1001)
    t_rej = np.linspace(0.0, 1.0, 1001)
    pts = np.linspace(-5.0, 5.0, 201)
    return {
        "em_halfline": lambda k, g: k.em_halfline(grid, 0.01, 1.0, 1e-6, 32, g, 0.5),
        "em_wedge": lambda k, g: k.em_wedge(grid, -0.01, 0.01, 1.0, 1e-6, 32, g, 0.5),
        "em_theta": lambda k, g: k.em_theta(t_theta, -0.01, 0.02, drift.table, drift.program, 32, g, 0.5),
        "reject_halfline": lambda k, g: k.reject_halfline(t_rej, 0.05, 10 ** 6, g),
        "coalesce": lambda k, g: k.coalesce(1e-3, 1000, 1, pts, np.arange(201), np.arange(201), g,
                                            None, False, False),
    }


def timed(fn, backend, repeat):
    out = fn(backend, RngStream(1, 0).generator())
    t0 = time.perf_counter()
    for i in range(repeat):
        fn(backend, RngStream(1, i + 1).generator())
    return out, (time.perf_counter() - t0) / repeat


def same(a, b):
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return a == b or (a != a and b != b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5, help="calls per kernel for the Python backend")
    args = ap.parse_args(argv)
    c = kernels.get_backend("cython")
    py = kernels.get_backend("python")
    print(f"{'kernel':<16s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}  identical")
    for name, fn in cases().items():
        out_p, tp = timed(fn, py, args.repeat)
        out_c, tc = timed(fn, c, 20 * args.repeat)
        print(f"{name:<16s} {1e3 * tp:12.3f} {1e3 * tc:12.3f} {tp / tc:8.1f}  {same(out_p, out_c)}")


if __name__ == "__main__":
    main()
