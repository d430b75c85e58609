"""Time the compiled pair-sum kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 400] [--repeat 5]

Prints one line per kernel and exponent with the best-of-``repeat`` time of
each implementation and the speed-up, then the same for a full resolvent
step with each backend forced through ``FRACFLOW_BACKEND``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fracflow import backend

STEP = """
import time
import numpy as np
from fracflow.grid import Interval, build_grid, build_kernel
from fracflow.nonlinearity import Perturbation, Phi
from fracflow.resolvent import ResolventConfig, resolvent_step
g = build_grid(Interval(-1, 1), 2.0 / {n}, 2.0)
k = build_kernel(g, 0.5, {p})
x = g.nodes[g.interior, 0]
v = g.extend(1 - x * x)
best = float("inf")
for _ in range({repeat}):
    t0 = time.perf_counter()
    resolvent_step(v, Phi.power({m}), Perturbation(), k, ResolventConfig(0.01))
    best = min(best, time.perf_counter() - t0)
print(best)
"""


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(n, repeat):
    rng = np.random.default_rng(0)
    K = rng.uniform(0, 1, size=(n, n))
    u = rng.normal(size=n)
    py = backend.implementation("python")
    c = backend.implementation("compiled")
    threads = backend.THREADS
    print(f"kernels on a {n} x {n} block, {threads} thread(s)")
    print(f"{'kernel':<16}{'p':>6}{'python [ms]':>14}{'compiled [ms]':>16}{'speed-up':>10}")
    for p in (2.0, 3.0, 1.5, 2.7):
        cases = {
            "row_flux": (lambda: py.row_flux(K, u, u, p), lambda: c.row_flux(K, u, u, p, threads)),
            "pair_power_sum": (lambda: py.pair_power_sum(K, u, u, p), lambda: c.pair_power_sum(K, u, u, p, threads)),
            "hessian_weights": (
                lambda: py.hessian_weights(K, u, u, p, 1e-9),
                lambda: c.hessian_weights(K, u, u, p, 1e-9, threads),
            ),
        }
        for name, (f_py, f_c) in cases.items():
            t_py = best_time(f_py, repeat)
            t_c = best_time(f_c, repeat)
            print(f"{name:<16}{p:>6g}{1e3 * t_py:>14.3f}{1e3 * t_c:>16.3f}{t_py / t_c:>10.1f}")


def bench_step(n, repeat):
    print(f"\nresolvent step, {n} cells")
    print(f"{'p':>4}{'m':>6}{'python [ms]':>14}{'compiled [ms]':>16}{'speed-up':>10}")
    for p, m in ((2.0, 1.0), (3.0, 2.0), (1.5, 0.5)):
        times = {}
        for name in ("python", "compiled"):
            env = dict(os.environ, FRACFLOW_BACKEND=name)
            code = STEP.format(n=n, p=p, m=m, repeat=repeat)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            times[name] = float(out.stdout)
        ratio = times["python"] / times["compiled"]
        print(f"{p:>4g}{m:>6g}{1e3 * times['python']:>14.2f}{1e3 * times['compiled']:>16.2f}{ratio:>10.1f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "compiled" not in backend.available():
        sys.exit("the compiled extension is not built; run `pip install -e . --no-build-isolation` first")
    bench_kernels(args.n, args.repeat)
    bench_step(args.n // 2, max(1, args.repeat // 2))


if __name__ == "__main__":
    main()
