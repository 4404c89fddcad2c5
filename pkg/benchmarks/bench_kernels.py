"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--end-to-end]

Kernel timings use reference-scale shapes: 250 clients x 25 coordinates for the
client-side proxes. ``--end-to-end`` additionally times 50 global iterations
of the simulator under each backend (each in a fresh interpreter, since the
backend is fixed at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hfsad import _kernels
from hfsad._accel import NUMBA_AVAILABLE

E2E = """
import time
from hfsad.simulator import RunConfig, run
from hfsad.problems import GeneratorParams, generate_instance
from hfsad._rng import derive_rng
cfg = RunConfig(K_z=50, K_M=10)
inst = generate_instance(cfg, GeneratorParams(), derive_rng(0))
run(RunConfig(K_z=1, K_M=1), inst)  # warm-up / JIT
t0 = time.perf_counter(); run(cfg, inst); print(time.perf_counter() - t0)
"""


def bench(fn, args, repeat):
    fn(*args)  # compile / warm caches
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--end-to-end", action="store_true")
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    n, m = 250, 25
    u = rng.normal(0, 3, n * m)
    w = np.full_like(u, 12.0)
    mu = np.full_like(u, 0.05)
    t = np.full_like(u, 0.1)
    V, X = rng.normal(size=(n, m)), rng.normal(size=(n, m))
    y, step = rng.exponential(5.0, n), np.full(n, 0.05)

    cases = {
        "smoothed_prox": ((_kernels.smoothed_prox_numba, _kernels.smoothed_prox_numpy),
                          (u, w, mu, t, np.empty_like(u))),
        "phase_prox": ((_kernels.phase_prox_numba, _kernels.phase_prox_numpy),
                       (V, X, y, step, 5.0, np.empty_like(V))),
    }
    if not NUMBA_AVAILABLE:
        print("numba backend disabled; the 'numba' column runs the python fallback")
    print(f"{'kernel':<16}{'numba [us]':>12}{'numpy [us]':>12}{'speedup':>10}")
    for name, ((fast, slow), kargs) in cases.items():
        tf = bench(fast, kargs, args.repeat) * 1e6
        ts = bench(slow, kargs, args.repeat) * 1e6
        print(f"{name:<16}{tf:>12.1f}{ts:>12.1f}{ts / tf:>10.1f}x")

    if args.end_to_end:
        for backend in ("numba", "numpy"):
            env = dict(os.environ, HFSAD_BACKEND=backend)
            out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True,
                                 text=True, check=True).stdout.strip()
            print(f"50 global iterations (K_M=10, reference scale), {backend}: {float(out):.2f} s")


if __name__ == "__main__":
    main()
