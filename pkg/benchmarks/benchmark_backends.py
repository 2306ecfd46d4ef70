#!/usr/bin/env python3
"""Benchmark the propagation backends against each other.

Times the forward subflow sweep and the gradient sweep of the pure-numpy
backend and, when built, the compiled FFTW core on identical plans and
states.  Reports milliseconds per call (best of --repeats) and the
compiled speedup.

    python3 benchmarks/benchmark_backends.py
    python3 benchmarks/benchmark_backends.py --sizes 200,1024,4096 --batch 32
"""

import argparse
import time

import numpy as np

import splitlearn as sl
from splitlearn.engine import build_plan, phase_tables
from splitlearn.engine import numpy_backend

try:
    from splitlearn.engine import fftw_backend
except ImportError:
    fftw_backend = None


def best_of(fn, repeats):
    fn()  # warm up plans and caches
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(scheme, M, batch, n_steps, repeats):
    grid = sl.build_grid(M, 10.0)
    pot = sl.named_potential(grid, "v1")
    desc = sl.named_scheme(scheme)
    plan = build_plan(desc.coeffs.alpha, desc.coeffs.beta, 1.0 / 7.0, n_steps)
    tables, index, row_kinds = phase_tables(plan, pot.samples, grid.ksq)

    rng = np.random.default_rng(0)
    u0 = rng.normal(size=(batch, M)) + 1j * rng.normal(size=(batch, M))
    u0 /= np.linalg.norm(u0, axis=-1, keepdims=True)
    uref = np.roll(u0, 1, axis=0)

    rows = []
    backends = [("numpy", numpy_backend)]
    if fftw_backend is not None:
        backends.append(("cython-fftw", fftw_backend))
    for name, mod in backends:
        fwd = best_of(lambda: mod.propagate(u0, plan, tables, index, row_kinds), repeats)
        grad = best_of(
            lambda: mod.propagate_with_time_grad(
                u0, uref, plan, tables, index, row_kinds, pot.samples, grid.ksq
            ),
            repeats,
        )
        rows.append((name, fwd, grad))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="200,1024", help="comma list of grid sizes M")
    ap.add_argument("--batch", type=int, default=50, help="states per call")
    ap.add_argument("--steps", type=int, default=70, help="outer steps per call")
    ap.add_argument("--scheme", default="learn5a", help="built-in scheme name")
    ap.add_argument("--repeats", type=int, default=5, help="timed repeats, best kept")
    args = ap.parse_args(argv)

    sizes = [int(s) for s in args.sizes.split(",") if s]
    ops = sl.subflow_count(sl.named_scheme(args.scheme).coeffs, args.steps)
    print(f"scheme {args.scheme}, {args.steps} steps ({ops} subflows), "
          f"batch {args.batch}, best of {args.repeats}")
    if fftw_backend is None:
        print("compiled backend not built; timing numpy only")
    header = f"{'M':>6} {'backend':>12} {'forward ms':>11} {'gradient ms':>12} {'speedup':>8}"
    print(header)
    for M in sizes:
        rows = bench_case(args.scheme, M, args.batch, args.steps, args.repeats)
        base_fwd, base_grad = rows[0][1], rows[0][2]
        for name, fwd, grad in rows:
            speed = "" if name == "numpy" else f"{base_fwd / fwd:5.2f}x/{base_grad / grad:4.2f}x"
            print(f"{M:>6} {name:>12} {fwd * 1e3:>11.2f} {grad * 1e3:>12.2f} {speed:>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
