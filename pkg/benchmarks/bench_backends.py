"""Timing comparison of the two filtration-kernel backends.

Runs the identical chunked iteration through the pure-numpy loop and the
numba-compiled twin on the same inputs and prints a small table.  Two
regimes: the reduced tower engine (tiny state, loop overhead dominates)
and a generic dense spectrum (vector arithmetic dominates).

Usage: python benchmarks/bench_backends.py
"""

import os
import time

import numpy as np

from darkfilter._kernels import DEPLETION_FLOOR, iterate_chunk_numpy


def jit_twin():
    try:
        from numba import njit
    except ImportError:
        return None
    from darkfilter import _kernels
    return njit(cache=True)(_kernels._iterate_chunk_jit)


def make_case(dim, n_steps, seed):
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=dim)
    phases = np.exp(-1j * angles)
    removal = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    removal /= np.linalg.norm(removal)
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    chunk = min(n_steps, max(1, 4_000_000 // dim))
    return psi, phases, removal, chunk


def run(kernel, psi, phases, removal, chunk, n_steps):
    history = np.empty((chunk, psi.size), dtype=np.complex128)
    survival = np.empty(chunk, dtype=np.float64)
    state = psi.copy()
    done = 0
    t0 = time.perf_counter()
    while done < n_steps:
        take = min(chunk, n_steps - done)
        steps = kernel(state, phases, removal, history[:take], survival[:take])
        done += steps
        if steps < take or survival[steps - 1] < DEPLETION_FLOOR:
            break
    dt = time.perf_counter() - t0
    return dt, float(survival[min(done, chunk) - 1]), state


def main():
    jitted = jit_twin()
    cases = [
        ("tower L=12", 13, 200_000, 3),
        ("generic d=512", 512, 20_000, 4),
    ]
    print(f"{'case':<16}{'steps':>9}{'numpy [s]':>12}{'numba [s]':>12}"
          f"{'speedup':>9}")
    for name, dim, n_steps, seed in cases:
        psi, phases, removal, chunk = make_case(dim, n_steps, seed)
        t_np, s_np, out_np = run(iterate_chunk_numpy, psi, phases, removal,
                                 chunk, n_steps)
        if jitted is None:
            print(f"{name:<16}{n_steps:>9}{t_np:>12.3f}{'n/a':>12}{'n/a':>9}")
            continue
        # warm the compile outside the timed region
        run(jitted, psi, phases, removal, chunk, min(n_steps, 10))
        t_jit, s_jit, out_jit = run(jitted, psi, phases, removal,
                                    chunk, n_steps)
        drift = float(np.max(np.abs(out_np - out_jit)))
        assert abs(s_np - s_jit) <= 1e-12 * max(s_np, 1e-30), (s_np, s_jit)
        assert drift < 1e-12, drift
        print(f"{name:<16}{n_steps:>9}{t_np:>12.3f}{t_jit:>12.3f}"
              f"{t_np / t_jit:>9.2f}")
    if jitted is None:
        print("numba unavailable; only the numpy backend was timed")
    if os.environ.get("DARKFILTER_DISABLE_NUMBA"):
        print("note: DARKFILTER_DISABLE_NUMBA only affects the library "
              "dispatch; both twins are timed here regardless")


if __name__ == "__main__":
    main()
