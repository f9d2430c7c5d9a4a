"""Kernel timing: compiled path vs pure-numpy fallback.

Times each hot kernel against its `_py` twin in one process, then runs
one small end-to-end pass per path in subprocesses (the path is chosen
at import time via LOCKSTEP_NO_NUMBA, so a fair whole-run comparison
needs separate interpreters).

    python3 benchmarks/bench_kernels.py [--size N] [--repeat K]
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from lockstep import encoding, kernels, prng


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pairs(n, repeat):
    state = prng.derive_state(1, "bench")
    out_f = np.empty(n * n)
    out_i = np.empty(n * n, dtype=np.int64)
    a = np.random.default_rng(0).random((n, n))
    b = np.random.default_rng(1).random((n, n))
    c = np.zeros((n, n))
    g = np.random.default_rng(2).random((n, n))
    buf = np.empty_like(g)
    t_seg = np.random.default_rng(3).integers(0, 4, n).astype(np.int64)
    q_band = np.random.default_rng(4).integers(0, 4, n).astype(np.int64)
    top = np.zeros(n + 1, dtype=np.int64)
    left = np.zeros(n, dtype=np.int64)
    bottom = np.empty(n + 1, dtype=np.int64)
    right = np.empty(n + 1, dtype=np.int64)
    blob = out_f.tobytes()

    def run_matmul(fn):
        def go():
            for r in range(n):
                fn(a, b, r, 0, n, c)

        return go

    def run_jacobi(fn):
        def go():
            for i in range(1, n - 1):
                fn(g, buf, i)

        return go

    def run_sw(fn):
        def go():
            fn(t_seg, q_band, top, left, bottom, right, 0, 0)

        return go

    return [
        ("fill_uniform", lambda: kernels.fill_uniform(state, out_f),
         lambda: kernels.fill_uniform_py(state, out_f)),
        ("fill_letters", lambda: kernels.fill_letters(state, out_i, 4),
         lambda: kernels.fill_letters_py(state, out_i, 4)),
        ("matmul_row_block", run_matmul(kernels.matmul_row_block),
         run_matmul(kernels.matmul_row_block_py)),
        ("jacobi_sweep_row", run_jacobi(kernels.jacobi_sweep_row),
         run_jacobi(kernels.jacobi_sweep_row_py)),
        ("sw_block", run_sw(kernels.sw_block), run_sw(kernels.sw_block_py)),
        ("fast_digest", lambda: kernels.fast_digest(blob),
         lambda: encoding.fnv1a64(blob)),
    ]


def bench_whole_run(no_numba):
    env = dict(os.environ)
    if no_numba:
        env["LOCKSTEP_NO_NUMBA"] = "1"
    else:
        env.pop("LOCKSTEP_NO_NUMBA", None)
    out = tempfile.mkdtemp(prefix="lockstep-bench-")
    cmd = [
        sys.executable, "-m", "lockstep.cli", "run",
        "--app", "jacobi", "--size", "96", "--iters", "400", "--ranks", "3",
        "--strategy", "multi-ckpt", "--out", out,
    ]
    subprocess.run(cmd, env=env, check=True, capture_output=True)
    with open(os.path.join(out, "timings.json")) as f:
        return json.load(f)["wall_s"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=192)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print("active kernel path: %s" % kernels.ACTIVE)
    if kernels.ACTIVE != "numba":
        print("(numba unavailable or disabled; both columns run the fallback)")
    pairs = bench_pairs(args.size, args.repeat)
    for _, fast, _ in pairs:
        fast()  # compile/warm before timing
    print()
    print("%-18s %12s %12s %9s" % ("kernel", "active (ms)", "numpy (ms)", "speedup"))
    for name, fast, slow in pairs:
        tf = best_of(fast, args.repeat) * 1e3
        ts = best_of(slow, args.repeat) * 1e3
        print("%-18s %12.3f %12.3f %8.1fx" % (name, tf, ts, ts / tf if tf > 0 else 0.0))

    print()
    print("whole run (jacobi 96, 400 iterations, multi-ckpt, fresh interpreter each):")
    wall_active = bench_whole_run(no_numba=False)
    wall_numpy = bench_whole_run(no_numba=True)
    print("  default path: %7.3f s" % wall_active)
    print("  LOCKSTEP_NO_NUMBA=1: %7.3f s" % wall_numpy)
    print("(first-call JIT cache loading is charged to the default path, so very")
    print(" short runs can come out faster on the fallback.  The numpy matmul row")
    print(" block deliberately avoids the faster `@` operator: BLAS reduces in a")
    print(" different order, and the fallback keeps the compiled path's summation")
    print(" order so both paths produce identical bits)")


if __name__ == "__main__":
    main()
