"""Timing comparison of the compiled kernels against the pure-Python fallback.

Runs each kernel on representative inputs, checks the two implementations
still agree bit-for-bit, and prints per-kernel timings with the speedup.

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --grid 120 --repeat 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from deskvln._kernels import _fallback

try:
    from deskvln._kernels import _core
except ImportError:
    _core = None


def _best_of(fn, args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _make_grid(n: int, seed: int) -> np.ndarray:
    rs = np.random.RandomState(seed)
    free = (rs.rand(n, n) > 0.25).astype(np.uint8)
    free[0, 0] = 1
    free[n - 1, n - 1] = 1
    return free


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=80, help="grid side length in cells")
    ap.add_argument("--points", type=int, default=400, help="points per DTW polyline")
    ap.add_argument("--repeat", type=int, default=3, help="best-of repetitions")
    args = ap.parse_args()

    if _core is None:
        print("compiled extension not built; timing the fallback only")

    free = _make_grid(args.grid, seed=4)
    rs = np.random.RandomState(9)
    a = rs.rand(args.points, 2) * 10.0
    b = rs.rand(args.points, 2) * 10.0

    cases = [
        ("distance_field", (free, 0, 0)),
        ("plan_path", (free, 0, 0, args.grid - 1, args.grid - 1)),
        ("dtw_total", (a, b)),
    ]

    print(f"grid {args.grid}x{args.grid}, dtw {args.points}x{args.points}, best of {args.repeat}")
    print(f"{'kernel':<16} {'pure':>10} {'compiled':>10} {'speedup':>8}")
    for name, case_args in cases:
        pure_fn = getattr(_fallback, name)
        t_pure = _best_of(pure_fn, case_args, args.repeat)
        if _core is None:
            print(f"{name:<16} {t_pure * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
            continue
        core_fn = getattr(_core, name)
        t_core = _best_of(core_fn, case_args, args.repeat)

        want = pure_fn(*case_args)
        got = core_fn(*case_args)
        if name == "dtw_total":
            agree = want == got
        elif want is None or got is None:
            agree = want is None and got is None
        else:
            agree = np.array_equal(want, got)
        flag = "" if agree else "  MISMATCH"
        print(
            f"{name:<16} {t_pure * 1e3:>8.2f}ms {t_core * 1e3:>8.2f}ms {t_pure / t_core:>7.1f}x{flag}"
        )
        if not agree:
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
