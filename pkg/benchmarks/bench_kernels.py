"""Timing comparison of the numpy and compiled kernel backends.

Runs each hot kernel at the two real image-token sizes (32 and 576) plus
a larger stress size, and prints per-call times for both backends with
the speedup ratio.  Usage:

    python3 benchmarks/bench_kernels.py [--repeats 5] [--number 2000]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from iava import _kernels_py

try:
    from iava import _kernels_c
except ImportError:
    _kernels_c = None

SIZES = (32, 576, 4096)


def make_cases(n, seed=42):
    rng = np.random.default_rng(seed)
    att1 = rng.uniform(0.0, 1.0, size=n)
    att2 = rng.uniform(0.0, 1.0, size=n)
    base = rng.normal(scale=4.0, size=n)
    negative = rng.normal(scale=4.0, size=n)
    i = n // 2
    return {
        "stats": lambda k: k.stats(att1),
        "delta": lambda k: k.delta(att1, att2),
        "select": lambda k: k.select(att1, att2, i, -0.1),
        "log_softmax": lambda k: k.log_softmax(base),
        "contrastive": lambda k: k.contrastive(base, negative, 1.0),
    }


def best_time(fn, number, repeats):
    timer = timeit.Timer(fn)
    return min(timer.repeat(repeat=repeats, number=number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--number", type=int, default=2000)
    args = parser.parse_args()

    if _kernels_c is None:
        print("compiled kernels unavailable; timing numpy backend only")
    header = f"{'kernel':<13} {'n':>5} {'py (us)':>10} {'c (us)':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n in SIZES:
        cases = make_cases(n)
        for name, call in cases.items():
            py_time = best_time(lambda: call(_kernels_py), args.number, args.repeats)
            if _kernels_c is None:
                print(f"{name:<13} {n:>5} {py_time * 1e6:>10.2f} {'-':>10} {'-':>8}")
                continue
            c_time = best_time(lambda: call(_kernels_c), args.number, args.repeats)
            ratio = py_time / c_time if c_time > 0 else float("inf")
            print(
                f"{name:<13} {n:>5} {py_time * 1e6:>10.2f} "
                f"{c_time * 1e6:>10.2f} {ratio:>7.2f}x"
            )


if __name__ == "__main__":
    main()
