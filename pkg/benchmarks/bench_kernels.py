"""Compare the compiled and pure-Python pointwise kernels.

Usage: python benchmarks/bench_kernels.py [--sizes 32 64 128] [--repeat 50]
"""
import argparse
import timeit

import numpy as np

from etdkit import kernels


def bench(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    py = kernels.python_backend
    cc = kernels.compiled_backend
    if cc is None:
        print("compiled backend unavailable; only the Python timings are shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'n':>6}{'python [us]':>14}{'compiled [us]':>15}{'speedup':>9}")
    for n in args.sizes:
        y = rng.standard_normal(n * n)
        yc = y + 1e-3j * rng.standard_normal(n * n)
        r = rng.uniform(0, 2, n * n)
        g = rng.uniform(-1, 1, n * n)
        field = rng.standard_normal((n, n))
        cases = [("sh_nonlinearity", (y, r, g)), ("sh_nonlinearity/c", (yc, r, g)),
                 ("sh_jacobian", (y, r, g)), ("sh_jacobian/c", (yc, r, g)),
                 ("huber_tv", (field, 1e-3))]
        for name, a in cases:
            fn = name.split("/")[0]
            tp = bench(getattr(py, fn), a, args.repeat) * 1e6
            if cc is None:
                print(f"{name:<20}{n:>6}{tp:>14.1f}{'-':>15}{'-':>9}")
                continue
            tc = bench(getattr(cc, fn), a, args.repeat) * 1e6
            print(f"{name:<20}{n:>6}{tp:>14.1f}{tc:>15.1f}{tp / tc:>9.2f}")


if __name__ == "__main__":
    main()
