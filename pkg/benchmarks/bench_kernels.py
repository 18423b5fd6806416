"""Time the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--json PATH]
"""

import argparse
import json
import timeit

import numpy as np

from hierprot import _kernels_py
from hierprot.geometry import random_chain

try:
    from hierprot import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def cases(rng):
    for n in (64, 256, 512):
        coords = np.ascontiguousarray(random_chain(rng, n))
        yield f"contact_pairs n={n}", "contact_pairs", (coords, 8.0)
    for n in (50, 200, 500):
        a = rng.integers(0, 20, n).astype(np.int64)
        b = rng.integers(0, 20, n).astype(np.int64)
        yield f"nw_align n={n}", "nw_align", (a, b, 1.0, 0.0, -1.0)


def best_of(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", help="write results to this file")
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'case':<22}{'python (s)':>14}{'cython (s)':>14}{'speedup':>10}")
    for name, kernel, kargs in cases(rng):
        py = best_of(getattr(_kernels_py, kernel), kargs, args.repeat)
        cy = best_of(getattr(compiled, kernel), kargs, args.repeat) if compiled else float("nan")
        if compiled is not None and not np.array_equal(getattr(_kernels_py, kernel)(*kargs),
                                                       getattr(compiled, kernel)(*kargs)):
            raise SystemExit(f"{name}: backends disagree")
        rows.append({"case": name, "python_s": py, "cython_s": cy, "speedup": py / cy})
        print(f"{name:<22}{py:>14.3e}{cy:>14.3e}{py / cy:>9.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
