#!/usr/bin/env python3
"""Time the compiled pairwise kernels against the numpy fallback.

Every measure is run on the same pair of random clouds, once per backend,
and the per-word cost is reported. A 1000x1000 cloud pair at d=768 is the
shape a production scoring run sees per word, so the "per call" column is
directly the per-word cost of a full-pipeline score.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --rows 500 --dim 256 --repeats 5
"""

import argparse
import time

import numpy as np

from siblingshift import _pairwise_np
from siblingshift.measures import DISTANCES, MeasureKind

try:
    from siblingshift import _pairwise as _ext
except ImportError:
    _ext = None

from siblingshift.kernels import _KIND_CODES


def time_call(func, repeats):
    best = float("inf")
    value = None
    for _ in range(repeats):
        start = time.perf_counter()
        value = func()
        best = min(best, time.perf_counter() - start)
    return best, value


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=1000,
                        help="rows per cloud (default: 1000)")
    parser.add_argument("--dim", type=int, default=768,
                        help="embedding dimension (default: 768)")
    parser.add_argument("--repeats", type=int, default=3,
                        help="repetitions per timing; best is kept (default: 3)")
    parser.add_argument("--measures", default="all",
                        help="comma-separated measure tokens (default: all distances)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if args.measures == "all":
        kinds = list(DISTANCES)
    else:
        kinds = [MeasureKind.from_token(t) for t in args.measures.split(",")]

    rng = np.random.default_rng(args.seed)
    a = rng.normal(size=(args.rows, args.dim))
    b = rng.normal(size=(args.rows, args.dim))

    print(f"cloud pair: {args.rows} x {args.rows} rows, d = {args.dim}, "
          f"best of {args.repeats}")
    if _ext is None:
        print("compiled kernels not built; timing the numpy fallback only")
    header = f"{'measure':<12} {'numpy (s)':>10} {'compiled (s)':>13} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for kind in kinds:
        np_time, np_val = time_call(lambda: _pairwise_np.mean_pairwise(kind, a, b),
                                    args.repeats)
        if _ext is not None:
            code = _KIND_CODES[kind]
            ext_time, ext_val = time_call(lambda: _ext.mean_pairwise(code, a, b),
                                          args.repeats)
            rel = abs(ext_val - np_val) / max(abs(np_val), 1e-300)
            if rel > 1e-9:
                raise SystemExit(f"{kind.token}: backends disagree ({rel:.2e} rel)")
            print(f"{kind.token:<12} {np_time:>10.3f} {ext_time:>13.3f} "
                  f"{np_time / ext_time:>7.1f}x")
        else:
            print(f"{kind.token:<12} {np_time:>10.3f} {'-':>13} {'-':>8}")


if __name__ == "__main__":
    main()
