"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from ctxrank import _kernels_py
from ctxrank.simulator import _arrangements

try:
    from ctxrank import _kernels as compiled
except ImportError:
    compiled = None


def workloads(rng):
    R, m, n = 20_000, 10, 5
    base = rng.uniform(0.02, 0.98, (R, m))
    cat = rng.integers(0, 8, (R, m)).astype(np.int64)
    price = rng.uniform(0, 1, (R, m))
    orders = np.argsort(rng.random((R, m)), axis=1)[:, :n].astype(np.int64)
    perms = _arrangements(m, n)
    scores = rng.random(200_000)
    labels = rng.integers(0, 2, 200_000).astype(np.int64)
    consts = (0.9, 0.5, 0.2, 0.01, 0.99)
    return {
        "list_probs (20k lists, n=5)": lambda k: k.list_probs(base, cat, price, orders, *consts),
        "perm_values (30240 orders)": lambda k: k.perm_values(base[0], cat[0], price[0], perms, *consts),
        "auc (200k scores)": lambda k: k.auc(scores, labels),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if compiled is None:
        print("compiled extension not built; only the numpy fallback is timed")
    print(f"{'kernel':<30} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in workloads(np.random.default_rng(0)).items():
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{name:<30} {py:>10.2f} {'-':>10} {'-':>8}")
            continue
        np.testing.assert_allclose(fn(compiled), fn(_kernels_py), rtol=0, atol=1e-12)
        cy = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<30} {py:>10.2f} {cy:>10.2f} {py / cy:>7.1f}x")


if __name__ == "__main__":
    main()
