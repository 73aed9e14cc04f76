"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--quick]

Each row reports the best-of-N wall time per call for both backends and
checks that they return the same answer.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from smallgroup_lab import _pykernels, kernels
from smallgroup_lab.groups import CyclicGroup, product_tower

try:
    from smallgroup_lab import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def elementary_table(rank: int) -> np.ndarray:
    return product_tower(CyclicGroup(2), [0, rank]).groups[-1].op_table


def cases(quick: bool, rng: np.random.Generator):
    sizes = (1 << 10, 1 << 13) if quick else (1 << 10, 1 << 13, 1 << 16)
    for n in sizes:
        for density in (0.01, 0.2):
            a = rng.random(n) < density
            b = rng.random(n) < density
            yield (f"sumset_mod n={n} p={density}",
                   lambda impl, a=a, b=b: kernels.sumset_mod(a, b, impl=impl))
    for n in (64, 256) if quick else (64, 256, 1024):
        table = elementary_table(int(np.log2(n)))
        a_idx = np.flatnonzero(rng.random(n) < 0.3)
        b_idx = np.flatnonzero(rng.random(n) < 0.3)
        yield (f"product_set_table n={n}",
               lambda impl, t=table, x=a_idx, y=b_idx: kernels.product_set_table(t, x, y, impl=impl))
    for n in (16, 48) if quick else (16, 48, 96):
        table = CyclicGroup(n).op_table
        yield f"associativity n={n}", lambda impl, t=table: kernels.associativity_violation(t, impl=impl)


def same(x, y) -> bool:
    if isinstance(x, np.ndarray):
        return np.array_equal(np.asarray(x, dtype=bool), np.asarray(y, dtype=bool))
    return x == y


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller inputs, for smoke runs")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    impls = [("numpy", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'kernel':28} " + " ".join(f"{name:>12}" for name, _ in impls) + "     speedup")
    for label, fn in cases(args.quick, rng):
        times, outs = [], []
        for _, impl in impls:
            outs.append(fn(impl))
            number = 3
            times.append(min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat)) / number)
        if len(outs) == 2 and not same(*outs):
            raise SystemExit(f"backends disagree on {label}")
        speed = f"{times[0] / times[1]:9.1f}x" if len(times) == 2 else ""
        print(f"{label:28} " + " ".join(f"{t * 1e3:10.3f}ms" for t in times) + f"  {speed}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
