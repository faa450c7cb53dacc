"""Compare the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``; prints one line per case
with the median wall time of each backend and the speedup.
"""
import argparse
import statistics
import timeit

import numpy as np

from covercert import _pykernels

try:
    from covercert import _ckernels
except ImportError:
    _ckernels = None


def random_hermitian(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return np.ascontiguousarray(m + m.conj().T)


def cases(rng):
    for d in (4, 8, 16, 32):
        a = random_hermitian(rng, d)
        yield f"jacobi_eigh d={d}", lambda k, a=a: k.jacobi_eigh(a)
    stack = np.stack([random_hermitian(rng, 8) for _ in range(200)])
    yield "eigvalsh_batch 200x(8x8)", lambda k: k.eigvalsh_batch(stack)
    nb = np.stack([(np.arange(256) + s) % 256 for s in (1, -1, 7, -7)], axis=1).astype(np.int64)
    slots = rng.integers(0, 4, size=100_000)
    yield "walk_slots K=1e5", lambda k: k.walk_slots(nb, 0, slots)


def median_time(fn, repeat):
    n, _ = timeit.Timer(fn).autorange()
    return statistics.median(timeit.repeat(fn, number=n, repeat=repeat)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    if _ckernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'case':28s} {'numpy':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, run in cases(rng):
        py = median_time(lambda: run(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:28s} {py * 1e6:10.1f}us")
            continue
        cy = median_time(lambda: run(_ckernels), args.repeat)
        print(f"{name:28s} {py * 1e6:10.1f}us {cy * 1e6:10.1f}us {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
