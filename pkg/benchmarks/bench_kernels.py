"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 50 100 200]

Prints one row per kernel and size with the best wall time of each backend
and the speedup of the compiled one.
"""

import argparse
import timeit

import numpy as np

from spectralnet import _fallback

try:
    from spectralnet import _core
except ImportError:
    _core = None


def cases(n, rng):
    b = rng.standard_normal((n, n))
    sym = np.ascontiguousarray(b + b.T)
    spd = np.ascontiguousarray(b.T @ b + n * np.eye(n))
    x = rng.standard_normal((n, 2))
    d2 = np.ascontiguousarray(((x[:, None] - x[None]) ** 2).sum(-1))
    tol = 1e-12 * np.trace(spd) / n
    return {
        "cholesky": lambda mod: mod.cholesky(spd, tol),
        "jacobi_eigh": lambda mod: mod.jacobi_eigh(sym, 60, 1e-14),
        "knn_select": lambda mod: mod.knn_select(d2, 10),
    }


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05 and number < 1000:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200, 400])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _core is None:
        parser.exit(1, "compiled extension not built; run `pip install -e . --no-build-isolation`\n")

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<12} {'n':>5} {'compiled ms':>12} {'numpy ms':>10} {'speedup':>8}")
    for n in args.sizes:
        for name, call in cases(n, rng).items():
            fast = best_time(lambda: call(_core), args.repeat)
            slow = best_time(lambda: call(_fallback), args.repeat)
            print(f"{name:<12} {n:>5} {fast * 1e3:>12.3f} {slow * 1e3:>10.3f} {slow / fast:>7.1f}x", flush=True)


if __name__ == "__main__":
    main()
