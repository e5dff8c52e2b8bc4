"""Time the compiled and numpy backends on the three hot loops.

Usage: python3 benchmarks/bench_kernels.py [--runs 20000] [--n 200] [--repeat 3]
"""
import argparse
import time

import numpy as np

from mixlab import _backend
from mixlab.chain import _cdf_table


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _tables(order, A, seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(A), size=A**order)
    return np.ascontiguousarray(P), _cdf_table(P)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=20000)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--renewal-n", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    names = [b for b in ("cython", "python") if b in _backend.available()]
    P, cdf = _tables(3, 2, 0)
    rng = np.random.default_rng(1)
    u2 = rng.random((args.runs, args.n))
    u3 = rng.random((args.runs, args.n, 3))
    gamma = 0.5 * 0.5 ** np.arange(args.renewal_n + 1)

    cases = {
        "sample_paths": lambda be: be.sample_paths(cdf, 0, u2),
        "sample_coupled": lambda be: be.sample_coupled(P, cdf, 0, 7, 0, 1 << 16, u3),
        "house_of_cards": lambda be: be.house_of_cards(gamma, args.renewal_n),
    }
    print(f"{'case':<16}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for case, fn in cases.items():
        times = {}
        outs = {}
        for name in names:
            be = _backend.get(name)
            times[name], outs[name] = _best(lambda: fn(be), args.repeat)
        row = f"{case:<16}" + "".join(f"{times[n]:>11.4f}s" for n in names)
        if len(names) == 2:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
