"""Compiled vs pure-Python kernels: tree construction and candidate scoring.

    python benchmarks/bench_kernels.py [--sizes 2000 20000] [--repeat 5]
"""
import argparse
import time

import numpy as np

from neyman_al import kernels
from neyman_al.sampling import build_stratified_tree


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(N, depth, budget, repeat, backends):
    rng = np.random.default_rng(N)
    scores = rng.beta(0.4, 2.5, N)
    ids = np.arange(N)
    prefix = np.concatenate([[0.0], np.cumsum(np.sort(scores))])
    cuts = np.linspace(1, N - 1, 256).astype(np.int64)
    other_counts = np.array([N // 3, N // 3])
    other_s2 = np.array([0.02, 0.15])
    rows = []
    for name in backends:
        k = kernels.get_backend(name)
        tree_t = best_of(lambda: build_stratified_tree(ids, scores, depth, budget, backend=name), repeat)
        cand_t = best_of(lambda: k.candidate_objectives(prefix, 0, N, cuts, other_counts, other_s2,
                                                        budget, 2), repeat)
        rows.append((name, tree_t, cand_t))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[2000, 20000])
    ap.add_argument("--depth", type=int, default=5)
    ap.add_argument("--budget", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernels unavailable; timing the Python fallback only")
    print(f"{'N':>7} {'backend':<7} {'tree build':>12} {'256 cuts':>12}")
    for N in args.sizes:
        rows = bench(N, args.depth, min(args.budget, N), args.repeat, backends)
        for name, tree_t, cand_t in rows:
            print(f"{N:>7} {name:<7} {tree_t * 1e3:>10.2f}ms {cand_t * 1e3:>10.2f}ms")
        if len(rows) == 2:
            print(f"{'':>7} speedup {rows[0][1] / rows[1][1]:>11.1f}x {rows[0][2] / rows[1][2]:>11.1f}x")


if __name__ == "__main__":
    main()
