"""Time the compiled and pure-Python evaluation kernels against each other.

    python3 benchmarks/bench_kernels.py [--queries 2000 --generated 10000 --k 10]
"""
import argparse
import time

import numpy as np

from ganens import _native
from ganens.evaluation import knn_distances, signed_ranks, signrank_exact_p


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--generated", type=int, default=10000)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--n-rank", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = ["python"] + (["cython"] if _native.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the python fallback only")
    rng = np.random.default_rng(0)
    q = rng.normal(size=(args.queries, args.dim))
    g = rng.normal(size=(args.generated, args.dim))
    diffs = rng.normal(size=args.n_rank)
    ranks2, signs = signed_ranks(diffs)
    obs2 = int(ranks2[signs > 0].sum())

    results = {}
    for name in backends:
        t_knn, dm = best_of(lambda: knn_distances(q, g, args.k, backend=name), args.repeat)
        t_rank, p = best_of(lambda: signrank_exact_p(ranks2, obs2, backend=name), args.repeat)
        results[name] = (t_knn, t_rank, dm.d, p)
        print(f"{name:>7}  knn {args.queries}x{args.generated} k={args.k}: {t_knn * 1e3:9.1f} ms   "
              f"exact signrank n={args.n_rank}: {t_rank * 1e3:9.1f} ms")
    if len(backends) == 2:
        (pk, pr, pd, pp), (ck, cr, cd, cp) = results["python"], results["cython"]
        print(f"speedup  knn {pk / ck:.1f}x   signrank {pr / cr:.1f}x   "
              f"identical output: {np.array_equal(pd, cd) and pp == cp}")


if __name__ == "__main__":
    main()
