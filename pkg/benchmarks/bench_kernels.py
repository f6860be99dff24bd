"""Time the numba and numpy kernels on bank-sized inputs and check they agree.

    python benchmarks/bench_kernels.py [--n 1600] [--d 16] [--batch 64] [--m 5] [--repeat 20]

The neighbour search runs once per adaptation iteration on a full bank, so
the top-k kernel dominates adaptation time at desk scale.
"""

import argparse
import time

import numpy as np

from sfmix import _kernels
from sfmix.numkit import make_rng


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1600, help="bank rows")
    ap.add_argument("--d", type=int, default=16, help="feature width")
    ap.add_argument("--k", type=int, default=4, help="classes (prediction width)")
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    rng = make_rng(0)
    bank = rng.normal(size=(args.n, args.d))
    preds = rng.dirichlet(np.ones(args.k), size=args.n)
    idx = rng.choice(args.n, args.batch, replace=False)
    queries = bank[idx]

    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    results = {}
    for b in backends:
        _kernels.cosine_topk(queries, bank, args.m, idx, backend=b)  # warm up / compile
        t_topk = best_of(lambda: _kernels.cosine_topk(queries, bank, args.m, idx, backend=b), args.repeat)
        nbr, _ = _kernels.cosine_topk(queries, bank, args.m, idx, backend=b)
        t_gather = best_of(lambda: _kernels.gather_mean(preds, nbr, backend=b), args.repeat)
        results[b] = nbr
        print(f"{b:6s} cosine_topk {t_topk * 1e3:8.3f} ms   gather_mean {t_gather * 1e6:8.1f} us")
    if len(results) == 2:
        agree = np.array_equal(results["numpy"], results["numba"])
        print(f"neighbour sets agree: {agree}")
    else:
        print("numba unavailable or disabled; numpy path only")


if __name__ == "__main__":
    main()
