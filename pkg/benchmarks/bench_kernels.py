"""Time one BPR training run with the compiled and the pure-Python SGD kernel.

    python3 benchmarks/bench_kernels.py [--users 300] [--items 400] [--per-user 30] [--epochs 5]
"""
import argparse
import time

import numpy as np

from dyncal.recommenders import BACKENDS, BprHyperparams, TrainSet, train_bpr


def make_train(n_users: int, n_items: int, per_user: int, seed: int = 0) -> TrainSet:
    rng = np.random.default_rng(seed)
    pairs = [(u, int(i)) for u in range(n_users) for i in rng.choice(n_items, size=per_user, replace=False)]
    return TrainSet(n_users, n_items, np.array(pairs))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=300)
    ap.add_argument("--items", type=int, default=400)
    ap.add_argument("--per-user", type=int, default=30)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    train = make_train(args.users, args.items, args.per_user)
    hp = BprHyperparams(epochs=args.epochs, embedding_dim=args.dim)
    print(f"{len(train)} positive pairs, {args.epochs} epochs, dim {args.dim}")
    timings, models = {}, {}
    for name in sorted(BACKENDS):
        best = np.inf
        for _ in range(args.repeat):
            t = time.perf_counter()
            models[name] = train_bpr(train, hp, backend=name)
            best = min(best, time.perf_counter() - t)
        timings[name] = best
        rate = len(train) * args.epochs / best
        print(f"{name:>7}: {best:8.3f} s  ({rate:,.0f} updates/s)")
    if len(models) == 2:
        diff = np.abs(models["cython"].user_factors - models["python"].user_factors).max()
        print(f"speedup {timings['python'] / timings['cython']:.1f}x, max factor difference {diff:.2e}")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
