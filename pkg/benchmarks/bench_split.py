"""Compare the compiled and numpy split-search kernels.

Times a root-node split search and a full decision-tree fit on each
available backend, and checks that both backends choose the same split.

    python benchmarks/bench_split.py --rows 3750 --features 400
"""

from __future__ import annotations

import argparse
import contextlib
import timeit

import numpy as np

from fundcat import _kernels, trees
from fundcat.sampling import class_weights


def synthetic_problem(rows: int, features: int, categories: int, seed: int):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, categories, rows)
    centers = rng.random((categories, features))
    X = np.clip(centers[y] + rng.normal(0, 0.3, (rows, features)), 0, None)
    # Percentages are rounded to two decimals in real data, which creates ties.
    X = np.round(X * 100, 2) / 100
    return X, y


@contextlib.contextmanager
def using(backend: str):
    module = _kernels.get_backend(backend)
    saved = _kernels.best_split, _kernels.node_impurity
    _kernels.best_split, _kernels.node_impurity = module.best_split, module.node_impurity
    try:
        yield module
    finally:
        _kernels.best_split, _kernels.node_impurity = saved


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=3750)
    ap.add_argument("--features", type=int, default=400)
    ap.add_argument("--categories", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    X, y = synthetic_problem(args.rows, args.features, args.categories, args.seed)
    w = class_weights(y).sample_weights(y)
    Xt = np.ascontiguousarray(X.T)
    rows = np.arange(args.rows, dtype=np.int64)
    order = np.arange(args.features, dtype=np.int64)

    print(f"{args.rows} rows x {args.features} features, {args.categories} categories")
    print(f"{'backend':8s} {'root split (ms)':>16s} {'tree fit (s)':>13s}  split")
    picks = {}
    for backend in _kernels.available_backends():
        with using(backend) as k:
            def search():
                return k.best_split(Xt, rows, order, args.features, y, w, args.categories, 0)

            split_s = min(timeit.repeat(search, number=1, repeat=args.repeats))
            fit_s = min(timeit.repeat(lambda: trees.fit_tree(X, y, w), number=1, repeat=max(1, args.repeats // 2)))
            picks[backend] = search()[:2]
        print(f"{backend:8s} {split_s * 1e3:16.2f} {fit_s:13.3f}  feature {picks[backend][0]} <= {picks[backend][1]:.4f}")

    if len(picks) == 2:
        same = picks["cython"] == picks["python"]
        print(f"backends agree on the root split: {same}")


if __name__ == "__main__":
    main()
