"""Time the numba kernels against their pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up first so numba compilation never lands inside a
measured run; the reported time is the best of N repeats. The diff column
confirms the two paths agree on identical inputs.
"""

import argparse
import time

import numpy as np

from tablerank.kernels import (
    HAS_NUMBA,
    grow_tree_nb,
    grow_tree_py,
    pairwise_cosine_nb,
    pairwise_cosine_py,
    predict_forest_nb,
    predict_forest_py,
)
from tablerank.ltr import fit_forest


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_pairwise(rng, repeat):
    a = rng.normal(size=(400, 64))
    b = rng.normal(size=(500, 64))
    out_py = pairwise_cosine_py(a, b)
    out_nb = pairwise_cosine_nb(a, b)
    diff = float(np.max(np.abs(out_py - out_nb)))
    return (
        best_of(lambda: pairwise_cosine_py(a, b), repeat),
        best_of(lambda: pairwise_cosine_nb(a, b), repeat),
        f"max|diff| {diff:.1e}",
    )


def bench_grow_tree(rng, repeat):
    n, p, mtry = 2000, 10, 3
    X = rng.normal(size=(n, p))
    y = X[:, 0] + 0.5 * X[:, 1] ** 2 + 0.1 * rng.normal(size=n)
    cap = 2 * n + 1
    feat_cand = np.argsort(rng.random((cap, p)), axis=1, kind="stable")[:, :mtry]
    feat_cand = np.ascontiguousarray(feat_cand, dtype=np.int32)
    out_py = grow_tree_py(X, y, feat_cand)
    out_nb = grow_tree_nb(X, y, feat_cand)
    identical = all(np.array_equal(a, b) for a, b in zip(out_py, out_nb))
    return (
        best_of(lambda: grow_tree_py(X, y, feat_cand), repeat),
        best_of(lambda: grow_tree_nb(X, y, feat_cand), repeat),
        f"bit-identical {identical}",
    )


def bench_predict(rng, repeat):
    X_train = rng.normal(size=(500, 6))
    y = X_train[:, 0] - X_train[:, 3]
    model = fit_forest(X_train, y, tuple(f"f{i}" for i in range(6)), n_trees=100, seed=0)
    X = rng.normal(size=(20000, 6))
    args = (model.node_feature, model.node_threshold, model.node_left,
            model.node_right, model.node_value, model.offsets)
    out_py = predict_forest_py(X, *args)
    out_nb = predict_forest_nb(X, *args)
    identical = bool(np.array_equal(out_py, out_nb))
    return (
        best_of(lambda: predict_forest_py(X, *args), repeat),
        best_of(lambda: predict_forest_nb(X, *args), repeat),
        f"bit-identical {identical}",
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    rows = [
        ("pairwise_cosine", *bench_pairwise(rng, args.repeat)),
        ("grow_tree", *bench_grow_tree(rng, args.repeat)),
        ("predict_forest", *bench_predict(rng, args.repeat)),
    ]
    print(f"{'kernel':<16} {'numpy':>10} {'numba':>10} {'speedup':>8}   agreement")
    for name, t_py, t_nb, note in rows:
        print(f"{name:<16} {t_py * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
              f"{t_py / t_nb:>7.1f}x   {note}")


if __name__ == "__main__":
    main()
