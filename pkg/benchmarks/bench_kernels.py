"""Time the compiled tree kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --rows 20000 --features 24 --trees 10

Both backends grow the same trees (checked here), so only speed differs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from asotrace.classifiers.kernels import available_backends, load_backend


def make_data(rows: int, features: int, seed: int):
    rng = np.random.default_rng(seed)
    X = np.round(rng.gamma(2.0, 2.0, size=(rows, features)), 2)
    y = (X[:, 0] - X[:, 1] + rng.normal(size=rows) > 0).astype(np.int64)
    return X, y


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(backend, X, y, trees: int, max_features: int, seed: int):
    rng = np.random.default_rng(seed)
    samples = [rng.integers(0, len(y), len(y)) for _ in range(trees)]
    built = []

    def grow():
        built.clear()
        built.extend(backend.build_tree(X, y, s, max_features, -1, 1, seed + i) for i, s in enumerate(samples))

    t_build = best_of(grow, 1)
    # pack like RandomForest.fit: concatenated node arrays plus each tree's root offset
    arrays = [np.concatenate([t[j] for t in built]) for j in range(5)]
    roots = np.cumsum([0] + [len(t[0]) for t in built[:-1]]).astype(np.int64)
    t_predict = best_of(lambda: backend.predict_forest(X, *arrays, roots), 3)
    return t_build, t_predict, built


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--features", type=int, default=24)
    ap.add_argument("--trees", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    X, y = make_data(args.rows, args.features, args.seed)
    max_features = max(1, int(np.sqrt(args.features)))
    results = {}
    for name in available_backends():
        results[name] = bench(load_backend(name), X, y, args.trees, max_features, args.seed)
        t_build, t_predict, _ = results[name]
        print(f"{name:<7} build {args.trees} trees {t_build:8.3f}s   predict {args.rows} rows {t_predict:8.4f}s")
    if len(results) == 2:
        cy, py = results["cython"], results["python"]
        same = all(np.array_equal(u, v) for a, b in zip(cy[2], py[2]) for u, v in zip(a, b))
        print(f"speedup build x{py[0] / cy[0]:.1f}, predict x{py[1] / cy[1]:.1f}; identical trees: {same}")
    else:
        print("compiled kernels not built; only the fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
