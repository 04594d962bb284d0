"""Time the compiled and pure-Python kernel backends on the same workloads.

    python3 benchmarks/bench_kernels.py [--n 8000] [--p 43] [--repeat 3]
"""

import argparse
import time

import numpy as np

from periopml import kernels
from periopml.explain import tree_shap
from periopml.models import fit, make_params


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=8000)
    ap.add_argument("--p", type=int, default=43)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    r = np.random.default_rng(0)
    X = r.random((args.n, args.p))
    X[:, args.p // 2:] = X[:, args.p // 2:] > 0.5  # half one-hot-like columns
    y = (r.random(args.n) < 1 / (1 + np.exp(-(3 * X[:, 0] - 2 * X[:, 1])))).astype(int)
    hp = make_params("grad_boost", n_rounds=50, max_depth=3)

    backends = kernels.available_backends()
    print(f"n={args.n} p={args.p} backends={sorted(backends)} (active: {kernels.BACKEND})")
    results = {}
    for name, be in sorted(backends.items()):
        t_fit = best_of(lambda: fit("grad_boost", X, y, hp, backend=be), args.repeat)
        model = fit("grad_boost", X, y, hp, backend=be)
        rows = X[:500]
        t_shap = best_of(lambda: tree_shap(model, rows, backend=be), args.repeat)
        results[name] = (t_fit, t_shap)
        print(f"{name:>9s}: grad_boost fit {t_fit:8.3f}s   tree_shap(500 rows) {t_shap:8.3f}s")
    if len(results) == 2:
        (fc, sc), (fp, sp) = results["compiled"], results["python"]
        print(f"speedup: fit x{fp / fc:.1f}, shap x{sp / sc:.1f}")


if __name__ == "__main__":
    main()
