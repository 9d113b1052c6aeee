"""Compare the compiled kernels against the NumPy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the best wall time per call for each kernel and backend, checks that
the two backends agree, and prints the speed-up.
"""
import argparse
import time

import numpy as np

from ample import kernels


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    grid = rng.integers(1, 5, size=(400, 400)).astype(np.int8)
    ends = rng.uniform(0, 2000, size=(2000, 4))

    def trace():
        return [kernels.trace_runs(grid, 5.0, *e) for e in ends]

    Z, K = 50_000, 7
    X = np.column_stack([np.ones(Z), rng.uniform(0, 1, (Z, K - 1))])
    y = X @ rng.uniform(1, 3, K) + rng.normal(0, 5, Z)
    theta = np.zeros(K)

    def grad():
        return [kernels.nll_grad(X, y, theta, 5.0) for _ in range(20)]

    def descend():
        return kernels.descend(X, y, theta, 5.0, 2e-6, 200, 1e-9, 1e-3)

    return {"trace_runs (2000 lines, 400x400)": trace,
            "nll_grad (20 calls, 50k x 7)": grad,
            "descend (200 iters, 50k x 7)": descend}


def agree(a, b):
    if isinstance(a, dict):
        return np.allclose(a["theta"], b["theta"], rtol=1e-9) and abs(a["nll"] - b["nll"]) <= 1e-9 * abs(a["nll"])
    return all(np.allclose(np.asarray(u, dtype=float), np.asarray(v, dtype=float), rtol=1e-9)
               for x, y in zip(a, b) for u, v in zip(x, y))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "compiled" not in kernels.available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    print(f"{'kernel':36s} {'python':>10s} {'compiled':>10s} {'speed-up':>9s}  agree")
    for name in cases(np.random.default_rng(0)):
        times, outs = {}, {}
        for backend in ("python", "compiled"):
            kernels.use_backend(backend)
            fn = cases(np.random.default_rng(0))[name]
            times[backend], outs[backend] = best_of(fn, args.repeat)
        ok = agree(outs["python"], outs["compiled"])
        print(f"{name:36s} {times['python'] * 1e3:8.2f}ms {times['compiled'] * 1e3:8.2f}ms "
              f"{times['python'] / times['compiled']:8.1f}x  {ok}")
    kernels.use_backend("compiled")


if __name__ == "__main__":
    main()
