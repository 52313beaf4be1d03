#!/usr/bin/env python3
"""Benchmark the compiled kernels against their pure numpy fallbacks.

The two backends are bit-identical (the test suite asserts it); this
script measures what the extension buys.  Run after installing:

    python benchmarks/bench_kernels.py [--sizes small,large] [--repeats 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vpreval import kernels, rng

SIZE_SETS = {
    "small": dict(n=200, m=200, d=64, thresholds=100, gaussians=100_000),
    "large": dict(n=1000, m=1000, d=128, thresholds=100, gaussians=500_000),
}


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run_case(name: str, repeats: int) -> None:
    p = SIZE_SETS[name]
    rs = np.random.RandomState(0)
    db = rs.randn(p["n"], p["d"])
    q = rs.randn(p["m"], p["d"])
    S = rs.rand(p["n"], p["m"])
    gt = (rs.rand(p["n"], p["m"]) < 0.05).astype(np.uint8)
    thr = np.linspace(0.0, 1.0, p["thresholds"])
    vel = np.linspace(0.8, 1.25, 10)
    payload = S.tobytes()

    backends = ["pure"] + (["compiled"] if kernels.HAVE_COMPILED else [])
    rows: list[tuple[str, dict[str, float]]] = []

    def bench(label: str, make_fn) -> None:
        times = {b: _time(make_fn(b), repeats) for b in backends}
        rows.append((label, times))

    bench("similarity cosine", lambda b: lambda: kernels.similarity_matrix(db, q, "cosine", backend=b))
    bench("similarity neg_mae", lambda b: lambda: kernels.similarity_matrix(db, q, "neg_mae", backend=b))
    bench("sweep counts", lambda b: lambda: kernels.sweep_counts(S.ravel(), gt.ravel(), thr, backend=b))
    bench("seq postprocess", lambda b: lambda: kernels.seq_postprocess_values(S, vel, 11, 0.5, backend=b))
    bench("fnv1a64 hash", lambda b: lambda: kernels.fnv1a64(payload, backend=b))

    def gauss_fn(b):
        def run():
            state = rng.derive_state(1, "bench")
            out = np.empty(p["gaussians"])
            kernels.fill_gauss(state, out, backend=b)
        return run

    bench(f"gaussians x{p['gaussians']}", gauss_fn)

    print(f"\n== {name}: n={p['n']} m={p['m']} d={p['d']} ==")
    header = f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, times in rows:
        line = f"{label:<24}" + "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{times['pure'] / times['compiled']:>9.1f}x"
        print(line)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="small,large")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    print(f"compiled extension available: {kernels.HAVE_COMPILED}")
    if not kernels.HAVE_COMPILED:
        print("only the pure backend will be timed")
    for name in args.sizes.split(","):
        run_case(name.strip(), args.repeats)


if __name__ == "__main__":
    main()
