"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Also times a full ``assign_image`` over a misaligned corpus with whichever
path the environment selects (set APS_LAB_DISABLE_JIT=1 for numpy).
"""

import argparse
import time

import numpy as np

from aps_lab import _kernels, scenarios
from aps_lab.assigner import assign_image
from aps_lab.losses import synth_all


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def em_case(n, rng):
    x = np.concatenate([rng.normal(0.3, 0.05, n // 2), rng.normal(0.7, 0.05, n - n // 2)])
    var = float(x.var())
    params = np.array([0.5, x.min(), var, 0.5, x.max(), var])
    trace = np.empty(101)
    return lambda f: f(x, params, 100, 1e-6, 1e-8, trace)


def giou_case(n, rng):
    xy = rng.uniform(0, 400, (n, 2))
    wh = rng.uniform(5, 100, (n, 2))
    pred = np.hstack([xy, xy + wh])
    gt = np.array([100.0, 120.0, 260.0, 300.0])
    return lambda f: f(pred, gt)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if _kernels.em_numba is None:
        print("numba unavailable; nothing to compare")
        return
    print(f"{'kernel':<6} {'n':>7} {'numpy_ms':>10} {'numba_ms':>10} {'speedup':>8}")
    for name, make, sizes, fast, slow in [
        ("em", em_case, (18, 200, 5000), _kernels.em_numba, _kernels.em_numpy),
        ("giou", giou_case, (50, 1000, 100000), _kernels.giou_numba, _kernels.giou_numpy),
    ]:
        for n in sizes:
            call = make(n, rng)
            call(fast)  # compile / warm the cache
            t_np = best_of(lambda: call(slow), args.repeat)
            t_nb = best_of(lambda: call(fast), args.repeat)
            print(f"{name:<6} {n:>7d} {t_np * 1e3:>10.4f} {t_nb * 1e3:>10.4f} {t_np / t_nb:>7.1f}x")

    corpus = scenarios.corpus("misaligned", 50, 3)
    fields = [synth_all(cfg) for cfg in corpus]
    assign_image(fields[0])
    t0 = time.perf_counter()
    for f in fields:
        assign_image(f)
    dt = time.perf_counter() - t0
    path = "numba" if _kernels.JIT_ENABLED else "numpy"
    print(f"assign_image over 50 scenarios ({path} path): {dt * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
