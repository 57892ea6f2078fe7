"""Time the numba and pure-numpy kernel paths on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the median time of each path and the speed-up.
"""
import argparse
import statistics
import time

import numpy as np

from reclaimsim import kernels as K
from reclaimsim import trace as tr


def _time(fn, repeat):
    fn()  # warm-up (and numba compilation)
    samples = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t)
    return statistics.median(samples)


def cases(seed=0):
    rng = np.random.default_rng(seed)
    row = tr.synth_azure_rows(1, seed, log10_total=(4.5, 4.5))[0].per_minute_counts
    coll = np.sort(rng.integers(0, 200_000, size=50_000))
    hist = rng.integers(0, 8, size=200)
    wls = rng.integers(0, 8, size=16)
    fut_w = rng.integers(0, 8, size=30)
    fut_t = rng.integers(0, 4, size=30)
    cand_w = rng.integers(0, 8, size=16)
    cand_t = rng.integers(-1, 4, size=16)
    rank = rng.integers(0, 3, size=16)
    qt = np.cumsum(rng.integers(1, 50, size=20_000)).astype(float)
    qv = rng.integers(0, 10, size=20_000).astype(float)
    return {
        "expand_minutes": (K._np_expand_minutes, getattr(K, "_nb_expand_minutes", None), (row,)),
        "strictly_increasing": (K._np_strictly_increasing,
                                getattr(K, "_nb_strictly_increasing", None), (coll,)),
        "window_counts": (lambda h, w: K._np_window_counts(h, w, (10, 50, 100)),
                          (lambda h, w: K._nb_window_counts(h, w, np.array([10, 50, 100])))
                          if K.HAVE_NUMBA else None, (hist, wls)),
        "next_use": (lambda *a: K._np_next_use(*a, 30),
                     (lambda *a: K._nb_next_use(*a, 30)) if K.HAVE_NUMBA else None,
                     (fut_w, fut_t, cand_w, cand_t, rank)),
        "step_integral": (lambda a, b: K._np_step_integral(a, b, qt[-1] + 1),
                          (lambda a, b: K._nb_step_integral(a, b, qt[-1] + 1))
                          if K.HAVE_NUMBA else None, (qt, qv)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    print(f"{'kernel':<22}{'numpy us':>12}{'numba us':>12}{'speed-up':>10}")
    for name, (np_fn, nb_fn, inputs) in cases().items():
        t_np = _time(lambda: np_fn(*inputs), args.repeat)
        if nb_fn is None:
            print(f"{name:<22}{t_np * 1e6:>12.1f}{'n/a':>12}{'':>10}")
            continue
        a, b = np_fn(*inputs), nb_fn(*inputs)
        assert np.array_equal(np.asarray(a), np.asarray(b)) or np.isclose(a, b), name
        t_nb = _time(lambda: nb_fn(*inputs), args.repeat)
        print(f"{name:<22}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
