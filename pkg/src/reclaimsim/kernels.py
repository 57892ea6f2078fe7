"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``RECLAIMSIM_PURE_NUMPY`` is
unset (or "0"). Both paths must return identical results; the test-suite
checks them against each other and ``benchmarks/bench_kernels.py`` times them.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

MINUTE_MS = 60_000


def _want_numba():
    flag = os.environ.get("RECLAIMSIM_PURE_NUMPY", "0").strip().lower()
    return HAVE_NUMBA and flag in ("", "0", "false", "no")


USE_NUMBA = _want_numba()


# ---------------------------------------------------------------- numpy path

def _np_expand_minutes(counts):
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    minute = np.repeat(np.arange(counts.size, dtype=np.int64), counts)
    c = counts[minute]
    starts = np.cumsum(counts) - counts
    k = np.arange(total, dtype=np.int64) - starts[minute]
    return minute * MINUTE_MS + (k * MINUTE_MS) // c


def _np_strictly_increasing(times):
    t = np.asarray(times, dtype=np.int64)
    if t.size == 0:
        return t.copy()
    # out[i] = max_j<=i (t[j] + i - j) = i + cummax(t - i)
    idx = np.arange(t.size, dtype=np.int64)
    return np.maximum.accumulate(t - idx) + idx


def _np_window_counts(history, workloads, windows):
    history = np.asarray(history, dtype=np.int64)
    workloads = np.asarray(workloads, dtype=np.int64)
    out = np.zeros((workloads.size, len(windows)), dtype=np.int64)
    for j, w in enumerate(windows):
        tail = history[max(0, history.size - w):]
        out[:, j] = (tail[None, :] == workloads[:, None]).sum(axis=1)
    return out


def _np_next_use(fut_w, fut_t, cand_w, cand_t, cand_rank, horizon):
    n = min(fut_w.size, horizon)
    out = np.full(cand_w.size, horizon + 1, dtype=np.int64)
    if n == 0 or cand_w.size == 0:
        return out
    hit = fut_w[None, :n] == cand_w[:, None]
    hit &= (cand_t[:, None] < 0) | (fut_t[None, :n] == cand_t[:, None])
    nth = np.cumsum(hit, axis=1) == (cand_rank[:, None] + 1)
    nth &= hit
    found = nth.any(axis=1)
    out[found] = nth[found].argmax(axis=1) + 1
    return out


def _np_step_integral(times, values, t_end):
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.size == 0:
        return 0.0
    edges = np.append(times[1:], float(t_end))
    return float(np.sum(values * np.maximum(edges - times, 0.0)))


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_expand_minutes(counts):
        total = 0
        for m in range(counts.size):
            total += counts[m]
        out = np.empty(total, dtype=np.int64)
        i = 0
        for m in range(counts.size):
            c = counts[m]
            for k in range(c):
                out[i] = m * MINUTE_MS + (k * MINUTE_MS) // c
                i += 1
        return out

    @njit(cache=True)
    def _nb_strictly_increasing(times):
        out = times.copy()
        for i in range(1, out.size):
            if out[i] <= out[i - 1]:
                out[i] = out[i - 1] + 1
        return out

    @njit(cache=True)
    def _nb_window_counts(history, workloads, windows):
        out = np.zeros((workloads.size, windows.size), dtype=np.int64)
        n = history.size
        for j in range(windows.size):
            lo = max(0, n - windows[j])
            for i in range(lo, n):
                h = history[i]
                for c in range(workloads.size):
                    if workloads[c] == h:
                        out[c, j] += 1
        return out

    @njit(cache=True)
    def _nb_next_use(fut_w, fut_t, cand_w, cand_t, cand_rank, horizon):
        n = min(fut_w.size, horizon)
        out = np.full(cand_w.size, horizon + 1, dtype=np.int64)
        for c in range(cand_w.size):
            seen = 0
            for i in range(n):
                if fut_w[i] == cand_w[c] and (cand_t[c] < 0 or fut_t[i] == cand_t[c]):
                    if seen == cand_rank[c]:
                        out[c] = i + 1
                        break
                    seen += 1
        return out

    @njit(cache=True)
    def _nb_step_integral(times, values, t_end):
        acc = 0.0
        for i in range(times.size):
            nxt = times[i + 1] if i + 1 < times.size else t_end
            if nxt > times[i]:
                acc += values[i] * (nxt - times[i])
        return acc


# ---------------------------------------------------------------- dispatch

def expand_minutes(counts):
    """Even in-minute placement: count c in minute m -> m*60000 + floor(k*60000/c)."""
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    if USE_NUMBA:
        return _nb_expand_minutes(counts)
    return _np_expand_minutes(counts)


def strictly_increasing(times):
    """Bump colliding timestamps by +1 ms, cascading forward."""
    times = np.ascontiguousarray(times, dtype=np.int64)
    if USE_NUMBA:
        return _nb_strictly_increasing(times)
    return _np_strictly_increasing(times)


def window_counts(history, workloads, windows=(10, 50, 100)):
    """Occurrences of each workload among the last w entries of history, per w."""
    history = np.ascontiguousarray(history, dtype=np.int64)
    workloads = np.ascontiguousarray(workloads, dtype=np.int64)
    if USE_NUMBA:
        return _nb_window_counts(history, workloads, np.asarray(windows, dtype=np.int64))
    return _np_window_counts(history, workloads, windows)


def next_use(fut_w, fut_t, cand_w, cand_t, horizon, cand_rank=None):
    """1-based position of the future arrival each candidate would serve.

    A candidate with tenant < 0 is shared and matches any tenant. With
    ``cand_rank`` r, the candidate is matched to the (r+1)-th usable arrival
    (r copies ahead of it take the earlier ones). No match inside ``horizon``
    gives ``horizon + 1``.
    """
    fut_w = np.ascontiguousarray(fut_w, dtype=np.int64)
    fut_t = np.ascontiguousarray(fut_t, dtype=np.int64)
    cand_w = np.ascontiguousarray(cand_w, dtype=np.int64)
    cand_t = np.ascontiguousarray(cand_t, dtype=np.int64)
    if cand_rank is None:
        cand_rank = np.zeros(cand_w.size, dtype=np.int64)
    cand_rank = np.ascontiguousarray(cand_rank, dtype=np.int64)
    if USE_NUMBA:
        return _nb_next_use(fut_w, fut_t, cand_w, cand_t, cand_rank, int(horizon))
    return _np_next_use(fut_w, fut_t, cand_w, cand_t, cand_rank, int(horizon))


def step_integral(times, values, t_end):
    """Integral of a right-continuous step function up to t_end."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if USE_NUMBA:
        return float(_nb_step_integral(times, values, float(t_end)))
    return _np_step_integral(times, values, t_end)
