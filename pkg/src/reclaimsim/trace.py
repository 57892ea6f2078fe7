"""Azure-style invocation traces: load, expand into events, assign to tenants.

The public Azure Functions dataset only records invocations per minute, so
events inside a minute are spread evenly and colliding timestamps are pushed
forward by 1 ms until every arrival is unique.
"""
import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._rng import make_rng

MINUTES_PER_DAY = 1440
MINUTE_MS = kernels.MINUTE_MS
MOBILE_MAX_TOTAL = 100  # mobile traces have strictly fewer daily invocations


class TraceFormatError(ValueError):
    pass


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AzureTraceRow:
    function_key: str
    per_minute_counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.per_minute_counts, dtype=np.int64)
        if counts.shape != (MINUTES_PER_DAY,):
            raise TraceFormatError(
                f"expected {MINUTES_PER_DAY} columns, got {counts.size}")
        if (counts < 0).any():
            raise TraceFormatError("negative invocation count")
        counts.setflags(write=False)
        object.__setattr__(self, "per_minute_counts", counts)

    @property
    def total(self):
        return int(self.per_minute_counts.sum())


@dataclass(frozen=True)
class Workload:
    workload_id: int
    name: str
    cold_start_ms: int
    exec_ms: int
    memory_mb: int = 256
    checkpoint_extra_ms: int = 0

    def __post_init__(self):
        if self.cold_start_ms <= 0 or self.exec_ms <= 0 or self.memory_mb <= 0:
            raise ValueError(f"workload {self.name}: durations and memory must be > 0")


# Eight FunctionBench-style workloads. Latencies are illustrative stand-ins,
# not measurements.
DEFAULT_WORKLOADS = (
    Workload(0, "float_operation", 1100, 120, 256, 60),
    Workload(1, "linpack", 1300, 450, 256, 70),
    Workload(2, "matmul", 1250, 650, 256, 70),
    Workload(3, "pyaes", 1150, 320, 256, 60),
    Workload(4, "model_training", 2600, 3800, 256, 150),
    Workload(5, "ml_serving", 2300, 900, 256, 130),
    Workload(6, "chameleon", 1200, 380, 256, 60),
    Workload(7, "image_processing", 1600, 750, 256, 90),
)


@dataclass(frozen=True, slots=True)
class InvocationEvent:
    t_ms: int
    tenant_id: int
    workload_id: int
    trace_id: int
    seq: int = -1


class TenantKind(enum.Enum):
    REGULAR = "regular"
    MOBILE = "mobile"


class Scenario(enum.Enum):
    S1_REGULAR_ONLY = "s1"
    S2_MOBILE_ONLY = "s2"
    S3_MIXED = "s3"


@dataclass(frozen=True)
class TenantProfile:
    tenant_id: int
    kind: TenantKind
    assigned_trace_ids: tuple


@dataclass
class SpikeReport:
    spike_minutes: list
    mean_interval_min: float
    interval_cdf: list = field(default_factory=list)

    @property
    def intervals(self):
        return list(np.diff(self.spike_minutes))


# ------------------------------------------------------------------ ingest

def _parse_counts(cells):
    try:
        return [int(c) for c in cells]
    except ValueError:
        return None


_MINUTE_LABELS = list(range(1, MINUTES_PER_DAY + 1))


def load_azure_csv(path):
    """Read ``key,c0,...,c1439`` rows (header optional).

    The four leading key columns of the raw Azure release
    (HashOwner, HashApp, HashFunction, Trigger) are accepted as well; the
    first three are joined into the key.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            if len(cells) == MINUTES_PER_DAY + 4:
                key, counts_raw = ":".join(cells[:3]), cells[4:]
            else:
                key, counts_raw = cells[0], cells[1:]
            counts = _parse_counts(counts_raw)
            if lineno == 1 and (counts is None or counts == _MINUTE_LABELS):
                continue  # header
            if counts is None:
                raise TraceFormatError(f"line {lineno}: non-integer count")
            if len(counts) != MINUTES_PER_DAY:
                raise TraceFormatError(
                    f"line {lineno}: expected {MINUTES_PER_DAY} columns, got {len(counts)}")
            if min(counts) < 0:
                raise TraceFormatError(f"line {lineno}: negative count")
            rows.append(AzureTraceRow(key, np.array(counts, dtype=np.int64)))
    return rows


def save_azure_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key"] + [str(m + 1) for m in range(MINUTES_PER_DAY)])
        for row in rows:
            w.writerow([row.function_key] + row.per_minute_counts.tolist())


def filter_outliers(rows, lo=10, hi=10_000):
    return [r for r in rows if lo <= r.total <= hi]


# ------------------------------------------------------------------ events

def expand_trace(row, trace_id, tenant_id, workload_id, start_minute=0, n_minutes=None):
    """Events for one trace, optionally restricted to a minute window.

    Times are relative to ``start_minute`` so a sampled window starts at 0.
    """
    stop = MINUTES_PER_DAY if n_minutes is None else start_minute + n_minutes
    counts = row.per_minute_counts[start_minute:stop]
    times = kernels.expand_minutes(counts)
    return [InvocationEvent(int(t), tenant_id, workload_id, trace_id) for t in times]


def merge_streams(streams):
    """Merge per-trace streams into one strictly increasing, sequenced stream.

    Ties keep lower trace_id first; each later colliding event moves +1 ms.
    """
    flat = [e for s in streams for e in s]
    if not flat:
        return []
    order = sorted(range(len(flat)), key=lambda i: (flat[i].t_ms, flat[i].trace_id, i))
    times = kernels.strictly_increasing(np.fromiter(
        (flat[i].t_ms for i in order), dtype=np.int64, count=len(order)))
    return [
        InvocationEvent(int(t), flat[i].tenant_id, flat[i].workload_id, flat[i].trace_id, seq)
        for seq, (i, t) in enumerate(zip(order, times))
    ]


def resequence(events):
    return [InvocationEvent(e.t_ms, e.tenant_id, e.workload_id, e.trace_id, i)
            for i, e in enumerate(events)]


def inject_min_invocation(events, tenant_id, workload_id, trace_id, window, seed):
    """Give a tenant with no arrivals in ``window`` one arrival at a random time."""
    t0, t1 = window
    if any(e.tenant_id == tenant_id and t0 <= e.t_ms < t1 for e in events):
        return list(events)
    rng = make_rng(seed, "inject", tenant_id)
    t = int(rng.integers(t0, t1))
    extra = InvocationEvent(t, tenant_id, workload_id, trace_id)
    return merge_streams([events, [extra]])


def write_event_file(events, path):
    with open(path, "w") as fh:
        for e in events:
            fh.write(f"{e.t_ms},{e.tenant_id},{e.workload_id},{e.trace_id}\n")


def read_event_file(path):
    events = []
    last = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise TraceFormatError(f"line {lineno}: expected 4 fields")
            try:
                t, tenant, wl, tr = (int(p) for p in parts)
            except ValueError:
                raise TraceFormatError(f"line {lineno}: non-integer field") from None
            if last is not None and t <= last:
                raise TraceFormatError(f"line {lineno}: timestamps must strictly increase")
            last = t
            events.append(InvocationEvent(t, tenant, wl, tr, len(events)))
    return events


# ------------------------------------------------------------------ tenants

def _is_mobile(row):
    return row.total < MOBILE_MAX_TOTAL


def _ratio_split(n_tenants, ratio):
    mob, reg = ratio
    n_mobile = round(n_tenants * mob / (mob + reg))
    return n_mobile, n_tenants - n_mobile


def assign_tenants(rows, scenario, n_tenants, seed, *, n_traces=None,
                   mobile_ratio=(1, 1), traces_per_regular=2):
    """Assign trace indices (positions in ``rows``) to tenants.

    S1 deals ``n_traces`` shuffled regular traces round-robin, S2 gives every
    tenant one mobile trace, S3 splits tenants by ``mobile_ratio``.
    """
    scenario = Scenario(scenario)
    if n_tenants < 1:
        raise ScenarioError("need at least one tenant")
    rng = make_rng(seed, "assign", scenario.value)
    mobile = [i for i, r in enumerate(rows) if _is_mobile(r)]
    regular = [i for i, r in enumerate(rows) if not _is_mobile(r)]
    mobile = [mobile[i] for i in rng.permutation(len(mobile))]
    regular = [regular[i] for i in rng.permutation(len(regular))]

    def take(pool, n, label):
        if n > len(pool):
            raise ScenarioError(
                f"need {n} {label} traces, only {len(pool)} available (deficit {n - len(pool)})")
        return pool[:n]

    profiles = []
    if scenario is Scenario.S1_REGULAR_ONLY:
        n = len(regular) if n_traces is None else n_traces
        chosen = take(regular, max(n, n_tenants), "regular")
        buckets = [[] for _ in range(n_tenants)]
        for k, tr in enumerate(chosen):
            buckets[k % n_tenants].append(tr)
        profiles = [TenantProfile(t, TenantKind.REGULAR, tuple(b)) for t, b in enumerate(buckets)]
    elif scenario is Scenario.S2_MOBILE_ONLY:
        chosen = take(mobile, n_tenants, "mobile")
        profiles = [TenantProfile(t, TenantKind.MOBILE, (tr,)) for t, tr in enumerate(chosen)]
    else:
        n_mobile, n_regular = _ratio_split(n_tenants, mobile_ratio)
        chosen_m = take(mobile, n_mobile, "mobile")
        chosen_r = take(regular, n_regular * traces_per_regular, "regular")
        for t, tr in enumerate(chosen_m):
            profiles.append(TenantProfile(t, TenantKind.MOBILE, (tr,)))
        for j in range(n_regular):
            part = tuple(chosen_r[j * traces_per_regular:(j + 1) * traces_per_regular])
            profiles.append(TenantProfile(n_mobile + j, TenantKind.REGULAR, part))
    return profiles


def workload_for_traces(n_rows, n_workloads, seed):
    """Stable trace -> workload mapping (uniform over workload ids)."""
    rng = make_rng(seed, "workload-map")
    return rng.integers(0, n_workloads, size=n_rows)


def build_events(rows, profiles, trace_workloads, start_minute, n_minutes, seed,
                 inject_empty=True):
    """Expand and merge every assigned trace over one sampled window."""
    streams = []
    for p in profiles:
        for tr in p.assigned_trace_ids:
            streams.append(expand_trace(rows[tr], tr, p.tenant_id, int(trace_workloads[tr]),
                                        start_minute, n_minutes))
    events = merge_streams(streams)
    if inject_empty:
        window = (0, n_minutes * MINUTE_MS)
        for p in profiles:
            tr = p.assigned_trace_ids[0]
            events = inject_min_invocation(events, p.tenant_id, int(trace_workloads[tr]),
                                           tr, window, seed)
    return events


# ------------------------------------------------------------------ spikes

def _cdf(values):
    if len(values) == 0:
        return []
    vals, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    cum = np.cumsum(counts) / counts.sum()
    return [(float(v), float(c)) for v, c in zip(vals, cum)]


def detect_spikes(row):
    total = row.total
    if total == 0:
        raise ValueError("no invocations")
    counts = row.per_minute_counts
    mean = total / MINUTES_PER_DAY
    spikes = np.flatnonzero((counts >= 2 * mean) & (counts > 0))
    intervals = np.diff(spikes)
    mean_iv = float(intervals.mean()) if intervals.size else float("nan")
    return SpikeReport([int(m) for m in spikes], mean_iv, _cdf(intervals))


def spike_interval_cdf(rows):
    """CDF over functions of their mean spike interval (functions with >= 2 spikes)."""
    means = []
    for r in rows:
        if r.total == 0:
            continue
        rep = detect_spikes(r)
        if len(rep.spike_minutes) >= 2:
            means.append(rep.mean_interval_min)
    return _cdf(means)


def fraction_above(cdf, x):
    below = 0.0
    for v, c in cdf:
        if v <= x:
            below = c
    return 1.0 - below if cdf else float("nan")


def write_spike_csv(cdf, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval_minutes", "cumulative_fraction"])
        for v, c in cdf:
            w.writerow([f"{v:g}", f"{c:.6f}"])


# ------------------------------------------------------------------ synthetic

def synth_azure_rows(n_functions, seed, day=1, *, log10_total=(0.3, 4.3),
                     burst_prob=0.02, burst_factor=8.0, day_drift=0.35, dropout=0.1):
    """Seeded Azure-format rows for tests and desk experiments (not real data).

    Each function draws a daily volume (log-uniform), an active part of the
    day and a burst profile from ``seed``; ``day`` perturbs volumes and drops
    some functions so later days resemble but differ from day 1.
    """
    base = make_rng(seed, "synth-functions")
    lo, hi = log10_total
    volume = 10 ** base.uniform(lo, hi, size=n_functions)
    on_start = base.integers(0, MINUTES_PER_DAY // 2, size=n_functions)
    on_len = base.integers(MINUTES_PER_DAY // 3, MINUTES_PER_DAY + 1, size=n_functions)
    burstiness = base.uniform(0.0, 1.0, size=n_functions)

    rng = make_rng(seed, "synth-day", day)
    drift = np.exp(rng.normal(0.0, day_drift, size=n_functions)) if day > 1 else np.ones(n_functions)
    alive = rng.random(n_functions) >= (dropout if day > 1 else 0.0)
    minutes = np.arange(MINUTES_PER_DAY)
    rows = []
    for f in range(n_functions):
        active = ((minutes - on_start[f]) % MINUTES_PER_DAY) < on_len[f]
        rate = np.where(active, volume[f] * drift[f] / max(active.sum(), 1), 0.0)
        bursts = rng.random(MINUTES_PER_DAY) < burst_prob * burstiness[f] * 2
        rate = np.where(bursts, rate * burst_factor, rate)
        counts = rng.poisson(rate) if alive[f] else np.zeros(MINUTES_PER_DAY, dtype=np.int64)
        rows.append(AzureTraceRow(f"synth-{seed}-{f}", counts.astype(np.int64)))
    return rows
