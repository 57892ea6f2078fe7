"""Glue for repeated, seeded experiments: trace-set sampling and system runs."""
from dataclasses import dataclass, replace

from . import trace as tr
from ._rng import make_rng
from .policies import make_policy
from .simcore import Engine, PoolConfig
from .report import compare, summarize

MINUTE_MS = tr.MINUTE_MS


@dataclass(frozen=True)
class SystemSpec:
    label: str
    policy: str
    pool: str
    warm_keepalive_ms: int = 600_000
    reclaim_keepalive_ms: int = 300_000
    on_saturation: str = "buffer"
    window: int = 30
    learned_in_warm_pool: bool = False
    restore_cost_ms: float = 430.0
    eviction_decision_cost_ms: float = 0.0

    def config(self, check=False):
        return PoolConfig.from_shorthand(
            self.pool, warm_keepalive_ms=self.warm_keepalive_ms,
            reclaim_keepalive_ms=self.reclaim_keepalive_ms, on_saturation=self.on_saturation,
            learned_in_warm_pool=self.learned_in_warm_pool, restore_cost_ms=self.restore_cost_ms,
            eviction_decision_cost_ms=self.eviction_decision_cost_ms, check_invariants=check)


def vanilla(pool="32-0", policy="lru", **kw):
    return SystemSpec(f"vanilla-{policy}-{pool}", policy, pool, **kw)


def tiered(pool="24-8", policy="lru", keepalive_ms=300_000, **kw):
    return SystemSpec(f"tiered-{policy}-{pool}", policy, pool, warm_keepalive_ms=keepalive_ms,
                      reclaim_keepalive_ms=keepalive_ms, **kw)


def parse_system(text):
    """``label=policy:W-R[:warm_ka_ms[:reclaim_ka_ms]]`` or ``policy:W-R``."""
    label = None
    if "=" in text:
        label, text = text.split("=", 1)
    parts = text.split(":")
    if len(parts) < 2:
        raise ValueError(f"system must look like policy:W-R, got {text!r}")
    policy, pool = parts[0], parts[1]
    PoolConfig.from_shorthand(pool)
    kw = {}
    if len(parts) > 2:
        kw["warm_keepalive_ms"] = int(parts[2])
    if len(parts) > 3:
        kw["reclaim_keepalive_ms"] = int(parts[3])
    return SystemSpec(label or f"{policy}-{pool}", policy, pool, **kw)


@dataclass(frozen=True)
class SetParams:
    scenario: str = "s1"
    n_tenants: int = 1
    traces_per_set: int = 40
    window_minutes: int = 15
    n_workloads: int = 8
    mobile_ratio: tuple = (1, 1)
    traces_per_regular: int = 2
    inject_empty: bool = True


def make_trace_set(rows, params, seed):
    """One randomly drawn experiment: tenants, their traces and a time window."""
    rng = make_rng(seed, "trace-set")
    start = int(rng.integers(0, tr.MINUTES_PER_DAY - params.window_minutes + 1))
    n_traces = params.traces_per_set if params.scenario == "s1" else None
    profiles = tr.assign_tenants(rows, params.scenario, params.n_tenants, seed, n_traces=n_traces,
                                 mobile_ratio=params.mobile_ratio,
                                 traces_per_regular=params.traces_per_regular)
    wl = tr.workload_for_traces(len(rows), params.n_workloads, seed)
    return tr.build_events(rows, profiles, wl, start, params.window_minutes, seed,
                           inject_empty=params.inject_empty)


def run_system(events, spec, seed=0, model=None, workloads=tr.DEFAULT_WORKLOADS, check=False,
               window_ms=1_200_000):
    policy = make_policy(spec.policy, window=spec.window, model=model, n_workloads=len(workloads))
    result = Engine(spec.config(check), policy, workloads).run(events)
    rep = summarize(result.outcomes, result.queue_log, result.end_ms, window_ms=window_ms,
                    start_ms=result.start_ms, seed=seed)
    rep.engine_stats = result.stats
    return rep


def run_compare(rows, systems, params, seeds, model=None, workloads=tr.DEFAULT_WORKLOADS,
                check=False):
    reports = {}
    for seed in seeds:
        events = make_trace_set(rows, params, seed)
        for spec in systems:
            reports[(spec.label, params.scenario, seed)] = run_system(
                events, spec, seed, model, workloads, check)
    return compare(reports), reports


def with_saturation(spec, mode):
    return replace(spec, on_saturation=mode)
