"""Run metrics and cross-system comparison tables."""
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .simcore import OutcomeKind

DEFAULT_WINDOW_MS = 1_200_000


class ReportError(ValueError):
    pass


@dataclass
class SimulationReport:
    total_requests: int = 0
    warm_from_warm: int = 0
    warm_from_reclaim: int = 0
    cold_starts: int = 0
    dropped: int = 0
    warm_rate_pct: float = 0.0
    cold_per_window: list = field(default_factory=list)
    window_ms: int = DEFAULT_WINDOW_MS
    mean_response_ms: float = 0.0
    mean_wait_ms: float = 0.0
    mean_queue_size: float = 0.0
    max_queue_size: int = 0
    seed: int = 0
    outcomes: list = field(default_factory=list, repr=False)

    SCALAR_FIELDS = ("total_requests", "warm_from_warm", "warm_from_reclaim", "cold_starts",
                     "dropped", "warm_rate_pct", "mean_response_ms", "mean_wait_ms",
                     "mean_queue_size", "max_queue_size", "window_ms", "seed")

    def as_rows(self):
        rows = []
        for name in self.SCALAR_FIELDS:
            v = getattr(self, name)
            rows.append((name, f"{v:.6f}" if isinstance(v, float) else str(v)))
        rows.append(("cold_per_window", " ".join(str(c) for c in self.cold_per_window)))
        return rows

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# response/queue means are per request within this run"])
        w.writerow(["metric", "value"])
        w.writerows(self.as_rows())
        return buf.getvalue()

    def to_text(self):
        width = max(len(k) for k, _ in self.as_rows())
        return "\n".join(f"{k:<{width}}  {v}" for k, v in self.as_rows()) + "\n"


def summarize(outcomes, queue_log=None, end_ms=None, window_ms=DEFAULT_WINDOW_MS,
              start_ms=None, seed=0):
    rep = SimulationReport(window_ms=window_ms, seed=seed, outcomes=list(outcomes))
    if not outcomes:
        return rep
    kinds = [o.kind for o in outcomes]
    rep.total_requests = len(outcomes)
    rep.warm_from_warm = kinds.count(OutcomeKind.WARM_FROM_WARM_POOL)
    rep.warm_from_reclaim = kinds.count(OutcomeKind.WARM_FROM_RECLAIM)
    rep.cold_starts = kinds.count(OutcomeKind.COLD_START)
    rep.dropped = kinds.count(OutcomeKind.DROPPED_AS_COLD)
    rep.warm_rate_pct = 100.0 * (rep.warm_from_warm + rep.warm_from_reclaim) / rep.total_requests

    times = np.array([o.event.t_ms for o in outcomes], dtype=np.int64)
    t0 = int(times.min()) if start_ms is None else int(start_ms)
    coldish = np.array([k in (OutcomeKind.COLD_START, OutcomeKind.DROPPED_AS_COLD) for k in kinds])
    bins = (times - t0) // window_ms
    rep.cold_per_window = np.bincount(bins[coldish], minlength=int(bins.max()) + 1).tolist()

    served = [o for o in outcomes if o.kind is not OutcomeKind.DROPPED_AS_COLD]
    if served:
        rep.mean_response_ms = float(np.mean([o.response_ms for o in served]))
        rep.mean_wait_ms = float(np.mean([o.wait_ms for o in served]))
    if queue_log:
        qt = [t for t, _ in queue_log]
        qv = [v for _, v in queue_log]
        end = max(qt[-1], end_ms if end_ms is not None else qt[-1])
        span = end - qt[0]
        rep.max_queue_size = int(max(qv))
        if span > 0:
            rep.mean_queue_size = kernels.step_integral(qt, qv, end) / span
    return rep


@dataclass
class ComparisonRow:
    system: str
    scenario: str
    mean_warm_rate: float
    wins: int
    mean_response_ms: float
    mean_queue_size: float
    repetitions: int


@dataclass
class ComparisonTable:
    rows: list

    HEADER = ("system", "scenario", "mean_warm_rate", "win_count", "mean_response_ms",
              "mean_queue_size", "repetitions")

    def row(self, system, scenario):
        for r in self.rows:
            if r.system == system and r.scenario == scenario:
                return r
        raise KeyError((system, scenario))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# means taken per request within a run, then across runs"])
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([r.system, r.scenario, f"{r.mean_warm_rate:.4f}", r.wins,
                        f"{r.mean_response_ms:.4f}", f"{r.mean_queue_size:.4f}", r.repetitions])
        return buf.getvalue()

    def to_text(self):
        lines = [f"{'system':<24}{'scenario':<10}{'warm%':>9}{'wins':>6}{'resp ms':>12}{'queue':>9}"]
        for r in self.rows:
            lines.append(f"{r.system:<24}{r.scenario:<10}{r.mean_warm_rate:>9.2f}{r.wins:>6}"
                         f"{r.mean_response_ms:>12.1f}{r.mean_queue_size:>9.3f}")
        return "\n".join(lines) + "\n"


def compare(reports):
    """``reports`` maps (system, scenario, seed) -> SimulationReport.

    A system wins a seed when its warm rate is strictly the highest among the
    systems run on that scenario and seed.
    """
    systems, scenarios = [], []
    seeds = {}
    for (system, scenario, seed) in reports:
        if system not in systems:
            systems.append(system)
        if scenario not in scenarios:
            scenarios.append(scenario)
        seeds.setdefault((system, scenario), set()).add(seed)
    rows = []
    for scenario in scenarios:
        present = [s for s in systems if (s, scenario) in seeds]
        seed_sets = {frozenset(seeds[(s, scenario)]) for s in present}
        if len(seed_sets) != 1:
            raise ReportError(f"systems in scenario {scenario!r} were run on different seeds")
        scen_seeds = sorted(next(iter(seed_sets)))
        wins = dict.fromkeys(present, 0)
        for seed in scen_seeds:
            rates = {s: reports[(s, scenario, seed)].warm_rate_pct for s in present}
            top = max(rates.values())
            leaders = [s for s, r in rates.items() if r == top]
            if len(leaders) == 1:
                wins[leaders[0]] += 1
        for s in present:
            reps = [reports[(s, scenario, seed)] for seed in scen_seeds]
            rows.append(ComparisonRow(
                s, scenario,
                float(np.mean([r.warm_rate_pct for r in reps])), wins[s],
                float(np.mean([r.mean_response_ms for r in reps])),
                float(np.mean([r.mean_queue_size for r in reps])), len(reps)))
    return ComparisonTable(rows)


def write_outcome_log(outcomes, path):
    with open(path, "w") as fh:
        fh.write("seq,t_ms,tenant,workload,kind,wait_ms,init_ms,exec_ms\n")
        for o in outcomes:
            e = o.event
            fh.write(f"{e.seq},{e.t_ms},{e.tenant_id},{e.workload_id},{o.kind.value},"
                     f"{o.wait_ms:.3f},{o.init_ms:.3f},{o.exec_ms:.3f}\n")


def write_window_csv(report, path):
    with open(path, "w") as fh:
        fh.write("window_index,window_start_ms,cold_starts\n")
        for i, c in enumerate(report.cold_per_window):
            fh.write(f"{i},{i * report.window_ms},{c}\n")
