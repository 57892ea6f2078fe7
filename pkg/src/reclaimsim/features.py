"""State tracking for the learned eviction policy.

All intervals are counted in arrivals, not wall time. The tracker is a
deterministic fold over the arrival/service/lifecycle calls the engine makes.
"""
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels

HISTORY_LEN = 200
PAST_WINDOWS = (10, 50, 100)
SENTINEL = -1
COUNT_SCALE = 200.0
SYSTEM_DIM = 3 + HISTORY_LEN
CONTAINER_DIM = 9
FEATURE_DIM = SYSTEM_DIM + CONTAINER_DIM

CONTAINER_FIELDS = ("workload_id", "idle_rank", "frequency", "freq_rank", "alive_count",
                    "warm_count", "past10", "past50", "past100")
FEATURE_NAMES = (("current_workload", "pii1", "pii2")
                 + tuple(f"hist{i:03d}" for i in range(HISTORY_LEN))
                 + CONTAINER_FIELDS)


class TrackerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SystemStateVector:
    current_workload_id: int
    pii1: int
    pii2: int
    history200: tuple


@dataclass(frozen=True)
class ContainerStateVector:
    workload_id: int
    idle_rank: int
    frequency: int
    freq_rank: int
    alive_count: int
    warm_count: int
    past10: int
    past50: int
    past100: int


@dataclass
class _ContainerStats:
    workload_id: int
    created_at: int
    last_service_at: int
    frequency: int = 0


class StateTracker:
    def __init__(self):
        self.history = deque(maxlen=HISTORY_LEN)
        self.n_arrivals = 0
        self.last_event = None
        self._served = {}  # workload -> [second_last_seq, last_seq]
        self._containers = {}

    # -- system side
    def observe_arrival(self, event):
        if event.seq != self.n_arrivals:
            raise TrackerError(f"arrival seq {event.seq} out of order (expected {self.n_arrivals})")
        self.history.append(event.workload_id)
        self.n_arrivals += 1
        self.last_event = event

    def pii(self, event):
        prev, last = self._served.get(event.workload_id, (None, None))
        pii1 = max(0, event.seq - last - 1) if last is not None else SENTINEL
        pii2 = last - prev - 1 if prev is not None else SENTINEL
        return pii1, pii2

    # -- container side
    def container_created(self, cid, workload_id):
        self._containers[cid] = _ContainerStats(workload_id, self.n_arrivals, self.n_arrivals)

    def container_reset(self, cid):
        st = self._stats(cid)
        st.created_at = st.last_service_at = self.n_arrivals
        st.frequency = 0

    def container_destroyed(self, cid):
        self._containers.pop(cid, None)

    def observe_service(self, cid, event):
        st = self._stats(cid)
        st.frequency += 1
        st.last_service_at = self.n_arrivals
        prev, last = self._served.get(event.workload_id, (None, None))
        if last is None or event.seq > last:
            self._served[event.workload_id] = (last, event.seq)
        elif prev is None or event.seq > prev:
            self._served[event.workload_id] = (event.seq, last)

    def container_counts(self, cid):
        st = self._stats(cid)
        return st.frequency, self.n_arrivals - st.created_at, self.n_arrivals - st.last_service_at

    def _stats(self, cid):
        try:
            return self._containers[cid]
        except KeyError:
            raise TrackerError(f"unknown container {cid}") from None

    def history_array(self):
        return np.fromiter(self.history, dtype=np.int64, count=len(self.history))

    def snapshot(self, idle, current_event=None):
        """State vectors at an eviction decision.

        ``idle`` is a sequence of ``(container_id, idle_since_ms)`` for the
        candidates; ranks are computed over exactly that set.
        """
        if not idle:
            raise TrackerError("snapshot needs at least one candidate")
        ev = current_event if current_event is not None else self.last_event
        hist = self.history_array()
        padded = (SENTINEL,) * (HISTORY_LEN - hist.size) + tuple(int(h) for h in hist)
        pii1, pii2 = self.pii(ev) if ev is not None else (SENTINEL, SENTINEL)
        system = SystemStateVector(ev.workload_id if ev is not None else SENTINEL,
                                   pii1, pii2, padded)

        cids = [cid for cid, _ in idle]
        stats = [self._stats(cid) for cid in cids]
        by_idle = sorted(range(len(idle)), key=lambda i: (idle[i][1], cids[i]))
        by_freq = sorted(range(len(idle)), key=lambda i: (-stats[i].frequency, cids[i]))
        idle_rank = {i: r for r, i in enumerate(by_idle)}
        freq_rank = {i: r for r, i in enumerate(by_freq)}
        past = kernels.window_counts(hist, [s.workload_id for s in stats], PAST_WINDOWS)

        vecs = []
        for i, st in enumerate(stats):
            vecs.append(ContainerStateVector(
                st.workload_id, idle_rank[i], st.frequency, freq_rank[i],
                self.n_arrivals - st.created_at, self.n_arrivals - st.last_service_at,
                int(past[i, 0]), int(past[i, 1]), int(past[i, 2])))
        return system, vecs


def raw_vector(system, container):
    return ([system.current_workload_id, system.pii1, system.pii2, *system.history200]
            + [getattr(container, f) for f in CONTAINER_FIELDS])


def encode_batch(system, containers, n_workloads):
    """Scaled model inputs, one row per candidate (FEATURE_DIM columns)."""
    n = len(containers)
    nw = float(n_workloads)
    sys_part = np.empty(SYSTEM_DIM)
    sys_part[0] = system.current_workload_id / nw
    sys_part[1] = system.pii1 / COUNT_SCALE if system.pii1 >= 0 else -1.0
    sys_part[2] = system.pii2 / COUNT_SCALE if system.pii2 >= 0 else -1.0
    sys_part[3:] = np.asarray(system.history200, dtype=np.float64) / nw

    raw = np.array([[getattr(c, f) for f in CONTAINER_FIELDS] for c in containers],
                   dtype=np.float64)
    cont = np.empty_like(raw)
    cont[:, 0] = raw[:, 0] / nw
    cont[:, 1] = raw[:, 1] / n
    cont[:, 2] = raw[:, 2] / COUNT_SCALE
    cont[:, 3] = raw[:, 3] / n
    cont[:, 4:] = raw[:, 4:] / COUNT_SCALE

    out = np.empty((n, FEATURE_DIM))
    out[:, :SYSTEM_DIM] = sys_part
    out[:, SYSTEM_DIM:] = cont
    return out
