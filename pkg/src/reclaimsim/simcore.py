"""Discrete-event engine for one resource-limited, multi-tenant invoker.

Containers live in four pools: busy, warm (tenant-private, ``PausedWarm``),
reclaim (shared after a checkpoint restore, ``PausedReclaim``) and a transient
``Restoring`` set that occupies a slot but serves nobody. A request first looks
for a warm container of its own tenant, then for a shared reclaim container,
and otherwise goes through :meth:`Engine.provision`.
"""
import enum
import heapq
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .features import StateTracker
from .policies import SHARED, EvictionCandidate, LRUPolicy, OracleContext
from .trace import DEFAULT_WORKLOADS


class SimulationError(RuntimeError):
    """An internal invariant was violated; the run cannot continue."""


class ContainerState(enum.Enum):
    STARTING = "Starting"
    CHECKPOINTING = "Checkpointing"
    BUSY = "Busy"
    PAUSED_WARM = "PausedWarm"
    RESTORING = "Restoring"
    PAUSED_RECLAIM = "PausedReclaim"
    DESTROYED = "Destroyed"


S = ContainerState
LEGAL_TRANSITIONS = {
    S.STARTING: {S.CHECKPOINTING, S.BUSY},
    S.CHECKPOINTING: {S.BUSY},
    S.BUSY: {S.PAUSED_WARM},
    S.PAUSED_WARM: {S.BUSY, S.RESTORING, S.DESTROYED},
    S.RESTORING: {S.PAUSED_RECLAIM},
    S.PAUSED_RECLAIM: {S.BUSY, S.DESTROYED},
    S.DESTROYED: set(),
}


class OutcomeKind(enum.Enum):
    WARM_FROM_WARM_POOL = "WarmFromWarmPool"
    WARM_FROM_RECLAIM = "WarmFromReclaim"
    COLD_START = "ColdStart"
    DROPPED_AS_COLD = "DroppedAsCold"


class EventKind(enum.IntEnum):
    # value doubles as the same-timestamp processing priority
    COMPLETION = 0
    RESTORE_DONE = 1
    WARM_EXPIRY = 2
    RECLAIM_EXPIRY = 3
    ARRIVAL = 4


@dataclass(slots=True)
class ContainerRecord:
    container_id: int
    workload_id: int
    owner: int
    state: ContainerState
    created_seq: int
    last_used_seq: int = -1
    last_used_t_ms: int = 0
    idle_since_ms: int = 0
    frequency: int = 0
    busy_until_ms: int = 0
    epoch: int = 0
    gdsf_base: float = None


@dataclass
class PoolConfig:
    max_containers: int = 32
    reclaim_capacity: int = 0
    warm_keepalive_ms: int = 600_000
    reclaim_keepalive_ms: int = 300_000
    reclaim_enabled: bool = False
    restore_cost_ms: float = 430.0
    eviction_decision_cost_ms: float = 0.0
    on_saturation: str = "buffer"
    learned_in_warm_pool: bool = False
    check_invariants: bool = False

    def __post_init__(self):
        if self.max_containers < 1:
            raise ValueError("max_containers must be >= 1")
        if not 0 <= self.reclaim_capacity <= self.max_containers:
            raise ValueError("reclaim_capacity must lie in [0, max_containers]")
        for name in ("warm_keepalive_ms", "reclaim_keepalive_ms", "restore_cost_ms",
                     "eviction_decision_cost_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.on_saturation not in ("buffer", "drop"):
            raise ValueError("on_saturation must be 'buffer' or 'drop'")

    @property
    def warm_limit(self):
        if self.reclaim_enabled:
            return self.max_containers - self.reclaim_capacity
        return self.max_containers

    @classmethod
    def from_shorthand(cls, pool, **kw):
        """``"24-8"`` -> 32 containers in total, at most 8 idle in the reclaim pool."""
        try:
            warm, reclaim = (int(p) for p in str(pool).split("-"))
        except ValueError:
            raise ValueError(f"pool shorthand must look like W-R, got {pool!r}") from None
        return cls(max_containers=warm + reclaim, reclaim_capacity=reclaim,
                   reclaim_enabled=reclaim > 0, **kw)


@dataclass(frozen=True, slots=True)
class RequestOutcome:
    event: object
    kind: OutcomeKind
    wait_ms: float
    init_ms: float
    exec_ms: float
    container_id: int = -1

    @property
    def response_ms(self):
        return self.wait_ms + self.init_ms + self.exec_ms


@dataclass
class EngineResult:
    outcomes: list
    queue_log: list
    end_ms: float
    start_ms: float
    stats: dict = field(default_factory=dict)
    transitions: list = None


def _mru_key(rec):
    return (rec.last_used_t_ms, -rec.container_id)


def _env_checks():
    return os.environ.get("RECLAIMSIM_CHECK", "0") not in ("", "0", "false", "no")


class DecisionContext:
    """What a policy may look at during one eviction decision."""

    __slots__ = ("engine", "pool", "candidates", "current_event")

    def __init__(self, engine, pool, candidates, current_event):
        self.engine = engine
        self.pool = pool
        self.candidates = candidates
        self.current_event = current_event

    def oracle(self, window):
        eng = self.engine
        lo = eng.cursor
        hi = min(lo + window, len(eng.events))
        return OracleContext(eng.future_w[lo:hi], eng.future_t[lo:hi],
                             eng.tracker.n_arrivals - 1, window)

    def state_vectors(self):
        idle = [(c.container_id, self.engine.containers[c.container_id].idle_since_ms)
                for c in self.candidates]
        return self.engine.tracker.snapshot(idle, self.current_event)


class Engine:
    def __init__(self, config, policy, workloads=DEFAULT_WORKLOADS, *, decision_hook=None,
                 record_transitions=False):
        self.config = config
        self.policy = policy
        if policy.reclaim_only and not config.learned_in_warm_pool:
            self.warm_policy = LRUPolicy()
        else:
            self.warm_policy = policy
        self.workloads = {w.workload_id: w for w in workloads}
        self.decision_hook = decision_hook
        self.check = config.check_invariants or _env_checks()
        self.transitions = [] if record_transitions else None

    # ------------------------------------------------------------ bookkeeping
    def _reset(self, events):
        self.events = events
        self.future_w = np.fromiter((e.workload_id for e in events), dtype=np.int64, count=len(events))
        self.future_t = np.fromiter((e.tenant_id for e in events), dtype=np.int64, count=len(events))
        self.cursor = 0
        self.now = 0
        self.heap = []
        self._counter = 0
        self._next_cid = 0
        self.containers = {}
        self.busy = {}
        self.warm = {}
        self.restoring = {}
        self.reclaim = {}
        self.buffer = deque()
        self.outcomes = []
        self.queue_log = []
        self.checkpointed = set()
        self.tracker = StateTracker()
        self.stats = {"evictions": 0, "demotions": 0, "restores": 0, "destroyed": 0,
                      "decisions": 0, "invariant_checks": 0, "max_live": 0,
                      "max_reclaim": 0}
        self._last_served_seq = -1

    def _pool_of(self, state):
        return {S.BUSY: self.busy, S.PAUSED_WARM: self.warm, S.RESTORING: self.restoring,
                S.PAUSED_RECLAIM: self.reclaim}.get(state)

    def _transition(self, rec, new):
        old = rec.state
        if new not in LEGAL_TRANSITIONS[old]:
            raise SimulationError(
                f"illegal transition {old.value} -> {new.value} for container {rec.container_id}")
        pool = self._pool_of(old)
        if pool is not None:
            del pool[rec.container_id]
        rec.state = new
        rec.epoch += 1
        pool = self._pool_of(new)
        if pool is not None:
            pool[rec.container_id] = rec
        if new is S.DESTROYED:
            del self.containers[rec.container_id]
            self.tracker.container_destroyed(rec.container_id)
            self.stats["destroyed"] += 1
        if self.transitions is not None:
            self.transitions.append((self.now, rec.container_id, old.value, new.value))

    def _push(self, t, kind, cid, epoch):
        self._counter += 1
        heapq.heappush(self.heap, (t, int(kind), self._counter, cid, epoch))

    def _log_queue(self):
        self.queue_log.append((self.now, len(self.buffer)))

    def live_count(self):
        return len(self.containers)

    # ------------------------------------------------------------ run loop
    def run(self, events):
        self._reset(events)
        n = len(events)
        prev_t = None
        for e in events:
            if prev_t is not None and e.t_ms <= prev_t:
                raise SimulationError("arrival timestamps must be strictly increasing")
            prev_t = e.t_ms
        start = events[0].t_ms if events else 0
        self.now = start
        self._log_queue()
        while self.cursor < n or self.heap:
            if self.heap and (self.cursor >= n or
                              (self.heap[0][0], self.heap[0][1]) < (events[self.cursor].t_ms,
                                                                    EventKind.ARRIVAL)):
                t, kind, _, cid, epoch = heapq.heappop(self.heap)
                self.now = t
                self._dispatch(EventKind(kind), cid, epoch)
            else:
                ev = events[self.cursor]
                self.cursor += 1
                self.now = ev.t_ms
                self.handle_arrival(ev)
            if self.check:
                self.check_invariants()
        if self.buffer:
            raise SimulationError(f"{len(self.buffer)} requests still buffered at quiescence")
        if len(self.outcomes) != n:
            raise SimulationError("outcome count does not match arrival count")
        return EngineResult(self.outcomes, self.queue_log, self.now, start, dict(self.stats),
                            self.transitions)

    def _dispatch(self, kind, cid, epoch):
        rec = self.containers.get(cid)
        if kind is EventKind.COMPLETION:
            self.complete(cid, self.now)
            return
        if rec is None or rec.epoch != epoch:
            return  # stale timer
        if kind is EventKind.RESTORE_DONE:
            self.finish_restore(rec)
        else:
            self.expire(cid, kind)

    # ------------------------------------------------------------ arrivals
    def handle_arrival(self, ev):
        self.tracker.observe_arrival(ev)
        if self.buffer:
            self.buffer.append(ev)
            self._log_queue()
            return
        if not self.step_arrival(ev):
            self._saturated(ev)

    def _saturated(self, ev):
        if self.config.on_saturation == "drop":
            self.outcomes.append(RequestOutcome(ev, OutcomeKind.DROPPED_AS_COLD, 0.0, 0.0, 0.0))
        else:
            self.buffer.append(ev)
            self._log_queue()

    def step_arrival(self, ev):
        """Serve ``ev`` now if possible; False means no slot (buffer or drop)."""
        match = self._find_warm(ev)
        if match is not None:
            self._serve(match, ev, OutcomeKind.WARM_FROM_WARM_POOL, 0.0, 0.0)
            return True
        if self.config.reclaim_enabled:
            match = self._find_reclaim(ev)
            if match is not None:
                self._serve(match, ev, OutcomeKind.WARM_FROM_RECLAIM, 0.0, 0.0)
                return True
        return self.provision(ev)

    def _find_warm(self, ev):
        best = None
        for rec in self.warm.values():
            if rec.workload_id == ev.workload_id and rec.owner == ev.tenant_id:
                if best is None or _mru_key(rec) > _mru_key(best):
                    best = rec
        return best

    def _find_reclaim(self, ev):
        best = None
        for rec in self.reclaim.values():
            if rec.workload_id == ev.workload_id:
                if best is None or _mru_key(rec) > _mru_key(best):
                    best = rec
        return best

    def provision(self, ev):
        """Create a container for ``ev``, evicting an idle one when memory is full."""
        cfg = self.config
        max_free = cfg.max_containers - len(self.busy)
        if max_free <= 0:
            return False
        free = max_free - len(self.warm) - len(self.reclaim) - len(self.restoring)
        delay = 0.0
        if free <= 0:
            if self.warm:
                pool = "reclaim" if self.reclaim else "warm"
            elif self.reclaim:
                pool = "reclaim"
            elif self.restoring:
                return False  # every idle slot is mid-restore
            else:
                raise SimulationError("no evictable container although memory is full")
            self._evict(pool, ev)
            delay = cfg.eviction_decision_cost_ms
        self._create(ev, delay)
        return True

    def _candidates(self, pool):
        recs = self.warm if pool == "warm" else self.reclaim
        out = []
        for rec in sorted(recs.values(), key=lambda r: r.container_id):
            wl = self.workloads[rec.workload_id]
            out.append(EvictionCandidate(
                rec.container_id, rec.workload_id, rec.last_used_seq, rec.last_used_t_ms,
                rec.frequency, wl.memory_mb, wl.cold_start_ms,
                rec.owner if pool == "warm" else SHARED, rec.gdsf_base))
        return out

    def _choose(self, pool, current_event):
        cands = self._candidates(pool)
        if not cands:
            raise SimulationError(f"eviction requested from empty {pool} pool")
        if self.check:
            for c in cands:
                st = self.containers[c.container_id].state
                if st in (S.BUSY, S.RESTORING):
                    raise SimulationError(f"{st.value} container offered for eviction")
        policy = self.warm_policy if pool == "warm" else self.policy
        decision = DecisionContext(self, pool, cands, current_event)
        victim = policy.select(cands, decision)
        if victim not in {c.container_id for c in cands}:
            raise SimulationError(f"policy returned non-candidate {victim}")
        self.stats["decisions"] += 1
        if self.decision_hook is not None:
            self.decision_hook(decision, victim)
        return self.containers[victim]

    def _evict(self, pool, ev):
        victim = self._choose(pool, ev)
        self.stats["evictions"] += 1
        self._transition(victim, S.DESTROYED)

    def _create(self, ev, delay):
        cid = self._next_cid
        self._next_cid += 1
        wl = self.workloads[ev.workload_id]
        rec = ContainerRecord(cid, ev.workload_id, ev.tenant_id, S.STARTING, created_seq=ev.seq)
        self.containers[cid] = rec
        self.tracker.container_created(cid, ev.workload_id)
        init = float(wl.cold_start_ms)
        if self.config.reclaim_enabled and ev.workload_id not in self.checkpointed:
            self.checkpointed.add(ev.workload_id)
            init += wl.checkpoint_extra_ms
            self._transition(rec, S.CHECKPOINTING)
        self._serve(rec, ev, OutcomeKind.COLD_START, init, delay)

    def _serve(self, rec, ev, kind, init, delay):
        wl = self.workloads[ev.workload_id]
        wait = (self.now - ev.t_ms) + delay
        if ev.seq <= self._last_served_seq:
            raise SimulationError("requests served out of arrival order")
        self._last_served_seq = ev.seq
        self._transition(rec, S.BUSY)
        rec.owner = ev.tenant_id
        rec.last_used_seq = ev.seq
        rec.last_used_t_ms = self.now
        rec.frequency += 1
        rec.gdsf_base = self.policy.touch()
        rec.busy_until_ms = self.now + delay + init + wl.exec_ms
        self.tracker.observe_service(rec.container_id, ev)
        self._push(rec.busy_until_ms, EventKind.COMPLETION, rec.container_id, rec.epoch)
        self.outcomes.append(RequestOutcome(ev, kind, float(wait), float(init),
                                            float(wl.exec_ms), rec.container_id))
        live = len(self.containers)
        if live > self.stats["max_live"]:
            self.stats["max_live"] = live

    # ------------------------------------------------------------ lifecycle
    def complete(self, cid, t):
        rec = self.containers.get(cid)
        if rec is None or rec.state is not S.BUSY or rec.busy_until_ms != t:
            raise SimulationError(f"completion for container {cid} that is not busy until {t}")
        self._transition(rec, S.PAUSED_WARM)
        rec.busy_until_ms = 0
        rec.idle_since_ms = t
        self._push(t + self.config.warm_keepalive_ms, EventKind.WARM_EXPIRY, cid, rec.epoch)
        if self.config.reclaim_enabled and len(self.warm) > self.config.warm_limit:
            victim = self._choose("warm", None)
            self.stats["demotions"] += 1
            self.begin_restore(victim.container_id, t)
        self.drain()

    def begin_restore(self, cid, t):
        rec = self.containers[cid]
        if rec.state is not S.PAUSED_WARM:
            raise SimulationError(f"restore of container {cid} in state {rec.state.value}")
        cfg = self.config
        if not cfg.reclaim_enabled or len(self.reclaim) + len(self.restoring) >= cfg.reclaim_capacity:
            self._transition(rec, S.DESTROYED)
            return
        self._transition(rec, S.RESTORING)
        rec.owner = SHARED
        self.stats["restores"] += 1
        self._push(t + cfg.restore_cost_ms, EventKind.RESTORE_DONE, cid, rec.epoch)

    def finish_restore(self, rec):
        self._transition(rec, S.PAUSED_RECLAIM)
        # checkpoint restore wipes per-container history: count it as new
        rec.idle_since_ms = self.now
        rec.frequency = 0
        rec.created_seq = rec.last_used_seq = self.tracker.n_arrivals - 1
        rec.last_used_t_ms = self.now
        rec.gdsf_base = self.policy.touch()
        self.tracker.container_reset(rec.container_id)
        self._push(self.now + self.config.reclaim_keepalive_ms, EventKind.RECLAIM_EXPIRY,
                   rec.container_id, rec.epoch)
        self.drain()

    def expire(self, cid, kind):
        rec = self.containers[cid]
        if kind is EventKind.WARM_EXPIRY and rec.state is S.PAUSED_WARM:
            if self.config.reclaim_enabled:
                self.begin_restore(cid, self.now)
            else:
                self._transition(rec, S.DESTROYED)
        elif kind is EventKind.RECLAIM_EXPIRY and rec.state is S.PAUSED_RECLAIM:
            self._transition(rec, S.DESTROYED)

    def drain(self):
        changed = False
        while self.buffer:
            if not self.step_arrival(self.buffer[0]):
                break
            self.buffer.popleft()
            changed = True
        if changed:
            self._log_queue()

    # ------------------------------------------------------------ checks
    def check_invariants(self):
        cfg = self.config
        self.stats["invariant_checks"] += 1
        live = len(self.containers)
        if live > cfg.max_containers:
            raise SimulationError(f"{live} live containers exceed max {cfg.max_containers}")
        if len(self.reclaim) > cfg.reclaim_capacity:
            raise SimulationError("reclaim pool above capacity")
        if len(self.reclaim) + len(self.restoring) > max(cfg.reclaim_capacity, 0):
            raise SimulationError("reclaim pool plus restoring above capacity")
        if len(self.warm) > cfg.warm_limit:
            raise SimulationError("warm pool above its idle limit")
        if len(self.busy) + len(self.warm) + len(self.reclaim) + len(self.restoring) != live:
            raise SimulationError("container in an unexpected state")
        for rec in self.reclaim.values():
            if rec.owner != SHARED:
                raise SimulationError("reclaim container with an owner")
        for rec in self.busy.values():
            if rec.busy_until_ms < self.now:
                raise SimulationError("busy container past its completion time")
        self.stats["max_reclaim"] = max(self.stats["max_reclaim"], len(self.reclaim))


def run(events, config, policy, seed=0, workloads=DEFAULT_WORKLOADS, window_ms=1_200_000):
    """Simulate ``events`` to quiescence and summarize.

    ``seed`` is carried into the report; the engine itself draws no random
    numbers, so identical inputs give identical reports.
    """
    from .report import summarize

    result = Engine(config, policy, workloads).run(events)
    return summarize(result.outcomes, result.queue_log, result.end_ms, window_ms=window_ms,
                     start_ms=result.start_ms, seed=seed)
