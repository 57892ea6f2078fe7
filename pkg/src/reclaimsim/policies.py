"""Eviction-victim selection.

The ``*_select`` functions are pure; the policy classes wrap them with the
little per-run state some of them need (the GDSF inflation clock, the loaded
model) and tell the engine what extra context to provide.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels

SHARED = -1
POLICY_NAMES = ("lru", "lfu", "gdsf", "belady", "learned")


class PolicyError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class EvictionCandidate:
    container_id: int
    workload_id: int
    last_used_seq: int
    last_used_t_ms: int
    frequency: int
    memory_mb: int
    cold_start_ms: int
    owner: int = SHARED
    gdsf_base: float = None  # inflation clock when last touched; None -> current clock


@dataclass(frozen=True)
class OracleContext:
    future_workloads: np.ndarray
    future_tenants: np.ndarray
    current_seq: int
    window: int = 30


def _require(candidates):
    if not candidates:
        raise PolicyError("empty candidate set")


def _lru_key(c):
    return (c.last_used_t_ms, c.container_id)


def lru_select(candidates):
    _require(candidates)
    return min(candidates, key=_lru_key).container_id


def lfu_select(candidates):
    _require(candidates)
    return min(candidates, key=lambda c: (c.frequency, c.last_used_t_ms, c.container_id)).container_id


def gdsf_priority(c, clock):
    base = clock if c.gdsf_base is None else c.gdsf_base
    return base + c.frequency * c.cold_start_ms / c.memory_mb


def gdsf_select(candidates, clock):
    """Greedy-dual-size-frequency: cost = cold start, size = memory."""
    _require(candidates)
    best = min(candidates, key=lambda c: (gdsf_priority(c, clock), c.container_id))
    return best.container_id, max(clock, gdsf_priority(best, clock))


def copy_ranks(candidates):
    """Rank of each candidate among idle copies that can serve the same requests.

    Requests pick the most recently used copy first, so that copy gets rank 0.
    """
    groups = {}
    for i, c in enumerate(candidates):
        groups.setdefault((c.workload_id, c.owner), []).append(i)
    ranks = [0] * len(candidates)
    for members in groups.values():
        members.sort(key=lambda i: (-candidates[i].last_used_t_ms, candidates[i].container_id))
        for r, i in enumerate(members):
            ranks[i] = r
    return ranks


def reuse_distances(candidates, ctx):
    return kernels.next_use(
        ctx.future_workloads, ctx.future_tenants,
        [c.workload_id for c in candidates], [c.owner for c in candidates], ctx.window,
        copy_ranks(candidates))


def belady_select(candidates, ctx):
    """Evict the candidate whose next usable request is furthest away."""
    _require(candidates)
    dist = reuse_distances(candidates, ctx)
    order = sorted(range(len(candidates)),
                   key=lambda i: (-int(dist[i]), _lru_key(candidates[i])))
    return candidates[order[0]].container_id


def learned_select(candidates, scores):
    _require(candidates)
    if len(scores) != len(candidates):
        raise PolicyError(f"{len(scores)} scores for {len(candidates)} candidates")
    best = max(range(len(candidates)), key=lambda i: (scores[i], -candidates[i].container_id))
    return candidates[best].container_id


# ---------------------------------------------------------------- policy objects

class Policy:
    name = "base"
    needs_future = False
    needs_features = False
    reclaim_only = False

    def touch(self):
        """Value stored on a container each time it is served or restored."""
        return None

    def select(self, candidates, decision):
        raise NotImplementedError


class LRUPolicy(Policy):
    name = "lru"

    def select(self, candidates, decision):
        return lru_select(candidates)


class LFUPolicy(Policy):
    name = "lfu"

    def select(self, candidates, decision):
        return lfu_select(candidates)


class GDSFPolicy(Policy):
    name = "gdsf"

    def __init__(self):
        self.clock = 0.0

    def touch(self):
        return self.clock

    def select(self, candidates, decision):
        victim, clock = gdsf_select(candidates, self.clock)
        assert clock >= self.clock
        self.clock = clock
        return victim


class BeladyPolicy(Policy):
    name = "belady"
    needs_future = True

    def __init__(self, window=30):
        if window < 1:
            raise PolicyError("belady window must be >= 1")
        self.window = window

    def select(self, candidates, decision):
        return belady_select(candidates, decision.oracle(self.window))


class LearnedPolicy(Policy):
    """Scores every candidate with the eviction model; highest probability goes."""

    name = "learned"
    needs_features = True
    reclaim_only = True

    def __init__(self, model, n_workloads):
        if model is None:
            raise PolicyError("learned policy needs a loaded model")
        self.model = model
        self.n_workloads = n_workloads

    def select(self, candidates, decision):
        from . import features, learn

        if len(candidates) == 1:
            return candidates[0].container_id
        x = features.encode_batch(*decision.state_vectors(), self.n_workloads)
        return learned_select(candidates, learn.forward(self.model, x))


def make_policy(name, *, window=30, model=None, n_workloads=8):
    name = name.lower()
    if name == "lru":
        return LRUPolicy()
    if name == "lfu":
        return LFUPolicy()
    if name == "gdsf":
        return GDSFPolicy()
    if name == "belady":
        return BeladyPolicy(window)
    if name == "learned":
        return LearnedPolicy(model, n_workloads)
    raise PolicyError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")
