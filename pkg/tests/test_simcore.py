import pytest
from hypothesis import given, settings, strategies as st

from reclaimsim import trace as tr
from reclaimsim.policies import LRUPolicy, make_policy
from reclaimsim.simcore import (Engine, EventKind, OutcomeKind, PoolConfig, SimulationError,
                                ContainerState, LEGAL_TRANSITIONS, run)
from conftest import events_at

WL = (
    tr.Workload(0, "short", 1000, 100),
    tr.Workload(1, "long", 1000, 5000),
    tr.Workload(2, "other", 1000, 100),
    tr.Workload(3, "ckpt", 1000, 100, checkpoint_extra_ms=250),
)
K = OutcomeKind


def go(spec, pool="4-0", policy="lru", **kw):
    kw.setdefault("check_invariants", True)
    kw.setdefault("warm_keepalive_ms", 1000)
    kw.setdefault("reclaim_keepalive_ms", 1000)
    cfg = PoolConfig.from_shorthand(pool, **kw)
    eng = Engine(cfg, make_policy(policy), WL, record_transitions=True)
    return eng.run(events_at(spec))


def kinds(res):
    return [o.kind for o in res.outcomes]


def states_of(res, cid):
    return [(t, new) for t, c, _, new in res.transitions if c == cid]


def test_warm_hit_same_tenant():
    res = go([(0, 0, 0), (1500, 0, 0)])
    assert kinds(res) == [K.COLD_START, K.WARM_FROM_WARM_POOL]
    assert res.outcomes[1].init_ms == 0 and res.outcomes[1].container_id == 0


def test_warm_pool_is_tenant_private():
    res = go([(0, 0, 0), (1500, 1, 0)])
    assert kinds(res) == [K.COLD_START, K.COLD_START]


def test_reclaim_shared_across_tenants():
    # c0 idles at 1100, demoted at 2100, reclaimable at 2530
    res = go([(0, 0, 0), (3000, 1, 0)], pool="1-1")
    assert kinds(res) == [K.COLD_START, K.WARM_FROM_RECLAIM]
    assert states_of(res, 0)[:6] == [
        (0, "Checkpointing"), (0, "Busy"), (1100, "PausedWarm"), (2100, "Restoring"),
        (2530, "PausedReclaim"), (3000, "Busy")]


def test_buffer_when_all_busy():
    res = go([(0, 0, 0), (10, 0, 0)], pool="1-0")
    assert kinds(res) == [K.COLD_START, K.WARM_FROM_WARM_POOL]
    assert res.outcomes[1].wait_ms == 1090  # waits for cold start + exec of the first
    assert max(q for _, q in res.queue_log) == 1


def test_drop_when_all_busy():
    res = go([(0, 0, 0), (10, 0, 0)], pool="1-0", on_saturation="drop")
    assert kinds(res) == [K.COLD_START, K.DROPPED_AS_COLD]


def test_create_without_eviction():
    res = go([(0, 0, 0), (2000, 0, 2)], pool="4-0", warm_keepalive_ms=10_000)
    assert res.stats["evictions"] == 0 and kinds(res) == [K.COLD_START] * 2


def test_evicts_from_reclaim_when_both_pools_hold_containers():
    res = go([(0, 0, 0), (2000, 0, 2), (3200, 0, 1)], pool="1-1", reclaim_keepalive_ms=10_000)
    # c0 in reclaim, c1 warm at 3100 -> the arrival at 3200 removes c0
    assert (3200, "Destroyed") in states_of(res, 0)
    assert all(new != "Destroyed" or t > 3200 for t, new in states_of(res, 1))


def test_evicts_from_warm_when_reclaim_empty():
    res = go([(0, 0, 0), (2000, 0, 2)], pool="1-0", warm_keepalive_ms=10_000)
    assert (2000, "Destroyed") in states_of(res, 0)


def test_completion_sets_expiry():
    res = go([(0, 0, 0)], pool="2-0", warm_keepalive_ms=600_000)
    assert states_of(res, 0) == [(0, "Busy"), (1100, "PausedWarm"), (601_100, "Destroyed")]


def test_buffer_fifo_matches_oracle():
    # three requests against one slot: a plain FIFO queue is the oracle
    spec = [(0, 0, 0), (1, 0, 2), (2, 0, 0)]
    res = go(spec, pool="1-0")
    served = [o.event.seq for o in res.outcomes]
    assert served == [0, 1, 2]
    free_at, expected = 0, []
    for t, _, w in spec:
        start = max(t, free_at)
        expected.append(start - t)
        free_at = start + 1000 + WL[w].exec_ms
    assert [o.wait_ms for o in res.outcomes] == expected


def test_completion_before_arrival_at_same_instant():
    res = go([(0, 0, 0), (1100, 0, 0)], pool="1-0")
    assert kinds(res) == [K.COLD_START, K.WARM_FROM_WARM_POOL]
    assert res.outcomes[1].wait_ms == 0


def test_restore_takes_430ms():
    res = go([(0, 0, 0)], pool="1-1")
    st = dict((new, t) for t, new in states_of(res, 0))
    assert st["PausedReclaim"] - st["Restoring"] == 430


def test_reclaim_full_destroys_instead():
    res = go([(0, 0, 0), (1, 0, 2)], pool="2-1")
    assert [new for _, new in states_of(res, 0)][-3:] == ["Restoring", "PausedReclaim", "Destroyed"]
    assert "Restoring" not in [new for _, new in states_of(res, 1)]


def test_arrival_during_restore_is_cold():
    res = go([(0, 0, 0), (2200, 0, 0)], pool="2-1")
    assert kinds(res) == [K.COLD_START, K.COLD_START]
    assert res.outcomes[1].container_id == 1


def test_vanilla_expiry_destroys():
    res = go([(0, 0, 0)], pool="32-0", warm_keepalive_ms=600_000)
    assert states_of(res, 0)[-1] == (601_100, "Destroyed")


def test_stale_timer_ignored_after_reuse():
    res = go([(0, 0, 0), (1100 + 299_000, 0, 0)], pool="2-0", warm_keepalive_ms=300_000)
    assert kinds(res)[1] is K.WARM_FROM_WARM_POOL
    assert states_of(res, 0)[-1] == (300_200 + 300_000, "Destroyed")


def test_reclaim_cycle_repeats():
    res = go([(0, 0, 0), (3000, 1, 0)], pool="1-1")
    seq = [new for _, new in states_of(res, 0)]
    assert seq.count("Restoring") == 2 and seq[-1] == "Destroyed"


def test_restoring_only_slots_saturate_then_drain():
    # c0 restores over [2100, 2530) while c1 is busy: the third arrival must wait
    res = go([(0, 0, 0), (2050, 0, 1), (2200, 0, 2)], pool="1-1")
    assert kinds(res) == [K.COLD_START] * 3
    assert res.outcomes[2].wait_ms == 330


def test_checkpoint_charged_once_with_reclaim():
    res = go([(0, 0, 3), (10, 0, 3)], pool="3-1")
    assert [o.init_ms for o in res.outcomes] == [1250, 1000]
    res = go([(0, 0, 3)], pool="4-0")
    assert res.outcomes[0].init_ms == 1000


def test_eviction_cost_added_to_wait():
    res = go([(0, 0, 0), (2000, 0, 2)], pool="1-0", warm_keepalive_ms=10_000,
             eviction_decision_cost_ms=38.63)
    assert res.outcomes[1].wait_ms == pytest.approx(38.63)


def test_run_empty():
    rep = run([], PoolConfig(), LRUPolicy())
    assert rep.total_requests == 0 and rep.warm_rate_pct == 0


def test_run_single():
    rep = run(events_at([(0, 0, 0)]), PoolConfig(), LRUPolicy(), workloads=WL)
    assert rep.cold_starts == 1 and rep.warm_rate_pct == 0


def test_run_two_identical_requests():
    rep = run(events_at([(0, 0, 0), (1000, 0, 0)]), PoolConfig(), LRUPolicy(),
              workloads=(tr.Workload(0, "w", 500, 100),))
    assert (rep.cold_starts, rep.warm_from_warm, rep.warm_rate_pct) == (1, 1, 50.0)


def test_kind_priority():
    assert (EventKind.COMPLETION < EventKind.RESTORE_DONE < EventKind.WARM_EXPIRY
            < EventKind.RECLAIM_EXPIRY < EventKind.ARRIVAL)


def test_illegal_transition_table():
    S = ContainerState
    assert S.BUSY not in LEGAL_TRANSITIONS[S.RESTORING]
    assert LEGAL_TRANSITIONS[S.PAUSED_WARM] == {S.BUSY, S.RESTORING, S.DESTROYED}


def test_non_increasing_arrivals_rejected():
    evs = [tr.InvocationEvent(5, 0, 0, 0, 0), tr.InvocationEvent(5, 0, 0, 1, 1)]
    with pytest.raises(SimulationError):
        Engine(PoolConfig(), LRUPolicy(), WL).run(evs)


def test_complete_non_busy_is_fatal():
    eng = Engine(PoolConfig(), LRUPolicy(), WL)
    eng.run(events_at([(0, 0, 0)]))
    with pytest.raises(SimulationError):
        eng.complete(0, 5)


def test_pool_shorthand():
    cfg = PoolConfig.from_shorthand("24-8")
    assert (cfg.max_containers, cfg.reclaim_capacity, cfg.reclaim_enabled, cfg.warm_limit) == \
        (32, 8, True, 24)
    assert not PoolConfig.from_shorthand("32-0").reclaim_enabled
    with pytest.raises(ValueError):
        PoolConfig.from_shorthand("abc")
    with pytest.raises(ValueError):
        PoolConfig(max_containers=2, reclaim_capacity=3)


arrivals = st.lists(st.tuples(st.integers(0, 3000), st.integers(0, 2), st.integers(0, 3)),
                    min_size=1, max_size=40)


@settings(max_examples=150, deadline=None)
@given(arrivals, st.sampled_from(["1-0", "2-0", "2-1", "3-2", "1-2", "4-4"]),
       st.sampled_from(["lru", "lfu", "gdsf", "belady"]), st.sampled_from(["buffer", "drop"]),
       st.integers(0, 3000))
def test_engine_invariants_random(spec, pool, policy, sat, ka):
    spec = [(t * 7, ten, w) for t, ten, w in spec]
    res = go(spec, pool=pool, policy=policy, on_saturation=sat, warm_keepalive_ms=ka,
             reclaim_keepalive_ms=ka)
    assert len(res.outcomes) == len(spec)
    served = [o.event.seq for o in res.outcomes if o.kind is not K.DROPPED_AS_COLD]
    assert served == sorted(served)
    for o in res.outcomes:
        assert o.response_ms >= o.exec_ms
        assert (o.init_ms > 0) == (o.kind is K.COLD_START)
    assert res.stats["max_live"] <= PoolConfig.from_shorthand(pool).max_containers
    again = go(spec, pool=pool, policy=policy, on_saturation=sat, warm_keepalive_ms=ka,
               reclaim_keepalive_ms=ka)
    assert again.outcomes == res.outcomes and again.transitions == res.transitions
    # every recorded transition is legal
    for _, _, old, new in res.transitions:
        assert ContainerState(new) in LEGAL_TRANSITIONS[ContainerState(old)]
