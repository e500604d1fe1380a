import io
import random

import pytest

from coldsim.locality import LocalityGroup, Partition, partition_round_robin
from coldsim.sim import (
    PER_REQUEST_CSV_HEADER,
    RoutingPolicy,
    SimConfig,
    build_workers,
    route,
    run,
    simple_lru_hit_rate,
    sweep_cache_sizes,
    write_per_request_csv,
)
from coldsim.caches import Tier
from coldsim.traces import FunctionProfile, RequestRecord, Trace

from reference import reference_lru_hit_rate, reference_lru_hits

GIB = 1024**3
MIB = 1024**2


def make_profile(fid, deps=(), runtime="python", exec_ms=63):
    return FunctionProfile(fid, runtime, frozenset(deps), 100, exec_ms)


def make_trace(*stamped_ids):
    return Trace(tuple(RequestRecord(ts, fid) for ts, fid in stamped_ids))


def single_worker_setup(deps=("x",), exec_ms=63, **config_overrides):
    prof = make_profile("fn", deps, exec_ms=exec_ms)
    partition = partition_round_robin([prof], 1, 1, {"fn": 1})
    config = SimConfig(partition=partition, **config_overrides)
    return prof, config


def test_second_request_within_keep_alive_is_handler_hit():
    prof, config = single_worker_setup()
    trace = make_trace((0, "fn"), (5000, "fn"))
    result = run(trace, [prof], config)
    assert [o.tier for o in result.outcomes] == [Tier.MISS, Tier.HANDLER_HIT]


def test_expired_handler_falls_back_to_import_tree():
    prof, config = single_worker_setup(keep_alive_ms=1000)
    trace = make_trace((0, "fn"), (2_000_000, "fn"))
    result = run(trace, [prof], config)
    assert [o.tier for o in result.outcomes] == [Tier.MISS, Tier.IMPORT_HIT]
    # everything pre-imported: code load plus a fork
    assert result.outcomes[1].breakdown.total_ms == 215


def test_zero_keep_alive_only_hits_at_the_completion_instant():
    prof, config = single_worker_setup(keep_alive_ms=0)
    # first request: init 3315 (load 200 + 1×(1200+1500+400) + fork 15), exec 63
    trace = make_trace((0, "fn"), (3378, "fn"), (3444, "fn"))
    result = run(trace, [prof], config)
    assert [o.tier for o in result.outcomes] == [
        Tier.MISS,
        Tier.HANDLER_HIT,
        Tier.IMPORT_HIT,
    ]


def test_infinite_keep_alive_reduces_to_capacity_lru():
    rnd = random.Random(17)
    ids = [f"f{i}" for i in range(6)]
    profiles = [make_profile(f, deps=(), exec_ms=0) for f in ids]
    partition = partition_round_robin(profiles, 1, 1, {})
    config = SimConfig(
        partition=partition,
        keep_alive_ms=None,
        footprint_bytes=1,
        handler_capacity_bytes=3,
        routing_policy=RoutingPolicy.LEAST_LOADED,
    )
    sequence = [rnd.choice(ids) for _ in range(600)]
    trace = Trace(tuple(RequestRecord(i, f) for i, f in enumerate(sequence)))
    result = run(trace, profiles, config)
    expected = reference_lru_hits(sequence, 3)
    assert [o.tier is Tier.HANDLER_HIT for o in result.outcomes] == expected


def test_empty_trace_yields_empty_result():
    prof, config = single_worker_setup()
    result = run(Trace(()), [prof], config)
    assert result.requests == 0
    assert result.mean_init_ms is None
    assert result.median_init_ms is None
    assert result.p99_init_ms is None
    assert result.cold_start_fraction == 0.0
    assert set(result.hit_rate_by_tier.values()) == {0.0}


def busy_scenario(seed=23, policy=RoutingPolicy.HANDLER_AFFINITY):
    rnd = random.Random(seed)
    runtimes = ["python", "nodejs"]
    profiles = [
        make_profile(f"fn{i}", deps=rnd.sample("abcdefg", rnd.randint(0, 3)),
                     runtime=runtimes[i % 2], exec_ms=rnd.choice([10, 50, 200]))
        for i in range(8)
    ]
    popularity = {p.function_id: rnd.randint(1, 50) for p in profiles}
    partition = partition_round_robin(profiles, 2, 6, popularity)
    stamps = sorted(rnd.randint(0, 4000) for _ in range(300))
    records = tuple(
        RequestRecord(ts, rnd.choice(profiles).function_id) for ts in stamps
    )
    config = SimConfig(partition=partition, routing_policy=policy, keep_alive_ms=2000,
                       handler_capacity_bytes=2 * 256 * MIB, import_max_nodes=8)
    return Trace(records), profiles, config


def test_run_is_deterministic():
    trace, profiles, config = busy_scenario()
    first = run(trace, profiles, config)
    second = run(trace, profiles, busy_scenario()[2])
    assert first.to_json() == second.to_json()
    out1, out2 = io.StringIO(), io.StringIO()
    write_per_request_csv(first, out1)
    write_per_request_csv(second, out2)
    assert out1.getvalue() == out2.getvalue()


def test_tier_counts_and_rates_conserve():
    trace, profiles, config = busy_scenario(seed=31)
    result = run(trace, profiles, config)
    assert sum(result.tier_counts.values()) == len(trace)
    assert sum(result.hit_rate_by_tier.values()) == pytest.approx(1.0, abs=1e-12)
    assert result.cold_start_fraction == pytest.approx(
        1.0 - result.hit_rate_by_tier[Tier.HANDLER_HIT.value], abs=1e-12
    )


def test_same_worker_requests_never_overlap():
    for policy in (RoutingPolicy.HANDLER_AFFINITY, RoutingPolicy.LEAST_LOADED):
        trace, profiles, config = busy_scenario(seed=47, policy=policy)
        result = run(trace, profiles, config)
        by_worker = {}
        for o in result.outcomes:
            by_worker.setdefault(o.worker_id, []).append(o)
        for outcomes in by_worker.values():
            ordered = sorted(outcomes, key=lambda o: o.start_ms)
            for before, after in zip(ordered, ordered[1:]):
                assert before.completion_ms <= after.start_ms


def test_affinity_reuses_the_holding_worker():
    prof = make_profile("fn", deps=("x",))
    partition = Partition((LocalityGroup(0, "python", frozenset({"fn"}), 2),), 2)
    trace = make_trace((0, "fn"), (10_000, "fn"))
    affinity = run(trace, [prof], SimConfig(partition=partition))
    assert [o.worker_id for o in affinity.outcomes] == [0, 0]
    assert affinity.outcomes[1].tier is Tier.HANDLER_HIT
    least_loaded = run(
        trace, [prof],
        SimConfig(partition=partition, routing_policy=RoutingPolicy.LEAST_LOADED),
    )
    # the idle twin has an earlier busy_until, so the repeat lands cold
    assert [o.worker_id for o in least_loaded.outcomes] == [0, 1]
    assert least_loaded.outcomes[1].tier is not Tier.HANDLER_HIT


def test_run_validates_profiles_and_partition():
    prof, config = single_worker_setup()
    with pytest.raises(ValueError, match="no profile for function 'ghost'"):
        run(make_trace((0, "ghost")), [prof], config)
    other = make_profile("ghost")
    with pytest.raises(ValueError, match="unpartitioned function 'ghost'"):
        run(make_trace((0, "ghost")), [prof, other], config)


# --- routing ------------------------------------------------------------------


def router_fixture():
    groups = (
        LocalityGroup(0, "python", frozenset({"fn", "other"}), 3),
        LocalityGroup(1, "python", frozenset({"foreign"}), 1),
    )
    partition = Partition(groups, 4)
    config = SimConfig(partition=partition)
    workers = [w for pool in build_workers(config).values() for w in pool]
    return partition, workers


def test_route_single_candidate_group():
    partition, workers = router_fixture()
    assert route(RequestRecord(0, "foreign"), partition, workers, RoutingPolicy.LEAST_LOADED) == 3


def test_route_affinity_beats_idleness():
    partition, workers = router_fixture()
    workers[2].note_completion("fn", 1, completion_ms=0)
    chosen = route(
        RequestRecord(10, "fn"), partition, workers, RoutingPolicy.HANDLER_AFFINITY
    )
    assert chosen == 2
    assert (
        route(RequestRecord(10, "fn"), partition, workers, RoutingPolicy.LEAST_LOADED)
        == 0
    )


def test_route_least_loaded_prefers_shortest_queue():
    partition, workers = router_fixture()
    workers[0].begin(200, 300)
    workers[0].begin(300, 400)
    workers[2].begin(150, 250)
    chosen = route(RequestRecord(100, "fn"), partition, workers, RoutingPolicy.LEAST_LOADED)
    assert chosen == 1


def test_route_unpartitioned_function():
    partition, workers = router_fixture()
    with pytest.raises(ValueError, match="unpartitioned function 'nope'"):
        route(RequestRecord(0, "nope"), partition, workers, RoutingPolicy.LEAST_LOADED)


# --- global LRU and the cache-size sweep ----------------------------------------


def test_simple_lru_examples():
    assert simple_lru_hit_rate(make_trace((0, "A"), (1, "A"), (2, "A")), 1) == pytest.approx(2 / 3)
    thrash = make_trace(*((i, f) for i, f in enumerate("ABCABC")))
    assert simple_lru_hit_rate(thrash, 2) == 0.0


def test_simple_lru_errors():
    with pytest.raises(ValueError, match="empty trace"):
        simple_lru_hit_rate(Trace(()), 1)
    with pytest.raises(ValueError, match="capacity_entries"):
        simple_lru_hit_rate(make_trace((0, "A")), 0)


def test_simple_lru_matches_reference_oracle():
    rnd = random.Random(8)
    for _ in range(30):
        sequence = [f"f{rnd.randint(0, 49)}" for _ in range(1000)]
        trace = Trace(tuple(RequestRecord(i, f) for i, f in enumerate(sequence)))
        for capacity in range(1, 11):
            assert simple_lru_hit_rate(trace, capacity) == reference_lru_hit_rate(
                sequence, capacity
            )


def test_reference_lru_inclusion_property():
    rnd = random.Random(12)
    sequence = [f"f{rnd.randint(0, 19)}" for _ in range(800)]
    for capacity in range(1, 8):
        small = reference_lru_hits(sequence, capacity)
        big = reference_lru_hits(sequence, capacity + 1)
        assert all(b or not s for s, b in zip(small, big))


def test_sweep_capacity_is_size_over_footprint():
    trace = make_trace(*((i, f"f{i % 7}") for i in range(200)))
    rows = sweep_cache_sizes(trace, [GIB], footprint_bytes=256 * MIB)
    assert rows == [(GIB, simple_lru_hit_rate(trace, 4))]


def test_sweep_sorts_sizes_and_is_monotone():
    rnd = random.Random(44)
    sequence = [f"f{rnd.randint(0, 29)}" for _ in range(2000)]
    trace = Trace(tuple(RequestRecord(i, f) for i, f in enumerate(sequence)))
    sizes = [4 * GIB, GIB, 2 * GIB, 256 * MIB]
    rows = sweep_cache_sizes(trace, sizes)
    assert [size for size, _ in rows] == sorted(sizes)
    rates = [rate for _, rate in rows]
    assert rates == sorted(rates)


def test_sweep_rejects_sizes_below_footprint():
    trace = make_trace((0, "A"))
    with pytest.raises(ValueError, match="smaller than footprint"):
        sweep_cache_sizes(trace, [100 * MIB], footprint_bytes=256 * MIB)


def test_sweep_threaded_matches_serial():
    rnd = random.Random(3)
    sequence = [f"f{rnd.randint(0, 19)}" for _ in range(1500)]
    trace = Trace(tuple(RequestRecord(i, f) for i, f in enumerate(sequence)))
    sizes = [256 * MIB, GIB, 2 * GIB]
    assert sweep_cache_sizes(trace, sizes, max_threads=4) == sweep_cache_sizes(trace, sizes)


def test_per_request_csv_shape():
    prof, config = single_worker_setup()
    result = run(make_trace((0, "fn"), (100, "fn")), [prof], config)
    buffer = io.StringIO()
    write_per_request_csv(result, buffer)
    lines = buffer.getvalue().splitlines()
    assert lines[0] == PER_REQUEST_CSV_HEADER
    assert len(lines) == 3
    assert all(len(line.split(",")) == 12 for line in lines)
