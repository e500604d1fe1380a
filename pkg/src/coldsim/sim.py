"""Deterministic trace-driven simulation of routing, workers, and tier caches.

A run processes requests in timestamp order (ties keep trace order). Each
request is routed to a worker in its function's locality group, classified
against that worker's caches, charged the modeled initialization latency,
and executed FIFO on the worker. Handler-cache insertion happens at request
completion; keep-alive expiry is evaluated lazily when a worker is next
touched. Identical inputs always produce identical results.

``simple_lru_hit_rate`` and ``sweep_cache_sizes`` implement the simplified
evaluation model: a single global LRU keyed by function id, bypassing
workers and groups entirely.
"""

from __future__ import annotations

import json
import math
import statistics
from collections import OrderedDict, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Mapping, Sequence

from .caches import (
    HandlerCache,
    ImportCacheTree,
    InstallCache,
    LatencyBreakdown,
    LatencyModel,
    Tier,
    classify_request,
    init_latency,
)
from .locality import Partition
from .traces import FunctionProfile, RequestRecord, Trace

DEFAULT_FOOTPRINT_BYTES = 256 * 1024 * 1024  # uniform per-instance footprint
DEFAULT_PACKAGE_SIZE_BYTES = 10 * 1024 * 1024

PER_REQUEST_CSV_HEADER = (
    "timestamp_ms,function_id,worker_id,tier,load_ms,download_ms,"
    "install_ms,import_ms,create_ms,exec_ms,shutdown_ms,total_ms"
)


class RoutingPolicy(str, Enum):
    LEAST_LOADED = "LeastLoaded"
    HANDLER_AFFINITY = "HandlerAffinity"


@dataclass
class SimConfig:
    """Per-worker cache sizing, keep-alive policy, and routing choice.

    ``keep_alive_ms=None`` disables handler expiry entirely (pure capacity
    LRU); ``import_max_nodes=0`` disables the import tier so new instances
    pay full sandbox creation.
    """

    partition: Partition
    handler_capacity_bytes: int = 4 * DEFAULT_FOOTPRINT_BYTES
    install_capacity_bytes: int = 8 * 1024 * 1024 * 1024
    import_max_nodes: int = 64
    keep_alive_ms: int | None = 600_000
    latency_model: LatencyModel = field(default_factory=LatencyModel)
    routing_policy: RoutingPolicy = RoutingPolicy.HANDLER_AFFINITY
    seed: int = 0
    footprint_bytes: int = DEFAULT_FOOTPRINT_BYTES
    footprint_overrides: Mapping[str, int] = field(default_factory=dict)
    package_size_bytes: int = DEFAULT_PACKAGE_SIZE_BYTES

    def __post_init__(self) -> None:
        if self.keep_alive_ms is not None and self.keep_alive_ms < 0:
            raise ValueError("keep_alive_ms must be >= 0")
        if self.import_max_nodes < 0:
            raise ValueError("import_max_nodes must be >= 0")
        if self.footprint_bytes > self.handler_capacity_bytes:
            raise ValueError("footprint_bytes exceeds handler capacity")
        if isinstance(self.routing_policy, str):
            self.routing_policy = RoutingPolicy(self.routing_policy)


class Worker:
    """One simulated worker: private tier caches plus a FIFO request queue."""

    def __init__(self, worker_id: int, group_id: int, config: SimConfig):
        self.worker_id = worker_id
        self.group_id = group_id
        self.handler = HandlerCache(config.handler_capacity_bytes)
        self.install = InstallCache(config.install_capacity_bytes)
        self.imports = (
            ImportCacheTree(config.import_max_nodes) if config.import_max_nodes else None
        )
        self.busy_until_ms = 0
        self._inflight: deque[tuple[int, int]] = deque()  # (start, completion)
        self._completed_at: dict[str, int] = {}

    def queue_len(self, now_ms: int) -> int:
        """Requests assigned but not yet started at ``now_ms``."""
        while self._inflight and self._inflight[0][1] <= now_ms:
            self._inflight.popleft()
        return sum(1 for start, _ in self._inflight if start > now_ms)

    def holds_alive(self, function_id: str, now_ms: int, keep_alive_ms: int | None) -> bool:
        if function_id not in self.handler:
            return False
        if keep_alive_ms is None:
            return True
        return now_ms - self._completed_at[function_id] <= keep_alive_ms

    def expire_handler(self, now_ms: int, keep_alive_ms: int | None) -> None:
        if keep_alive_ms is None:
            return
        for function_id, done in list(self._completed_at.items()):
            if now_ms - done > keep_alive_ms:
                self.handler.remove(function_id)
                del self._completed_at[function_id]

    def begin(self, start_ms: int, completion_ms: int) -> None:
        self._inflight.append((start_ms, completion_ms))
        self.busy_until_ms = completion_ms

    def note_completion(self, function_id: str, footprint_bytes: int, completion_ms: int) -> None:
        for victim in self.handler.insert(function_id, footprint_bytes):
            self._completed_at.pop(victim, None)
        self._completed_at[function_id] = completion_ms


@dataclass(frozen=True)
class RequestOutcome:
    timestamp_ms: int
    function_id: str
    worker_id: int
    tier: Tier
    breakdown: LatencyBreakdown
    exec_ms: int
    shutdown_ms: int
    start_ms: int
    completion_ms: int
    total_ms: int


@dataclass(frozen=True)
class SimResult:
    """Per-request outcomes plus aggregates recomputable from them."""

    outcomes: tuple[RequestOutcome, ...]
    tier_counts: dict[str, int]
    hit_rate_by_tier: dict[str, float]
    mean_init_ms: float | None
    median_init_ms: float | None
    p99_init_ms: float | None
    cold_start_fraction: float

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[RequestOutcome]) -> "SimResult":
        outcomes = tuple(outcomes)
        counts = {tier.value: 0 for tier in Tier}
        for o in outcomes:
            counts[o.tier.value] += 1
        n = len(outcomes)
        if n == 0:
            return cls(outcomes, counts, {t: 0.0 for t in counts}, None, None, None, 0.0)
        rates = {t: c / n for t, c in counts.items()}
        init = sorted(o.breakdown.total_ms for o in outcomes)
        p99 = float(init[max(0, math.ceil(0.99 * n) - 1)])
        cold = 1.0 - rates[Tier.HANDLER_HIT.value]
        return cls(
            outcomes,
            counts,
            rates,
            sum(init) / n,
            float(statistics.median(init)),
            p99,
            cold,
        )

    @property
    def requests(self) -> int:
        return len(self.outcomes)

    def to_json(self) -> str:
        payload = {
            "requests": self.requests,
            "tier_counts": self.tier_counts,
            "hit_rate_by_tier": self.hit_rate_by_tier,
            "mean_init_ms": self.mean_init_ms,
            "median_init_ms": self.median_init_ms,
            "p99_init_ms": self.p99_init_ms,
            "cold_start_fraction": self.cold_start_fraction,
        }
        return json.dumps(payload, sort_keys=True)


def write_per_request_csv(result: SimResult, stream: IO[str]) -> None:
    stream.write(PER_REQUEST_CSV_HEADER + "\n")
    for o in result.outcomes:
        b = o.breakdown
        stream.write(
            f"{o.timestamp_ms},{o.function_id},{o.worker_id},{o.tier.value},"
            f"{b.load_ms},{b.download_ms},{b.install_ms},{b.import_ms},"
            f"{b.create_ms},{o.exec_ms},{o.shutdown_ms},{o.total_ms}\n"
        )


def _select_worker(
    candidates: Sequence[Worker],
    function_id: str,
    now_ms: int,
    policy: RoutingPolicy,
    keep_alive_ms: int | None,
) -> Worker:
    if policy is RoutingPolicy.HANDLER_AFFINITY:
        held = [w for w in candidates if w.holds_alive(function_id, now_ms, keep_alive_ms)]
        if held:
            return min(held, key=lambda w: w.worker_id)
    return min(
        candidates,
        key=lambda w: (w.queue_len(now_ms), w.busy_until_ms, w.worker_id),
    )


def route(
    request: RequestRecord,
    partition: Partition,
    workers: Sequence[Worker],
    policy: RoutingPolicy,
    keep_alive_ms: int | None = None,
) -> int:
    """Pick the worker for one request within its function's locality group.

    HandlerAffinity prefers a candidate already holding a live instance
    (lowest id wins); otherwise, and always under LeastLoaded, the shortest
    queue wins, then earliest busy_until_ms, then lowest id.
    """
    group = partition.function_to_group().get(request.function_id)
    if group is None:
        raise ValueError(f"unpartitioned function {request.function_id!r}")
    candidates = [w for w in workers if w.group_id == group]
    if not candidates:
        raise ValueError(f"no workers for group {group}")
    chosen = _select_worker(candidates, request.function_id, request.timestamp_ms, policy, keep_alive_ms)
    return chosen.worker_id


def build_workers(config: SimConfig) -> dict[int, list[Worker]]:
    """Fresh workers per group, ids assigned sequentially in group-id order."""
    by_group: dict[int, list[Worker]] = {}
    next_id = 0
    for g in sorted(config.partition.groups, key=lambda g: g.group_id):
        pool = []
        for _ in range(g.worker_count):
            pool.append(Worker(next_id, g.group_id, config))
            next_id += 1
        by_group[g.group_id] = pool
    return by_group


def run(trace: Trace, profiles: Sequence[FunctionProfile], config: SimConfig) -> SimResult:
    """Simulate the full trace; see the module docstring for event mechanics."""
    catalog: dict[str, FunctionProfile] = {}
    for p in profiles:
        if p.function_id in catalog:
            raise ValueError(f"duplicate function_id {p.function_id!r}")
        catalog[p.function_id] = p
    group_of = config.partition.function_to_group()
    for fid in sorted(trace.function_ids()):
        if fid not in catalog:
            raise ValueError(f"no profile for function {fid!r}")
        if fid not in group_of:
            raise ValueError(f"unpartitioned function {fid!r}")

    by_group = build_workers(config)
    keep_alive = config.keep_alive_ms
    model = config.latency_model
    shutdown_ms = model.shutdown_ms
    outcomes = []
    for rec in trace.records:
        profile = catalog[rec.function_id]
        candidates = by_group[group_of[rec.function_id]]
        worker = _select_worker(
            candidates, rec.function_id, rec.timestamp_ms, config.routing_policy, keep_alive
        )
        start = max(rec.timestamp_ms, worker.busy_until_ms)
        worker.expire_handler(start, keep_alive)
        probe = classify_request(profile, worker.handler, worker.install, worker.imports)
        breakdown = init_latency(probe, profile, model)
        completion = start + breakdown.total_ms + profile.exec_duration_ms
        worker.begin(start, completion)
        footprint = config.footprint_overrides.get(rec.function_id, config.footprint_bytes)
        worker.note_completion(rec.function_id, footprint, completion)
        if probe.tier is not Tier.HANDLER_HIT:
            for pkg in sorted(probe.cold):
                worker.install.insert(pkg, config.package_size_bytes)
            if worker.imports is not None and probe.forked_node_id is not None:
                worker.imports.touch(probe.forked_node_id, start)
                if profile.dependencies > worker.imports.packages(probe.forked_node_id):
                    worker.imports.insert(probe.forked_node_id, profile.dependencies, start)
        outcomes.append(
            RequestOutcome(
                timestamp_ms=rec.timestamp_ms,
                function_id=rec.function_id,
                worker_id=worker.worker_id,
                tier=probe.tier,
                breakdown=breakdown,
                exec_ms=profile.exec_duration_ms,
                shutdown_ms=shutdown_ms,
                start_ms=start,
                completion_ms=completion,
                total_ms=breakdown.total_ms + profile.exec_duration_ms + shutdown_ms,
            )
        )
    return SimResult.from_outcomes(outcomes)


def simple_lru_hit_rate(trace: Trace, capacity_entries: int) -> float:
    """Hit rate of one global LRU keyed by function id, counted in entries."""
    if capacity_entries < 1:
        raise ValueError("capacity_entries must be >= 1")
    if not trace.records:
        raise ValueError("empty trace")
    cache: OrderedDict[str, None] = OrderedDict()
    hits = 0
    for rec in trace.records:
        if rec.function_id in cache:
            hits += 1
            cache.move_to_end(rec.function_id)
        else:
            cache[rec.function_id] = None
            if len(cache) > capacity_entries:
                cache.popitem(last=False)
    return hits / len(trace.records)


def sweep_cache_sizes(
    trace: Trace,
    sizes_bytes: Sequence[int],
    footprint_bytes: int = DEFAULT_FOOTPRINT_BYTES,
    max_threads: int = 1,
) -> list[tuple[int, float]]:
    """Global-LRU hit rate per cache size, entries = size // footprint.

    Sweep points are independent and may evaluate concurrently; the output
    is always sorted ascending by size.
    """
    if footprint_bytes < 1:
        raise ValueError("footprint_bytes must be >= 1")
    for size in sizes_bytes:
        if size < footprint_bytes:
            raise ValueError(f"cache size {size} smaller than footprint {footprint_bytes}")
    ordered = sorted(sizes_bytes)
    if max_threads > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=max_threads) as pool:
            rates = list(pool.map(lambda s: simple_lru_hit_rate(trace, s // footprint_bytes), ordered))
    else:
        rates = [simple_lru_hit_rate(trace, size // footprint_bytes) for size in ordered]
    return list(zip(ordered, rates))
