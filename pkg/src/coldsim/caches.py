"""Three cache tiers and the initialization-latency model.

Tier 1 (handler): paused, fully initialized instances held in memory; a hit
costs one unpause. Tier 2 (install): packages pre-installed on disk and
mapped read-only into workers; a hit skips download and install. Tier 3
(import): a tree of sleeping processes with progressively larger pre-imported
package sets; a new instance forks from the best-matching node.

Each cache instance is a single-threaded mutable state machine; drive
distinct instances from distinct threads if you need parallelism.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import AbstractSet, Mapping

from .traces import FunctionProfile


class Tier(str, Enum):
    HANDLER_HIT = "HandlerHit"
    IMPORT_HIT = "ImportHit"
    INSTALL_HIT = "InstallHit"
    MISS = "Miss"


@dataclass(frozen=True)
class LatencyModel:
    """Per-phase initialization costs in integer milliseconds.

    The defaults form the ``fig1_calibration`` preset: a single-dependency
    full miss without an import tree costs exactly 3472 ms
    (200 + 1200 + 1500 + 400 + 172), with 2 ms unpause and 6 ms shutdown.
    """

    code_load_ms: int = 200
    download_ms_per_package: int = 1200
    install_ms_per_package: int = 1500
    import_ms_per_package: int = 400
    sandbox_create_ms: int = 172
    fork_ms: int = 15
    unpause_ms: int = 2
    shutdown_ms: int = 6

    def __post_init__(self) -> None:
        for name, value in self.to_dict().items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.fork_ms > self.sandbox_create_ms:
            raise ValueError("fork_ms must not exceed sandbox_create_ms")
        if self.unpause_ms > self.fork_ms:
            raise ValueError("unpause_ms must not exceed fork_ms")

    def to_dict(self) -> dict[str, int]:
        return {
            "code_load_ms": self.code_load_ms,
            "download_ms_per_package": self.download_ms_per_package,
            "install_ms_per_package": self.install_ms_per_package,
            "import_ms_per_package": self.import_ms_per_package,
            "sandbox_create_ms": self.sandbox_create_ms,
            "fork_ms": self.fork_ms,
            "unpause_ms": self.unpause_ms,
            "shutdown_ms": self.shutdown_ms,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "LatencyModel":
        return cls(**{k: int(v) for k, v in payload.items()})

    @classmethod
    def from_json_file(cls, path) -> "LatencyModel":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    @classmethod
    def fig1_calibration(cls) -> "LatencyModel":
        return cls()


@dataclass(frozen=True)
class LatencyBreakdown:
    load_ms: int
    download_ms: int
    install_ms: int
    import_ms: int
    create_ms: int
    total_ms: int


class HandlerCache:
    """LRU over paused function instances, bounded by total footprint bytes."""

    def __init__(self, capacity_bytes: int):
        if capacity_bytes < 1:
            raise ValueError("capacity_bytes must be >= 1")
        self.capacity_bytes = capacity_bytes
        self._entries: OrderedDict[str, int] = OrderedDict()
        self._used = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, function_id: str) -> bool:
        return function_id in self._entries

    @property
    def used_bytes(self) -> int:
        return self._used

    def entries(self) -> list[tuple[str, int]]:
        """Entries in least- to most-recent order."""
        return list(self._entries.items())

    def lookup(self, function_id: str) -> bool:
        """Hit refreshes recency; contents are otherwise unchanged."""
        if function_id in self._entries:
            self._entries.move_to_end(function_id)
            return True
        return False

    def insert(self, function_id: str, footprint_bytes: int) -> list[str]:
        """Insert or refresh at most-recent; return ids evicted, oldest first."""
        if footprint_bytes < 0:
            raise ValueError("footprint_bytes must be >= 0")
        if footprint_bytes > self.capacity_bytes:
            raise ValueError("entry larger than cache")
        if function_id in self._entries:
            self._used -= self._entries.pop(function_id)
        self._entries[function_id] = footprint_bytes
        self._used += footprint_bytes
        evicted = []
        while self._used > self.capacity_bytes:
            victim, size = self._entries.popitem(last=False)
            self._used -= size
            evicted.append(victim)
        return evicted

    def remove(self, function_id: str) -> None:
        if function_id in self._entries:
            self._used -= self._entries.pop(function_id)


class InstallCache:
    """LRU over pre-installed packages, bounded by total size bytes."""

    def __init__(self, capacity_bytes: int):
        if capacity_bytes < 1:
            raise ValueError("capacity_bytes must be >= 1")
        self.capacity_bytes = capacity_bytes
        self._packages: OrderedDict[str, int] = OrderedDict()
        self._used = 0

    def __len__(self) -> int:
        return len(self._packages)

    def __contains__(self, package_id: str) -> bool:
        return package_id in self._packages

    @property
    def used_bytes(self) -> int:
        return self._used

    def lookup(self, packages: AbstractSet[str]) -> tuple[frozenset[str], frozenset[str]]:
        """Partition ``packages`` into (present, absent); hits move to most-recent."""
        hits = frozenset(p for p in packages if p in self._packages)
        for p in sorted(hits):
            self._packages.move_to_end(p)
        return hits, frozenset(packages) - hits

    def insert(self, package_id: str, size_bytes: int) -> list[str]:
        if size_bytes < 0:
            raise ValueError("size_bytes must be >= 0")
        if size_bytes > self.capacity_bytes:
            raise ValueError("entry larger than cache")
        if package_id in self._packages:
            self._used -= self._packages.pop(package_id)
        self._packages[package_id] = size_bytes
        self._used += size_bytes
        evicted = []
        while self._used > self.capacity_bytes:
            victim, size = self._packages.popitem(last=False)
            self._used -= size
            evicted.append(victim)
        return evicted


@dataclass
class _ImportNode:
    node_id: int
    packages: frozenset[str]
    parent_id: int | None
    depth: int
    last_fork_ms: int
    children: set[int]


class ImportCacheTree:
    """Tree of sleeping processes with pre-imported package sets.

    The root holds only the bare runtime (empty package set); every child
    strictly extends its parent's set. Forks must come from a node whose set
    is a subset of the request, never a superset, so a process with
    extraneous imports is never reused.
    """

    ROOT_ID = 0

    def __init__(self, max_nodes: int):
        if max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")
        self.max_nodes = max_nodes
        root = _ImportNode(self.ROOT_ID, frozenset(), None, 0, 0, set())
        self._nodes: dict[int, _ImportNode] = {self.ROOT_ID: root}
        self._next_id = 1

    def __len__(self) -> int:
        return len(self._nodes)

    def node_ids(self) -> list[int]:
        return sorted(self._nodes)

    def packages(self, node_id: int) -> frozenset[str]:
        return self._nodes[node_id].packages

    def parent(self, node_id: int) -> int | None:
        return self._nodes[node_id].parent_id

    def depth(self, node_id: int) -> int:
        return self._nodes[node_id].depth

    def last_fork_ms(self, node_id: int) -> int:
        return self._nodes[node_id].last_fork_ms

    def best_node(self, required: AbstractSet[str]) -> tuple[int, frozenset[str]]:
        """Largest node whose set fits inside ``required``; the root always fits.

        Ties prefer the deepest node, then the lowest node_id. Returns the
        node and the packages still missing from it.
        """
        required = frozenset(required)
        best = None
        for node in self._nodes.values():
            if not node.packages <= required:
                continue
            rank = (len(node.packages), node.depth, -node.node_id)
            if best is None or rank > best[0]:
                best = (rank, node)
        assert best is not None  # root always qualifies
        chosen = best[1]
        return chosen.node_id, required - chosen.packages

    def touch(self, node_id: int, now_ms: int) -> None:
        """Record a fork from ``node_id`` for eviction recency."""
        self._nodes[node_id].last_fork_ms = now_ms

    def insert(self, parent_node_id: int, package_set: AbstractSet[str], now_ms: int) -> int:
        """Add a sleeping process under ``parent_node_id``.

        The new set must strictly extend the parent's. When the node count
        exceeds the bound, leaves with the oldest fork time are evicted
        (ties broken by highest node_id); the root is never evicted.
        """
        parent = self._nodes[parent_node_id]
        package_set = frozenset(package_set)
        if not package_set > parent.packages:
            raise ValueError("import tree hierarchy violated")
        node = _ImportNode(self._next_id, package_set, parent_node_id, parent.depth + 1, now_ms, set())
        self._next_id += 1
        self._nodes[node.node_id] = node
        parent.children.add(node.node_id)
        while len(self._nodes) > self.max_nodes:
            self._evict_one_leaf()
        return node.node_id

    def _evict_one_leaf(self) -> None:
        victim = min(
            (n for n in self._nodes.values() if not n.children and n.node_id != self.ROOT_ID),
            key=lambda n: (n.last_fork_ms, -n.node_id),
        )
        del self._nodes[victim.node_id]
        self._nodes[victim.parent_id].children.discard(victim.node_id)


@dataclass(frozen=True)
class CacheLookupResult:
    """Outcome of probing the three tiers for one request.

    ``preimported``, ``preinstalled`` and ``cold`` partition the function's
    dependency set (all empty on a handler hit). ``forked_node_id`` is the
    import-tree node a new instance would fork from, or None when no tree is
    available and a sandbox must be created from scratch.
    """

    tier: Tier
    preimported: frozenset[str] = frozenset()
    preinstalled: frozenset[str] = frozenset()
    cold: frozenset[str] = frozenset()
    forked_node_id: int | None = None

    def __post_init__(self) -> None:
        if (
            self.preimported & self.preinstalled
            or self.preimported & self.cold
            or self.preinstalled & self.cold
        ):
            raise ValueError("tier package sets must be disjoint")


def classify_request(
    profile: FunctionProfile,
    handler: HandlerCache,
    install: InstallCache,
    imports: ImportCacheTree | None = None,
) -> CacheLookupResult:
    """Probe handler, then import tree, then install cache for one request.

    Lookups carry their usual recency side effects; forking the chosen
    import node (``touch``) is left to the caller, which knows the fork time.
    """
    if handler.lookup(profile.function_id):
        return CacheLookupResult(Tier.HANDLER_HIT)
    deps = profile.dependencies
    if imports is not None:
        node_id, remaining = imports.best_node(deps)
        preimported = deps - remaining
    else:
        node_id, remaining, preimported = None, deps, frozenset()
    preinstalled, cold = install.lookup(remaining)
    if preimported:
        tier = Tier.IMPORT_HIT
    elif preinstalled:
        tier = Tier.INSTALL_HIT
    else:
        tier = Tier.MISS
    return CacheLookupResult(tier, preimported, preinstalled, cold, node_id)


def init_latency(
    result: CacheLookupResult,
    profile: FunctionProfile,
    model: LatencyModel,
) -> LatencyBreakdown:
    """Initialization cost for one request given its cache-probe outcome.

    A handler hit costs one unpause. Otherwise cold packages pay download and
    install, everything not pre-imported pays import, and instance creation
    costs a fork when an import-tree node (possibly the root) is available,
    else a full sandbox creation.
    """
    del profile  # latency depends only on the probe outcome and the model
    if result.tier is Tier.HANDLER_HIT:
        return LatencyBreakdown(0, 0, 0, 0, 0, model.unpause_ms)
    download = len(result.cold) * model.download_ms_per_package
    install = len(result.cold) * model.install_ms_per_package
    imported = (len(result.cold) + len(result.preinstalled)) * model.import_ms_per_package
    create = model.fork_ms if result.forked_node_id is not None else model.sandbox_create_ms
    load = model.code_load_ms
    total = load + download + install + imported + create
    return LatencyBreakdown(load, download, install, imported, create, total)
