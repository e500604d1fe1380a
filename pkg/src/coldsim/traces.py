"""Workload traces: normalized CSV ingestion, synthetic generation, and
popularity-skew analysis.

The ingestion boundary is a normalized CSV (``timestamp_ms,function_id``);
converting platform-native trace archives into this format is left to
external tooling. All operations here are pure and a ``Trace`` is immutable
after construction, so values can be shared freely across threads.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

TRACE_HEADER = "timestamp_ms,function_id"
PROFILE_HEADER = "function_id,runtime,code_size_kb,exec_duration_ms,dependencies"

DEFAULT_THRESHOLD_TARGETS = (0.5, 0.8)


class TraceParseError(ValueError):
    """Malformed normalized trace or profile CSV."""


class RequestRecord(NamedTuple):
    timestamp_ms: int
    function_id: str


@dataclass(frozen=True)
class Trace:
    """Time-ordered sequence of invocation events."""

    records: tuple[RequestRecord, ...]
    source_label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        prev = 0
        for rec in self.records:
            if rec.timestamp_ms < 0:
                raise ValueError("timestamp_ms must be >= 0")
            if rec.timestamp_ms < prev:
                raise ValueError("trace records must be sorted by timestamp_ms")
            if not rec.function_id:
                raise ValueError("function_id must be non-empty")
            prev = rec.timestamp_ms

    def __len__(self) -> int:
        return len(self.records)

    def function_ids(self) -> set[str]:
        return {rec.function_id for rec in self.records}


@dataclass(frozen=True)
class FunctionProfile:
    """Static per-function metadata: runtime tag, dependency set, sizes."""

    function_id: str
    runtime: str = "python"
    dependencies: frozenset[str] = frozenset()
    code_size_kb: int = 0
    exec_duration_ms: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "dependencies", frozenset(self.dependencies))
        if not self.function_id:
            raise ValueError("function_id must be non-empty")
        if not self.runtime:
            raise ValueError("runtime must be non-empty")
        if self.code_size_kb < 0 or self.exec_duration_ms < 0:
            raise ValueError("code_size_kb and exec_duration_ms must be >= 0")


@dataclass(frozen=True)
class SyntheticTraceSpec:
    """Parameters for the seeded Zipf trace generator."""

    num_functions: int
    num_requests: int
    zipf_exponent: float
    duration_ms: int
    seed: int

    def __post_init__(self) -> None:
        if self.num_functions < 1:
            raise ValueError("num_functions must be >= 1")
        if self.num_requests < 1:
            raise ValueError("num_requests must be >= 1")
        if self.zipf_exponent < 0:
            raise ValueError("zipf_exponent must be >= 0")
        if self.duration_ms < 1:
            raise ValueError("duration_ms must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass(frozen=True)
class SkewSummary:
    """Popularity CDF over rank-ordered functions plus coverage thresholds.

    ``cdf_points[i]`` is (fraction of functions, fraction of requests) after
    the i+1 most-invoked functions. ``thresholds[t]`` is the smallest
    function fraction whose cumulative request fraction reaches ``t``.
    """

    cdf_points: tuple[tuple[float, float], ...]
    thresholds: dict[float, float] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "cdf": [[f, r] for f, r in self.cdf_points],
            "thresholds": {str(t): v for t, v in sorted(self.thresholds.items())},
        }
        return json.dumps(payload, sort_keys=True)


def parse_trace(stream: IO[str] | Iterable[str], label: str = "") -> Trace:
    """Parse a normalized trace CSV into a Trace sorted stably by timestamp.

    Raises TraceParseError naming the offending line for malformed rows.
    A header-only input yields a valid empty Trace.
    """
    lines = iter(stream)
    header = next(lines, None)
    if header is None:
        raise TraceParseError("line 1: missing header")
    if header.strip() != TRACE_HEADER:
        raise TraceParseError(f"line 1: expected header {TRACE_HEADER!r}")
    records = []
    for lineno, line in enumerate(lines, start=2):
        row = line.rstrip("\r\n")
        parts = row.split(",")
        if len(parts) != 2:
            raise TraceParseError(f"line {lineno}: expected 2 columns, got {len(parts)}")
        ts_text, function_id = parts
        try:
            ts = int(ts_text)
        except ValueError:
            raise TraceParseError(f"line {lineno}: timestamp_ms is not an integer: {ts_text!r}") from None
        if ts < 0:
            raise TraceParseError(f"line {lineno}: timestamp_ms must be >= 0")
        if not function_id:
            raise TraceParseError(f"line {lineno}: empty function_id")
        records.append(RequestRecord(ts, function_id))
    records.sort(key=lambda rec: rec.timestamp_ms)  # stable: ties keep file order
    return Trace(tuple(records), label)


def load_trace(path) -> Trace:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_trace(handle, label=str(path))


def write_trace(trace: Trace, stream: IO[str]) -> None:
    stream.write(TRACE_HEADER + "\n")
    for rec in trace.records:
        stream.write(f"{rec.timestamp_ms},{rec.function_id}\n")


def save_trace(trace: Trace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        write_trace(trace, handle)


def zipf_mass(n: int, exponent: float) -> np.ndarray:
    """Normalized mass table for ranks 0..n-1, p(r) proportional to (r+1)^-exponent."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if exponent < 0:
        raise ValueError("exponent must be >= 0")
    ranks = np.arange(1, n + 1, dtype=np.float64)
    weights = ranks ** (-float(exponent))
    return weights / weights.sum()


def function_name(rank: int, num_functions: int) -> str:
    width = max(4, len(str(num_functions - 1)))
    return f"f{rank:0{width}d}"


def generate_synthetic(spec: SyntheticTraceSpec) -> Trace:
    """Generate a seeded skewed trace; identical specs yield identical traces.

    Function ranks are drawn by inverse CDF over the normalized Zipf mass
    table; arrival timestamps are uniform over [0, duration_ms) and sorted.
    Rank 0 (``f0000``) is the most popular function.
    """
    rng = np.random.default_rng(spec.seed)
    cdf = np.cumsum(zipf_mass(spec.num_functions, spec.zipf_exponent))
    cdf[-1] = 1.0  # guard against cumulative rounding below 1
    ranks = np.searchsorted(cdf, rng.random(spec.num_requests), side="right")
    stamps = np.sort(rng.integers(0, spec.duration_ms, size=spec.num_requests))
    names = [function_name(r, spec.num_functions) for r in range(spec.num_functions)]
    records = tuple(
        RequestRecord(int(ts), names[rank]) for ts, rank in zip(stamps, ranks)
    )
    label = f"synthetic:n={spec.num_functions},m={spec.num_requests},s={spec.zipf_exponent},seed={spec.seed}"
    return Trace(records, label)


def request_counts(trace: Trace) -> Counter:
    """Requests per function_id."""
    return Counter(rec.function_id for rec in trace.records)


def popularity_cdf(trace: Trace, targets: Sequence[float] = DEFAULT_THRESHOLD_TARGETS) -> SkewSummary:
    """Rank functions by descending request count and accumulate the CDF.

    Ties in request count are broken by function_id ascending. Threshold
    comparisons are exact (no float accumulation error at the boundary).
    """
    if not trace.records:
        raise ValueError("empty trace")
    for t in targets:
        if not 0.0 < t <= 1.0:
            raise ValueError(f"threshold target must be in (0, 1]: {t}")
    counts = request_counts(trace)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    total = len(trace.records)
    n = len(ranked)
    pending = sorted(set(targets))
    points: list[tuple[float, float]] = []
    thresholds: dict[float, float] = {}
    cum = 0
    for i, (_, count) in enumerate(ranked):
        cum += count
        f_frac = (i + 1) / n
        points.append((f_frac, cum / total))
        # the decimal rendering of the target is what the caller meant, not
        # the nearest binary double (0.8 as a double exceeds 4/5)
        while pending and Fraction(cum, total) >= Fraction(str(pending[0])):
            thresholds[pending.pop(0)] = f_frac
    return SkewSummary(tuple(points), thresholds)


def package_name(index: int, catalog_size: int) -> str:
    width = max(4, len(str(catalog_size - 1)))
    return f"p{index:0{width}d}"


def synthesize_profiles(
    trace: Trace,
    catalog_size: int,
    deps_per_function: tuple[int, int] = (1, 5),
    package_zipf_exponent: float = 1.0,
    seed: int = 0,
    runtime: str = "python",
    code_size_kb: int = 500,
    exec_duration_ms: int = 63,
) -> list[FunctionProfile]:
    """Build one profile per distinct function in the trace.

    Public traces carry no dependency lists, so dependencies are drawn from
    a synthetic catalog: per-function dependency counts are uniform over
    ``deps_per_function`` and packages are sampled without replacement with
    Zipf-distributed popularity. Deterministic under a fixed seed.
    """
    if not trace.records:
        raise ValueError("empty trace")
    return synthesize_profiles_for_ids(
        sorted(trace.function_ids()),
        catalog_size,
        deps_per_function,
        package_zipf_exponent,
        seed,
        runtime=runtime,
        code_size_kb=code_size_kb,
        exec_duration_ms=exec_duration_ms,
    )


def synthesize_profiles_for_ids(
    function_ids: Sequence[str],
    catalog_size: int,
    deps_per_function: tuple[int, int] = (1, 5),
    package_zipf_exponent: float = 1.0,
    seed: int = 0,
    runtime: str = "python",
    code_size_kb: int = 500,
    exec_duration_ms: int = 63,
) -> list[FunctionProfile]:
    """Profile synthesis over an explicit function universe, id-sorted."""
    if catalog_size < 1:
        raise ValueError("catalog_size must be >= 1")
    lo, hi = deps_per_function
    if lo < 0 or hi < lo:
        raise ValueError("deps_per_function must satisfy 0 <= lo <= hi")
    if hi > catalog_size:
        raise ValueError("dependency range upper bound exceeds catalog size")
    rng = np.random.default_rng(seed)
    mass = zipf_mass(catalog_size, package_zipf_exponent)
    names = [package_name(i, catalog_size) for i in range(catalog_size)]
    profiles = []
    for function_id in sorted(set(function_ids)):
        k = int(rng.integers(lo, hi + 1))
        if k:
            picks = rng.choice(catalog_size, size=k, replace=False, p=mass)
            deps = frozenset(names[int(i)] for i in picks)
        else:
            deps = frozenset()
        profiles.append(
            FunctionProfile(function_id, runtime, deps, code_size_kb, exec_duration_ms)
        )
    return profiles


def parse_profiles(stream: IO[str] | Iterable[str]) -> list[FunctionProfile]:
    """Parse a profile catalog CSV; function_ids must be unique."""
    lines = iter(stream)
    header = next(lines, None)
    if header is None:
        raise TraceParseError("line 1: missing header")
    if header.strip() != PROFILE_HEADER:
        raise TraceParseError(f"line 1: expected header {PROFILE_HEADER!r}")
    profiles = []
    seen = set()
    for lineno, line in enumerate(lines, start=2):
        row = line.rstrip("\r\n")
        parts = row.split(",")
        if len(parts) != 5:
            raise TraceParseError(f"line {lineno}: expected 5 columns, got {len(parts)}")
        function_id, runtime, size_text, duration_text, deps_text = parts
        try:
            code_size_kb = int(size_text)
            exec_duration_ms = int(duration_text)
        except ValueError:
            raise TraceParseError(f"line {lineno}: non-integer size or duration") from None
        if function_id in seen:
            raise TraceParseError(f"line {lineno}: duplicate function_id {function_id!r}")
        seen.add(function_id)
        deps = frozenset(deps_text.split(";")) if deps_text else frozenset()
        try:
            profiles.append(
                FunctionProfile(function_id, runtime, deps, code_size_kb, exec_duration_ms)
            )
        except ValueError as exc:
            raise TraceParseError(f"line {lineno}: {exc}") from None
    return profiles


def load_profiles(path) -> list[FunctionProfile]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_profiles(handle)


def write_profiles(profiles: Sequence[FunctionProfile], stream: IO[str]) -> None:
    stream.write(PROFILE_HEADER + "\n")
    for p in profiles:
        for name in (p.function_id, p.runtime, *p.dependencies):
            if "," in name or ";" in name:
                raise ValueError(f"identifier not representable in CSV: {name!r}")
        deps = ";".join(sorted(p.dependencies))
        stream.write(f"{p.function_id},{p.runtime},{p.code_size_kb},{p.exec_duration_ms},{deps}\n")


def save_profiles(profiles: Sequence[FunctionProfile], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        write_profiles(profiles, handle)
