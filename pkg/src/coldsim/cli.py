"""Command-line interface: analyze, generate, partition, simulate, sweep.

Data goes to stdout or ``--out``; diagnostics go to stderr. Exit status is
0 on success, 2 on usage or input errors, 1 on internal errors. Commands
that write files also write a ``<out>.manifest.json`` recording the resolved
configuration, so re-runs with identical inputs are byte-reproducible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from dataclasses import dataclass

from . import __version__
from .caches import LatencyModel
from .locality import (
    Partition,
    build_dependency_graph,
    partition_clustered,
    partition_round_robin,
)
from .sim import (
    RoutingPolicy,
    SimConfig,
    run,
    sweep_cache_sizes,
    write_per_request_csv,
)
from .traces import (
    SyntheticTraceSpec,
    function_name,
    generate_synthetic,
    load_profiles,
    load_trace,
    popularity_cdf,
    request_counts,
    save_profiles,
    save_trace,
    synthesize_profiles_for_ids,
)

_SIZE_RE = re.compile(r"^\s*(\d+)\s*(B|KIB|MIB|GIB|TIB)?\s*$", re.IGNORECASE)
_SIZE_FACTORS = {"B": 1, "KIB": 1024, "MIB": 1024**2, "GIB": 1024**3, "TIB": 1024**4}


def parse_size(text: str) -> int:
    """Exact byte count from a decimal count with an optional IEC suffix."""
    match = _SIZE_RE.match(text)
    if not match:
        raise ValueError(f"unparseable size: {text!r}")
    return int(match.group(1)) * _SIZE_FACTORS[(match.group(2) or "B").upper()]


def parse_float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_digest: str
    input_paths: tuple[str, ...]
    output_paths: tuple[str, ...]
    seed: int
    tool_version: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "config_digest": self.config_digest,
                "input_paths": list(self.input_paths),
                "output_paths": list(self.output_paths),
                "seed": self.seed,
                "tool_version": self.tool_version,
            },
            sort_keys=True,
            indent=2,
        )


def _digest(command: str, parameters: dict, inputs: list[str]) -> str:
    canonical = json.dumps(
        {"command": command, "parameters": parameters, "inputs": inputs},
        sort_keys=True,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_text(path: str, content: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(content)


def _info(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _finish(args, command: str, parameters: dict, inputs: list[str], outputs: list[str]) -> int:
    """Write the run manifest next to the first file output, if any."""
    if outputs:
        manifest = RunManifest(
            command=command,
            config_digest=_digest(command, parameters, inputs),
            input_paths=tuple(inputs),
            output_paths=tuple(outputs),
            seed=args.seed,
            tool_version=__version__,
        )
        _write_text(outputs[0] + ".manifest.json", manifest.to_json() + "\n")
        for path in outputs:
            _info(args, f"wrote {path}")
    return 0


def _emit(args, text: str) -> list[str]:
    """Primary payload to --out or stdout; returns file outputs for the manifest."""
    if args.out:
        _write_text(args.out, text)
        return [args.out]
    sys.stdout.write(text)
    return []


def cmd_analyze(args) -> int:
    trace = load_trace(args.trace)
    targets = parse_float_list(args.targets)
    summary = popularity_cdf(trace, targets)
    outputs = _emit(args, summary.to_json() + "\n")
    return _finish(args, "analyze", {"targets": targets}, [args.trace], outputs)


def cmd_generate(args) -> int:
    if not args.out:
        raise ValueError("generate requires --out for the trace CSV")
    spec = SyntheticTraceSpec(
        num_functions=args.functions,
        num_requests=args.requests,
        zipf_exponent=args.zipf,
        duration_ms=args.duration,
        seed=args.seed,
    )
    trace = generate_synthetic(spec)
    universe = [function_name(r, args.functions) for r in range(args.functions)]
    profiles = synthesize_profiles_for_ids(
        universe,
        catalog_size=args.catalog_size,
        deps_per_function=(args.deps_min, args.deps_max),
        package_zipf_exponent=args.package_zipf,
        seed=args.seed,
        runtime=args.runtime,
    )
    save_trace(trace, args.out)
    save_profiles(profiles, args.profiles_out)
    parameters = {
        "functions": args.functions,
        "requests": args.requests,
        "zipf": args.zipf,
        "duration_ms": args.duration,
        "catalog_size": args.catalog_size,
        "deps_min": args.deps_min,
        "deps_max": args.deps_max,
        "package_zipf": args.package_zipf,
        "runtime": args.runtime,
        "seed": args.seed,
    }
    return _finish(args, "generate", parameters, [], [args.out, args.profiles_out])


def cmd_partition(args) -> int:
    profiles = load_profiles(args.profiles)
    trace = load_trace(args.trace)
    counts = request_counts(trace)
    if args.weight_by_duration:
        durations = {p.function_id: p.exec_duration_ms for p in profiles}
        popularity = {f: c * max(1, durations.get(f, 1)) for f, c in counts.items()}
    else:
        popularity = dict(counts)
    if args.strategy == "round_robin":
        partition = partition_round_robin(
            profiles, args.groups_per_runtime, args.workers, popularity
        )
    else:
        graph = build_dependency_graph(profiles)
        partition = partition_clustered(
            graph, profiles, args.groups_per_runtime, args.workers, popularity
        )
    text = json.dumps(partition.to_dict(), sort_keys=True, indent=2) + "\n"
    outputs = _emit(args, text)
    parameters = {
        "groups_per_runtime": args.groups_per_runtime,
        "workers": args.workers,
        "strategy": args.strategy,
        "weight_by_duration": args.weight_by_duration,
    }
    return _finish(args, "partition", parameters, [args.profiles, args.trace], outputs)


_SIM_CONFIG_KEYS = {
    "handler_capacity_bytes",
    "install_capacity_bytes",
    "import_max_nodes",
    "keep_alive_ms",
    "latency_model",
    "latency_model_path",
    "routing_policy",
    "footprint_bytes",
    "footprint_overrides",
    "package_size_bytes",
}


def _build_sim_config(partition: Partition, payload: dict, seed: int) -> SimConfig:
    unknown = set(payload) - _SIM_CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown simulation config keys: {sorted(unknown)}")

    def size_of(value):
        return parse_size(value) if isinstance(value, str) else int(value)

    if "latency_model" in payload and "latency_model_path" in payload:
        raise ValueError("give either latency_model or latency_model_path, not both")
    if "latency_model" in payload:
        model = LatencyModel.from_dict(payload["latency_model"])
    elif "latency_model_path" in payload:
        model = LatencyModel.from_json_file(payload["latency_model_path"])
    else:
        model = LatencyModel.fig1_calibration()

    kwargs = {"partition": partition, "latency_model": model, "seed": seed}
    for key in ("handler_capacity_bytes", "install_capacity_bytes", "footprint_bytes", "package_size_bytes"):
        if key in payload:
            kwargs[key] = size_of(payload[key])
    if "import_max_nodes" in payload:
        kwargs["import_max_nodes"] = int(payload["import_max_nodes"])
    if "keep_alive_ms" in payload:
        value = payload["keep_alive_ms"]
        kwargs["keep_alive_ms"] = None if value is None else int(value)
    if "routing_policy" in payload:
        kwargs["routing_policy"] = RoutingPolicy(payload["routing_policy"])
    if "footprint_overrides" in payload:
        kwargs["footprint_overrides"] = {
            str(f): size_of(v) for f, v in payload["footprint_overrides"].items()
        }
    return SimConfig(**kwargs)


def cmd_simulate(args) -> int:
    trace = load_trace(args.trace)
    profiles = load_profiles(args.profiles)
    with open(args.partition, "r", encoding="utf-8") as handle:
        partition = Partition.from_dict(json.load(handle))
    payload = {}
    inputs = [args.trace, args.profiles, args.partition]
    if args.config:
        with open(args.config, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
        inputs.append(args.config)
    config = _build_sim_config(partition, payload, args.seed)
    result = run(trace, profiles, config)
    outputs = _emit(args, result.to_json() + "\n")
    if args.per_request:
        with open(args.per_request, "w", encoding="utf-8", newline="\n") as handle:
            write_per_request_csv(result, handle)
        outputs.append(args.per_request)
    parameters = {"config": payload, "seed": args.seed}
    return _finish(args, "simulate", parameters, inputs, outputs)


def cmd_sweep(args) -> int:
    trace = load_trace(args.trace)
    sizes = [parse_size(s) for s in args.sizes.split(",") if s.strip()]
    if not sizes:
        raise ValueError("--sizes must name at least one cache size")
    footprint = parse_size(args.footprint)
    raw = os.environ.get("COLDSIM_THREADS", "").strip()
    threads = int(raw) if raw else 0
    if threads <= 0:
        threads = os.cpu_count() or 1
    rows = sweep_cache_sizes(trace, sizes, footprint, max_threads=threads)
    lines = ["cache_bytes,hit_rate"]
    lines.extend(f"{size},{rate:.6f}" for size, rate in rows)
    outputs = _emit(args, "\n".join(lines) + "\n")
    parameters = {"sizes": sorted(sizes), "footprint_bytes": footprint}
    return _finish(args, "sweep", parameters, [args.trace], outputs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coldsim",
        description="Trace-driven cold-start simulator and workload analyzer.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the primary output to this file (default: stdout)")
    common.add_argument("--seed", type=int, default=0, help="seed for seeded operations")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")

    p = sub.add_parser("analyze", parents=[common], help="popularity CDF and coverage thresholds")
    p.add_argument("trace", help="normalized trace CSV")
    p.add_argument("--targets", default="0.5,0.8", help="request fractions, comma-separated")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("generate", parents=[common], help="synthetic trace and profile catalog")
    p.add_argument("--functions", type=int, required=True)
    p.add_argument("--requests", type=int, required=True)
    p.add_argument("--zipf", type=float, default=1.1, help="popularity skew exponent")
    p.add_argument("--duration", type=int, default=86_400_000, help="arrival window in ms")
    p.add_argument("--profiles-out", required=True, help="profile catalog CSV path")
    p.add_argument("--catalog-size", type=int, default=200, help="package catalog size")
    p.add_argument("--deps-min", type=int, default=1)
    p.add_argument("--deps-max", type=int, default=5)
    p.add_argument("--package-zipf", type=float, default=1.0)
    p.add_argument("--runtime", default="python")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("partition", parents=[common], help="build locality groups")
    p.add_argument("profiles", help="profile catalog CSV")
    p.add_argument("trace", help="normalized trace CSV (popularity source)")
    p.add_argument("--groups-per-runtime", type=int, required=True)
    p.add_argument("--workers", type=int, required=True)
    p.add_argument("--strategy", choices=("round_robin", "clustered"), default="clustered")
    p.add_argument(
        "--weight-by-duration",
        action="store_true",
        help="weight popularity by execution duration",
    )
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("simulate", parents=[common], help="run the worker-level simulation")
    p.add_argument("trace")
    p.add_argument("profiles")
    p.add_argument("partition", help="partition JSON (see the partition command)")
    p.add_argument("--config", help="simulation config JSON")
    p.add_argument("--per-request", help="also write the per-request breakdown CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="global-LRU hit rate by cache size")
    p.add_argument("trace")
    p.add_argument("--sizes", required=True, help="comma-separated sizes, e.g. 1GiB,2GiB")
    p.add_argument("--footprint", default="256MiB", help="per-instance footprint")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
