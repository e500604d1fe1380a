#!/usr/bin/env python3
"""End-to-end synthetic experiment driven through the CLI.

Generates a skewed trace plus profile catalog, analyzes popularity skew,
builds a clustered partition, runs the worker-level simulation, and sweeps
global-LRU hit rates across cache sizes. All artifacts (and their run
manifests) land in --outdir; re-running with the same flags reproduces them
byte for byte.
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from coldsim.cli import main as coldsim


def sh(args):
    rc = coldsim(args)
    if rc != 0:
        raise SystemExit(f"coldsim {' '.join(args[:2])}... exited {rc}")


def run_pipeline(outdir: Path, functions: int, requests: int, zipf: float, seed: int, sizes: str):
    outdir.mkdir(parents=True, exist_ok=True)
    trace = outdir / "trace.csv"
    profiles = outdir / "profiles.csv"
    partition = outdir / "partition.json"
    skew = outdir / "skew.json"
    result = outdir / "sim_result.json"
    per_request = outdir / "per_request.csv"
    sweep = outdir / "sweep.csv"

    sh([
        "generate", "--quiet",
        "--functions", str(functions), "--requests", str(requests),
        "--zipf", str(zipf), "--duration", "86400000", "--seed", str(seed),
        "--out", str(trace), "--profiles-out", str(profiles),
    ])
    sh(["analyze", str(trace), "--quiet", "--out", str(skew)])
    sh([
        "partition", str(profiles), str(trace), "--quiet",
        "--groups-per-runtime", "4", "--workers", "16",
        "--strategy", "clustered", "--out", str(partition),
    ])
    sh([
        "simulate", str(trace), str(profiles), str(partition), "--quiet",
        "--out", str(result), "--per-request", str(per_request),
    ])
    sh(["sweep", str(trace), "--quiet", "--sizes", sizes, "--out", str(sweep)])

    thresholds = json.loads(skew.read_text())["thresholds"]
    aggregates = json.loads(result.read_text())
    print(f"functions={functions} requests={requests} zipf={zipf} seed={seed}")
    print(f"coverage thresholds: {thresholds}")
    print(f"tier hit rates: {aggregates['hit_rate_by_tier']}")
    print(f"cold start fraction: {aggregates['cold_start_fraction']:.4f}")
    print(f"mean init latency: {aggregates['mean_init_ms']:.1f} ms")
    print("sweep:")
    for line in sweep.read_text().splitlines()[1:]:
        size, rate = line.split(",")
        print(f"  {int(size) / 1024**3:.2f} GiB -> hit rate {rate}")
    print(f"artifacts in {outdir}/")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", type=Path, default=Path("out/synthetic"))
    parser.add_argument("--functions", type=int, default=2000)
    parser.add_argument("--requests", type=int, default=200_000)
    parser.add_argument("--zipf", type=float, default=1.3)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--sizes", default="256MiB,1GiB,4GiB,16GiB,64GiB")
    args = parser.parse_args()
    run_pipeline(args.outdir, args.functions, args.requests, args.zipf, args.seed, args.sizes)
