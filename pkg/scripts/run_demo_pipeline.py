#!/usr/bin/env python3
"""End-to-end demo: synthetic fixture -> full relabeling pipeline -> reports.

Usage:
    python scripts/run_demo_pipeline.py [workdir] [--images N] [--seed S]

Writes the fixture to WORKDIR/fixture, the run store to WORKDIR/run, and
prints the headline statistics from the generated reports.
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path


def run(*args):
    cmd = [sys.executable, "-m", "relabelkit.cli", *map(str, args)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        print(proc.stdout)
        print(proc.stderr, file=sys.stderr)
        raise SystemExit(f"command failed: {' '.join(cmd)}")
    return proc.stdout


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("workdir", nargs="?", default="demo_run", type=Path)
    parser.add_argument("--images", type=int, default=200)
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    fx = args.workdir / "fixture"
    store = args.workdir / "run"
    run("make-fixture", "--out", fx, "--images", args.images,
        "--classes", args.classes, "--seed", args.seed)
    run("ingest", "--store", store, "--catalog", fx / "catalog.jsonl",
        "--images", fx / "images.jsonl", "--predictions", fx / "predictions.jsonl",
        "--reference-labels", fx / "reference_labels.jsonl")
    run("select-model", "--store", store)
    run("propose", "--store", store, "--k", 20)
    run("make-batches", "--store", store, "--roster", fx / "roster.jsonl",
        "--num-batches", 7, "--per-batch", 2, "--seed", args.seed)
    run("simulate-annotations", "--store", store, "--truth", fx / "truth.jsonl",
        "--stage", "initial", "--seed", args.seed)
    print(run("analyze-agreement", "--store", store))
    run("assign-refinement", "--store", store)
    run("simulate-annotations", "--store", store, "--truth", fx / "truth.jsonl",
        "--stage", "refinement", "--seed", args.seed)
    run("finalize", "--store", store)
    run("simulate-annotations", "--store", store, "--truth", fx / "truth.jsonl",
        "--stage", "triage", "--seed", args.seed)
    run("report", "--store", store)

    dist = json.loads((store / "reports" / "distribution.json").read_text())
    print(f"images: {dist['n_total']}")
    print(f"multi-label share: {dist['multi_label_percent']}%")
    print("label-count percentages:", dist["percent"])
    regression = store / "reports" / "regression.json"
    if regression.exists():
        fit = json.loads(regression.read_text())
        print(f"top1 vs multi-label fit: slope={fit['slope']:.4f} r^2={fit['r_squared']:.4f}")
    print(f"reports in {store / 'reports'}")


if __name__ == "__main__":
    main()
