"""Interrupt a benchmark mid-flight and prove resume rebuilds it exactly.

A reference run produces a call trace and a report. We then replay the
failure: copy the first 60% of the trace into a fresh directory, as if the
process had died there, and run again. The resumed run replays the traced
calls, executes only the missing ones, and must emit a byte-identical report.
"""
import argparse
import sys
from dataclasses import replace
from pathlib import Path

from veriloop import PipelineConfig
from veriloop.harness.config import RunConfig
from veriloop.harness.runner import REPORT_NAME, TRACE_NAME, run_benchmark
from veriloop.harness.trace import read_trace


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/resume_demo")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    root = Path(args.out)
    if root.exists():
        sys.exit(f"{root} already exists; remove it or pass a different --out")

    config = RunConfig(
        seed=args.seed,
        output_dir=str(root / "reference"),
        pipeline=PipelineConfig(loops=1, samples_per_loop=4),
    )
    reference = run_benchmark(config)
    trace_lines = (root / "reference" / TRACE_NAME).read_text("utf-8").splitlines(
        keepends=True
    )
    print(f"reference run: {len(trace_lines)} traced calls -> {reference.report_path}")

    kept = int(len(trace_lines) * 0.6)
    interrupted = root / "interrupted"
    interrupted.mkdir(parents=True)
    (interrupted / "config.json").write_bytes(
        (root / "reference" / "config.json").read_bytes()
    )
    (interrupted / TRACE_NAME).write_text("".join(trace_lines[:kept]), "utf-8")
    print(f"simulated crash: kept {kept} of {len(trace_lines)} records")

    resumed = run_benchmark(replace(config, output_dir=str(interrupted)))
    replayed = kept
    executed = len(read_trace(interrupted / TRACE_NAME)) - replayed
    identical = resumed.report_path.read_bytes() == reference.report_path.read_bytes()
    print(f"resume: {replayed} calls replayed from trace, {executed} executed fresh")
    print(f"reports byte-identical: {identical}")
    if not identical:
        sys.exit(f"resume diverged; compare {reference.report_path} and {resumed.report_path}")
    print(f"cleanup: rm -r {root}")


if __name__ == "__main__":
    main()
