"""Command line entry points.

Subcommands: ``run`` executes a configured benchmark, ``simulate`` is the
same loop pinned to the oracle backend, ``validate-model`` compares Monte
Carlo against the closed-form accuracy model, ``sweep`` tabulates the
formula over a grid, and ``report`` re-renders a run's report from its
trace without touching any backend.

Exit codes: 0 on success, 1 when a run or its configuration fails, 2 when
model validation finds a point out of tolerance.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from ..errors import VeriloopError
from .config import RunConfig, apply_overrides, load_config
from .runner import rebuild_report, run_benchmark
from .validate import (
    DEFAULT_GRID,
    DEFAULT_PIPELINE_CHECK,
    DEFAULT_TRIALS,
    load_grid,
    render_validation_csv,
    sweep_rows,
    validate_model,
)

RUN_FAILURE = 1
VALIDATION_FAILURE = 2


def _add_run_flags(parser: argparse.ArgumentParser, config_required: bool) -> None:
    parser.add_argument(
        "--config",
        required=config_required,
        help="JSON run configuration" + ("" if config_required else " (optional; defaults apply)"),
    )
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument(
        "--fresh",
        action="store_true",
        help="discard any existing trace and report in the output directory",
    )
    parser.add_argument("--ablation", help="pipeline variant: full, no_loop, no_loop_no_verify, baseline")
    parser.add_argument("--loops", type=int, help="override refinement loop count")
    parser.add_argument("--samples", type=int, help="override samples per loop")
    parser.add_argument("--out", help="override the output directory")


def _add_grid_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", help="JSON grid file ('points' list or 'axes' to cross)")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    parser.add_argument("--seed", type=int, default=0, help="simulation seed")
    parser.add_argument("--out", help="write CSV here instead of stdout")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="veriloop",
        description="Sample, verify, and summarize pipeline runner with a closed-form accuracy model.",
        epilog="Remote backends read their API key from the environment variable "
        "named in the config (api_key_env, default OPENAI_API_KEY).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a benchmark from a config file")
    _add_run_flags(run, config_required=True)

    simulate = sub.add_parser("simulate", help="run the benchmark on the oracle backend")
    _add_run_flags(simulate, config_required=False)

    validate = sub.add_parser(
        "validate-model", help="check the closed-form model against Monte Carlo"
    )
    _add_grid_flags(validate)
    validate.add_argument(
        "--pipeline-check",
        type=int,
        default=DEFAULT_PIPELINE_CHECK,
        help="queries per point to recompute through the real pipeline",
    )

    sweep = sub.add_parser("sweep", help="tabulate the closed-form model over a grid")
    _add_grid_flags(sweep)

    report = sub.add_parser("report", help="re-render a run's report from its trace")
    report.add_argument("--out", required=True, help="run directory holding config.json and trace.jsonl")

    return parser


def _config_for(args: argparse.Namespace, force_oracle: bool) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if force_oracle and config.backend_kind != "oracle":
        config = dataclasses.replace(config, backend_kind="oracle", remote=None)
    return apply_overrides(
        config,
        seed=args.seed,
        ablation=args.ablation,
        loops=args.loops,
        samples=args.samples,
        output_dir=args.out,
    )


def _cmd_run(args: argparse.Namespace, force_oracle: bool) -> int:
    config = _config_for(args, force_oracle)
    result = run_benchmark(config, fresh=args.fresh)
    aggregates = result.report["aggregates"]
    accuracy = aggregates["accuracy"]
    print(f"queries:    {aggregates['n_queries']} ({aggregates['n_failed']} failed)")
    print(f"accuracy:   {accuracy if accuracy is not None else 'n/a'}")
    print(f"tokens:     {aggregates['tokens']['total']}")
    print(f"report:     {result.report_path}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    result = rebuild_report(args.out)
    print(f"report:     {result.report_path}")
    return 0


def _grid_for(args: argparse.Namespace) -> tuple[list, int | None]:
    if args.grid:
        points, file_trials = load_grid(args.grid)
        return points, args.trials if args.trials is not None else file_trials
    return list(DEFAULT_GRID), args.trials


def _cmd_validate(args: argparse.Namespace) -> int:
    points, trials = _grid_for(args)
    results = validate_model(
        points,
        trials=trials or DEFAULT_TRIALS,
        seed=args.seed,
        pipeline_check=args.pipeline_check,
    )
    csv = render_validation_csv(results)
    if args.out:
        Path(args.out).write_text(csv, "utf-8")
    else:
        sys.stdout.write(csv)
    worst = max(results, key=lambda r: r.sigmas)
    failed = [r for r in results if not r.ok]
    print(
        f"{len(results) - len(failed)}/{len(results)} points within tolerance; "
        f"worst deviation {worst.sigmas:.2f} sigma"
    )
    if failed:
        for r in failed:
            print(
                f"FAIL {r.point}: |{r.mc_estimate:.6f} - {r.analytical:.6f}| = "
                f"{r.abs_diff:.6f} ({r.sigmas:.2f} sigma, "
                f"{r.pipeline_mismatches} pipeline mismatches)",
                file=sys.stderr,
            )
        return VALIDATION_FAILURE
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    points, trials = _grid_for(args)
    csv = sweep_rows(points, trials=trials, seed=args.seed)
    if args.out:
        Path(args.out).write_text(csv, "utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args, force_oracle=False)
        if args.command == "simulate":
            return _cmd_run(args, force_oracle=True)
        if args.command == "validate-model":
            return _cmd_validate(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_report(args)
    except VeriloopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
