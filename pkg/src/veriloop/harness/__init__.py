"""Run orchestration: config files, datasets, tracing, reports, validation."""

from .config import (
    EvaluationConfig,
    RunConfig,
    TemplatesConfig,
    apply_overrides,
    load_config,
    load_preset,
    run_config_from_dict,
)
from .dataset import load_dataset
from .report import build_report, render_report_bytes
from .runner import (
    ReplayBackend,
    RunResult,
    TracingBackend,
    evaluate_answer,
    rebuild_report,
    run_benchmark,
)
from .trace import TraceRecord, TraceWriter, read_trace, replay_map
from .validate import (
    DEFAULT_GRID,
    PointResult,
    ValidationPoint,
    load_grid,
    render_validation_csv,
    simulate_point,
    sweep_rows,
    validate_model,
)

__all__ = [
    "DEFAULT_GRID",
    "EvaluationConfig",
    "PointResult",
    "ReplayBackend",
    "RunConfig",
    "RunResult",
    "TemplatesConfig",
    "TraceRecord",
    "TraceWriter",
    "TracingBackend",
    "ValidationPoint",
    "apply_overrides",
    "build_report",
    "evaluate_answer",
    "load_config",
    "load_dataset",
    "load_grid",
    "load_preset",
    "read_trace",
    "rebuild_report",
    "render_report_bytes",
    "render_validation_csv",
    "replay_map",
    "run_benchmark",
    "run_config_from_dict",
    "simulate_point",
    "sweep_rows",
    "validate_model",
]
