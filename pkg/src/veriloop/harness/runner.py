"""Benchmark execution: resumable runs over a dataset with bounded concurrency.

The runner wraps whichever backend the config names in a tracing layer that
(a) replays calls already present in the trace and (b) appends one record per
fresh call, under a semaphore that caps in-flight calls at max_concurrency.
Queries run on one thread pool while their calls run on another, so a query
waiting for its batch never starves the workers executing it.

Reports are built purely from call results keyed by call tag, never from
arrival order, which is why a resumed or differently-parallel run of the
same seed produces byte-identical report files.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ..backend import (
    Backend,
    CallTag,
    GenerationRequest,
    GenerationResult,
    OracleBackend,
    RemoteBackend,
    SamplingParams,
)
from ..core import Query, TokenUsage, canonicalize_answer, judge
from ..errors import (
    BackendCallError,
    ConfigError,
    EvaluationError,
    QueryFailedError,
    TraceError,
)
from ..pipeline import QueryOutcome, run_query
from ..prompts import TemplateSet, load_templates, render_judge
from .config import RunConfig, config_digest, run_config_from_dict
from .dataset import load_dataset
from .report import build_report, render_report_bytes
from .trace import TraceRecord, TraceWriter, read_trace, replay_map

logger = logging.getLogger(__name__)

TRACE_NAME = "trace.jsonl"
CONFIG_NAME = "config.json"
REPORT_NAME = "report.json"

JUDGE_SAMPLING = SamplingParams(temperature=0.0, top_p=1.0, top_k=-1, max_tokens=2048)


def _prompt_sha256(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class TracingBackend:
    """Replay-then-record wrapper around a real backend.

    A successful trace record whose prompt hash matches the re-rendered
    prompt is returned without a call; a hash mismatch means the config or
    templates changed under a resumed run and is refused. Fresh calls are
    appended to the trace whether they succeed or fail.
    """

    def __init__(
        self,
        inner: Backend,
        writer: TraceWriter,
        replay: dict[str, TraceRecord],
        max_concurrency: int,
    ):
        self.inner = inner
        self.backend_id = inner.backend_id
        self._writer = writer
        self._replay = replay
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        self.calls_issued = 0
        self._count_lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> GenerationResult:
        key = request.tag.key()
        prompt_hash = _prompt_sha256(request.prompt)
        record = self._replay.get(key)
        if record is not None:
            if record.prompt_sha256 != prompt_hash:
                raise TraceError(
                    f"call {key} was traced for a different prompt; the config or "
                    "templates changed since this run started (use --fresh to restart)"
                )
            return record.to_result()
        with self._count_lock:
            self.calls_issued += 1
        started = time.time()
        try:
            with self._semaphore:
                result = self.inner.generate(request)
        except BackendCallError as exc:
            self._writer.append(
                TraceRecord(
                    tag=request.tag,
                    prompt_sha256=prompt_hash,
                    response=None,
                    usage=TokenUsage.zero(),
                    backend_id=self.backend_id,
                    template_id=request.template_id,
                    error=str(exc),
                    started_at=started,
                    finished_at=time.time(),
                )
            )
            raise
        self._writer.append(
            TraceRecord(
                tag=request.tag,
                prompt_sha256=prompt_hash,
                response=result.text,
                usage=result.usage,
                backend_id=result.backend_id,
                template_id=request.template_id,
                error=None,
                started_at=started,
                finished_at=time.time(),
            )
        )
        return result


class ReplayBackend:
    """Backend that serves exclusively from a trace.

    Successful records return their stored text; calls whose only trace
    entries are failures re-raise those failures, so replaying a run
    reproduces its query outcomes exactly. A tag with no record at all means
    the trace does not cover the run it claims to describe.
    """

    backend_id = "replay"

    def __init__(self, records: list[TraceRecord]):
        self._replay = replay_map(records)
        self._failed: dict[str, TraceRecord] = {}
        for record in records:
            if not record.ok and record.tag.key() not in self._replay:
                self._failed[record.tag.key()] = record

    def generate(self, request: GenerationRequest) -> GenerationResult:
        key = request.tag.key()
        record = self._replay.get(key)
        if record is not None:
            if record.prompt_sha256 != _prompt_sha256(request.prompt):
                raise TraceError(f"trace record for {key} belongs to a different prompt")
            return record.to_result()
        failed = self._failed.get(key)
        if failed is not None:
            raise BackendCallError(failed.error or "traced call failed", call_tag=request.tag)
        raise TraceError(f"trace has no record for call {key}")


def evaluate_answer(
    predicted: str,
    ground_truth: str,
    mode: str,
    query: Query | None = None,
    backend: Backend | None = None,
    templates: TemplateSet | None = None,
) -> bool:
    """Score one predicted answer against the reference.

    exact_match compares canonical forms; llm_judge renders a judge prompt,
    sends it through the backend, and applies the verdict marker protocol.
    """
    if mode == "exact_match":
        return canonicalize_answer(predicted) == canonicalize_answer(ground_truth)
    if mode == "llm_judge":
        if query is None or backend is None or templates is None or templates.judge is None:
            raise EvaluationError("llm_judge needs a query, a backend, and a judge template")
        prompt = render_judge(templates.judge, query, predicted, ground_truth)
        tag = CallTag(query.id, 0, 0, "judge")
        try:
            result = backend.generate(
                GenerationRequest(
                    prompt=prompt,
                    sampling=JUDGE_SAMPLING,
                    tag=tag,
                    template_id=templates.judge.id,
                )
            )
        except BackendCallError as exc:
            raise EvaluationError(f"judge call for {query.id!r} failed: {exc}") from exc
        verdict = judge(result.text)
        if not verdict.parse_ok:
            raise EvaluationError(f"judge reply for {query.id!r} carried no verdict marker")
        return verdict.judgment == 1
    raise EvaluationError(f"unknown evaluation mode {mode!r}")


@dataclass(frozen=True)
class RunResult:
    report: dict
    report_path: Path
    outcomes: dict[str, QueryOutcome]
    failures: dict[str, str]


def _build_backend(config: RunConfig, queries: list[Query]) -> Backend:
    if config.backend_kind == "oracle":
        missing = [q.id for q in queries if q.ground_truth is None]
        if missing:
            raise ConfigError(
                "oracle backend needs ground truth for every query; missing for: "
                + ", ".join(missing[:5])
                + ("..." if len(missing) > 5 else "")
            )
        truths = {q.id: canonicalize_answer(q.ground_truth) for q in queries}
        return OracleBackend(config.oracle, config.seed, truths)
    return RemoteBackend(config.remote)


def _prepare_output_dir(config: RunConfig, fresh: bool) -> tuple[Path, list[TraceRecord]]:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / TRACE_NAME
    config_path = out / CONFIG_NAME
    if fresh:
        trace_path.unlink(missing_ok=True)
        (out / REPORT_NAME).unlink(missing_ok=True)
        config_path.unlink(missing_ok=True)
    if config_path.exists():
        stored = json.loads(config_path.read_text("utf-8"))
        if config_digest(stored) != config.digest():
            raise ConfigError(
                f"{config_path} was written by a different configuration; "
                "resume would mix runs (use --fresh to restart)"
            )
    else:
        config_path.write_text(
            json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n", "utf-8"
        )
    records = read_trace(trace_path) if trace_path.exists() else []
    return out, records


def _run_queries(
    queries: list[Query],
    config: RunConfig,
    backend: Backend,
    templates: TemplateSet,
) -> tuple[dict[str, QueryOutcome], dict[str, str]]:
    outcomes: dict[str, QueryOutcome] = {}
    failures: dict[str, str] = {}

    def one(query: Query, executor: Executor | None) -> QueryOutcome | QueryFailedError:
        try:
            return run_query(query, config.pipeline, backend, templates, config.seed, executor)
        except QueryFailedError as exc:
            return exc

    if config.max_concurrency == 1 or len(queries) == 1:
        results = [one(q, None) for q in queries]
    else:
        # Separate pools for queries and calls; a shared pool can deadlock
        # with every worker blocked on a batch that has nowhere to run.
        with ThreadPoolExecutor(max_workers=config.max_concurrency) as call_pool:
            with ThreadPoolExecutor(
                max_workers=min(len(queries), config.max_concurrency)
            ) as query_pool:
                futures = [query_pool.submit(one, q, call_pool) for q in queries]
                results = [f.result() for f in futures]

    for query, result in zip(queries, results):
        if isinstance(result, QueryFailedError):
            logger.warning("query %s failed: %s", query.id, result.reason)
            failures[query.id] = result.reason
        else:
            outcomes[query.id] = result
    return outcomes, failures


def _evaluate(
    queries: list[Query],
    outcomes: dict[str, QueryOutcome],
    config: RunConfig,
    backend: Backend,
    templates: TemplateSet,
) -> dict[str, bool | None]:
    evaluations: dict[str, bool | None] = {}
    for query in queries:
        outcome = outcomes.get(query.id)
        if outcome is None or query.ground_truth is None:
            evaluations[query.id] = None
            continue
        try:
            evaluations[query.id] = evaluate_answer(
                outcome.final_answer,
                query.ground_truth,
                config.evaluation.mode,
                query=query,
                backend=backend,
                templates=templates,
            )
        except EvaluationError as exc:
            logger.warning("evaluation skipped for %s: %s", query.id, exc)
            evaluations[query.id] = None
    return evaluations


def _load_templates_for(config: RunConfig) -> TemplateSet:
    return load_templates(
        Path(config.templates.dir) if config.templates.dir else None,
        config.templates.names(),
        with_judge=config.evaluation.mode == "llm_judge",
    )


def run_benchmark(config: RunConfig, fresh: bool = False) -> RunResult:
    """Execute (or resume) a full benchmark run and write its report.

    The output directory accumulates three files: the resolved config, the
    append-only trace, and the report. Re-running with the same directory
    resumes from whatever the trace already holds.
    """
    queries = load_dataset(config.dataset)
    templates = _load_templates_for(config)
    out_dir, prior_records = _prepare_output_dir(config, fresh)
    inner = _build_backend(config, queries)

    with TraceWriter(out_dir / TRACE_NAME) as writer:
        backend = TracingBackend(
            inner, writer, replay_map(prior_records), config.max_concurrency
        )
        outcomes, failures = _run_queries(queries, config, backend, templates)
        evaluations = _evaluate(queries, outcomes, config, backend, templates)

    all_records = read_trace(out_dir / TRACE_NAME)
    report = build_report(config, queries, outcomes, failures, evaluations, all_records)
    report_path = out_dir / REPORT_NAME
    report_path.write_bytes(render_report_bytes(report))
    return RunResult(
        report=report, report_path=report_path, outcomes=outcomes, failures=failures
    )


def rebuild_report(run_dir: str | Path) -> RunResult:
    """Reconstruct the report for a finished run purely from its trace.

    Every pipeline and judge call replays from disk; a missing or mismatched
    record raises instead of touching any backend. The rewritten report is
    byte-identical to the original for a completed run.
    """
    run_dir = Path(run_dir)
    config_path = run_dir / CONFIG_NAME
    if not config_path.exists():
        raise ConfigError(f"{run_dir} does not look like a run directory (no {CONFIG_NAME})")
    config = run_config_from_dict(json.loads(config_path.read_text("utf-8")))
    queries = load_dataset(config.dataset)
    templates = _load_templates_for(config)
    records = read_trace(run_dir / TRACE_NAME)
    backend = ReplayBackend(records)
    outcomes, failures = _run_queries(queries, config, backend, templates)
    evaluations = _evaluate(queries, outcomes, config, backend, templates)
    report = build_report(config, queries, outcomes, failures, evaluations, records)
    report_path = run_dir / REPORT_NAME
    report_path.write_bytes(render_report_bytes(report))
    return RunResult(
        report=report, report_path=report_path, outcomes=outcomes, failures=failures
    )
