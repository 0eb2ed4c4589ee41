"""Deterministic run reports.

A report is a plain dict rendered to canonical JSON bytes: sorted keys,
two-space indent, trailing newline, no timestamps. Token numbers are summed
from trace records, which is what makes "report totals equal trace sums" an
exact identity rather than an approximation.
"""
from __future__ import annotations

import json

from .. import __version__
from ..analytics import pass_at_k_curve
from ..core import Query, TokenUsage, canonicalize_answer
from ..errors import VoteError
from ..pipeline import QueryOutcome, majority_vote
from .config import RunConfig
from .trace import TraceRecord


def _usage_sums(records: list[TraceRecord]) -> tuple[TokenUsage, dict[str, TokenUsage], TokenUsage]:
    """Total usage, per-query pipeline usage, and judge-call usage."""
    total = TokenUsage.zero()
    per_query: dict[str, TokenUsage] = {}
    evaluation = TokenUsage.zero()
    for record in records:
        total = total + record.usage
        if record.tag.phase == "judge":
            evaluation = evaluation + record.usage
        else:
            qid = record.tag.query_id
            per_query[qid] = per_query.get(qid, TokenUsage.zero()) + record.usage
    return total, per_query, evaluation


def _mean_entropy_per_loop(outcomes: list[QueryOutcome]) -> list[float | None]:
    if not outcomes:
        return []
    rounds = max(len(o.entropy_per_loop) for o in outcomes)
    means: list[float | None] = []
    for i in range(rounds):
        values = [
            o.entropy_per_loop[i]
            for o in outcomes
            if i < len(o.entropy_per_loop) and o.entropy_per_loop[i] is not None
        ]
        means.append(sum(values) / len(values) if values else None)
    return means


def _majority_vote_accuracy(
    queries: list[Query], outcomes: dict[str, QueryOutcome]
) -> float | None:
    """Accuracy of majority voting over each query's first-round samples."""
    hits = 0
    graded = 0
    for query in queries:
        outcome = outcomes.get(query.id)
        if outcome is None or query.ground_truth is None or not outcome.raw_per_loop:
            continue
        graded += 1
        try:
            voted = majority_vote([c.extracted_answer for c in outcome.raw_per_loop[0]])
        except VoteError:
            continue
        if canonicalize_answer(voted) == canonicalize_answer(query.ground_truth):
            hits += 1
    return hits / graded if graded else None


def _pass_at_k(
    queries: list[Query],
    outcomes: dict[str, QueryOutcome],
    ks: tuple[int, ...],
) -> dict[str, float | None]:
    records = []
    for query in queries:
        outcome = outcomes.get(query.id)
        if outcome is None or query.ground_truth is None or not outcome.raw_per_loop:
            continue
        truth = canonicalize_answer(query.ground_truth)
        first_round = outcome.raw_per_loop[0]
        n = len(first_round)
        c = sum(1 for cand in first_round if cand.extracted_answer == truth)
        records.append((n, c))
    if not records:
        return {str(k): None for k in ks}
    curve = pass_at_k_curve(records, ks)
    return {str(k): curve[k] for k in ks}


def build_report(
    config: RunConfig,
    queries: list[Query],
    outcomes: dict[str, QueryOutcome],
    failures: dict[str, str],
    evaluations: dict[str, bool | None],
    records: list[TraceRecord],
) -> dict:
    total, per_query_usage, evaluation_usage = _usage_sums(records)

    rows = []
    for query in sorted(queries, key=lambda q: q.id):
        outcome = outcomes.get(query.id)
        usage = per_query_usage.get(query.id, TokenUsage.zero())
        row: dict = {
            "id": query.id,
            "failed": query.id in failures,
            "correct": evaluations.get(query.id),
            "final_answer": outcome.final_answer if outcome else None,
            "tokens": {
                "prompt": usage.prompt_tokens,
                "completion": usage.completion_tokens,
                "total": usage.total_tokens,
            },
        }
        if outcome is not None:
            row["entropy_per_loop"] = list(outcome.entropy_per_loop)
            row["candidates_per_loop"] = [len(batch) for batch in outcome.raw_per_loop]
            row["verified_per_loop"] = [len(cs.members) for cs in outcome.candidate_history]
        else:
            row["entropy_per_loop"] = None
            row["candidates_per_loop"] = None
            row["verified_per_loop"] = None
            row["failure_reason"] = failures.get(query.id)
        rows.append(row)

    graded = [q.id for q in queries if evaluations.get(q.id) is not None]
    n_correct = sum(1 for qid in graded if evaluations[qid])
    n_unlabeled = sum(1 for q in queries if q.ground_truth is None)
    ordered_outcomes = [outcomes[q.id] for q in queries if q.id in outcomes]

    aggregates: dict = {
        "accuracy": n_correct / len(graded) if graded else None,
        "n_queries": len(queries),
        "n_evaluated": len(graded),
        "n_failed": len(failures),
        "n_unlabeled": n_unlabeled,
        "majority_vote_first_loop_accuracy": _majority_vote_accuracy(queries, outcomes),
        "mean_entropy_per_loop": _mean_entropy_per_loop(ordered_outcomes),
        "tokens": {
            "prompt": total.prompt_tokens,
            "completion": total.completion_tokens,
            "total": total.total_tokens,
            # Both cost readings, labeled: whole-dataset sum vs worst single query.
            "per_query_max_total": max(
                (u.total_tokens for u in per_query_usage.values()), default=0
            ),
            "evaluation_total": evaluation_usage.total_tokens,
        },
    }
    if config.evaluation.pass_at_ks:
        aggregates["pass_at_k"] = _pass_at_k(queries, outcomes, config.evaluation.pass_at_ks)

    return {
        "run": {
            "version": __version__,
            "seed": config.seed,
            "ablation": config.ablation,
            "backend": config.backend_kind,
            "dataset": config.dataset,
            "evaluation_mode": config.evaluation.mode,
            "loops": config.pipeline.loops,
            "samples_per_loop": config.pipeline.samples_per_loop,
            "config_digest": config.digest(),
        },
        "queries": rows,
        "aggregates": aggregates,
    }


def render_report_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode(
        "utf-8"
    )
