"""The iterated sample -> verify -> summarize loop for one query.

Round 0 samples M answers from scratch; every later round samples M
summaries over the pool accumulated so far; each round's samples are
verified and the accepted ones join the pool; a final summary call over the
finished pool produces the answer. Verification and summarization can each
be disabled, which is how the ablation modes are built.

Within a round the M generate calls are independent and may run
concurrently, then the M verify calls likewise (a barrier sits between the
phases); rounds are strictly sequential. All orderings produce identical
outcomes because every random event is keyed by call tag, not drawn from a
stream.
"""
from __future__ import annotations

from collections import Counter
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .analytics import answer_entropy
from .backend import Backend, CallTag, GenerationRequest, GenerationResult, SamplingParams, uniform_from_key, query_key
from .core import (
    Candidate,
    CandidateSet,
    Query,
    TokenUsage,
    UNEXTRACTABLE,
    VERDICT_SKIPPED,
    extract_answer,
    judge,
    union_accepted,
)
from .errors import BackendCallError, ConfigError, QueryFailedError, VoteError
from .prompts import CandidateRendering, TemplateSet, render_answer, render_summary, render_verify

FALLBACK_MODES = ("carry_unverified", "fail")

ABLATIONS = {
    "full": {},
    "no_loop": {"loops": 0},
    "no_loop_no_verify": {"loops": 0, "verify_enabled": False},
    "baseline": {"loops": 0, "verify_enabled": False, "summary_enabled": False},
}


@dataclass(frozen=True, slots=True)
class PhaseSampling:
    """Decoding parameters per phase. Verify and summary default to the
    answer-phase parameters unless overridden."""

    answer: SamplingParams = field(default_factory=SamplingParams)
    verify: SamplingParams | None = None
    summary: SamplingParams | None = None

    def resolved(self) -> "PhaseSampling":
        return PhaseSampling(
            answer=self.answer,
            verify=self.verify if self.verify is not None else self.answer,
            summary=self.summary if self.summary is not None else self.answer,
        )


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Shape of the loop: how many refinement rounds, how many samples per
    round, which phases are live, and what a summary prompt may carry."""

    loops: int = 2
    samples_per_loop: int = 8
    verify_enabled: bool = True
    summary_enabled: bool = True
    empty_set_fallback: str = "carry_unverified"
    rendering: CandidateRendering = field(default_factory=CandidateRendering)
    sampling: PhaseSampling = field(default_factory=PhaseSampling)

    def __post_init__(self):
        if self.loops < 0:
            raise ConfigError("loops must be >= 0")
        if self.samples_per_loop < 1:
            raise ConfigError("samples_per_loop must be >= 1")
        if self.empty_set_fallback not in FALLBACK_MODES:
            raise ConfigError(
                f"empty_set_fallback must be one of {FALLBACK_MODES}, "
                f"got {self.empty_set_fallback!r}"
            )
        if not self.summary_enabled and self.loops != 0:
            raise ConfigError("refinement loops need summarization; set loops to 0")


@dataclass(frozen=True, slots=True)
class QueryOutcome:
    """Everything one query produced: the final answer, the pool after each
    round, the raw (pre-verification) candidates per round, token totals, and
    the per-round entropy of extracted answers."""

    query_id: str
    final_answer: str
    final_text: str
    candidate_history: tuple[CandidateSet, ...]
    raw_per_loop: tuple[tuple[Candidate, ...], ...]
    usage_total: TokenUsage
    entropy_per_loop: tuple[float | None, ...]


def ablation_mode(name: str) -> dict:
    """Config deltas for a named ablation. Unknown names are an error."""
    try:
        return dict(ABLATIONS[name])
    except KeyError:
        raise ConfigError(
            f"unknown ablation {name!r}; expected one of {', '.join(ABLATIONS)}"
        ) from None


def apply_ablation(config: PipelineConfig, name: str) -> PipelineConfig:
    return replace(config, **ablation_mode(name))


def empty_set_fallback(query_id: str, raw: Sequence[Candidate]) -> CandidateSet:
    """Pool substitute when a round ends with nothing accepted and nothing
    carried over: every raw candidate of the round, flagged unverified, so
    summarization always has material to work from."""
    flagged = tuple(replace(c, unverified_fallback=True) for c in raw)
    return CandidateSet(query_id=query_id, members=flagged)


def majority_vote(answers: Sequence[str]) -> str:
    """Most frequent extracted answer; ties break to the lexicographically
    smallest. Unextractable answers never win and never tie."""
    votable = [a for a in answers if a != UNEXTRACTABLE]
    if not votable:
        raise VoteError(
            "no votable answers" if answers else "no answers to vote over"
        )
    counts = Counter(votable)
    best = max(counts.values())
    return min(a for a, n in counts.items() if n == best)


def _map_calls(
    fn: Callable[[object], GenerationResult],
    items: Sequence[object],
    executor: Executor | None,
) -> list[GenerationResult | BackendCallError]:
    """Run ``fn`` over ``items``, concurrently when an executor is given,
    capturing per-item backend failures instead of aborting the batch."""

    def guarded(item) -> GenerationResult | BackendCallError:
        try:
            return fn(item)
        except BackendCallError as exc:
            return exc

    if executor is None:
        return [guarded(item) for item in items]
    return list(executor.map(guarded, items))


def run_query(
    query: Query,
    config: PipelineConfig,
    backend: Backend,
    templates: TemplateSet,
    run_seed: int,
    executor: Executor | None = None,
) -> QueryOutcome:
    """Run the full loop for one query and return its outcome.

    Individual call failures shrink the affected round instead of aborting;
    the query only fails when a round leaves the summarizer with no material
    (or the final call itself fails). Raises QueryFailedError in that case.
    """
    sampling = config.sampling.resolved()
    m = config.samples_per_loop
    verified_set = CandidateSet.empty(query.id)
    pool = verified_set  # summary input: the verified set, or a fallback stand-in
    history: list[CandidateSet] = []
    raw_per_loop: list[tuple[Candidate, ...]] = []
    entropy_per_loop: list[float | None] = []
    usage = TokenUsage.zero()

    def call(
        prompt: str, tag: CallTag, params: SamplingParams, template_id: str
    ) -> GenerationResult:
        return backend.generate(
            GenerationRequest(prompt=prompt, sampling=params, tag=tag, template_id=template_id)
        )

    for loop_index in range(config.loops + 1):
        if loop_index == 0:
            prompt = render_answer(templates.answer, query)
            phase, params, tpl_id = "answer", sampling.answer, templates.answer.id
        else:
            prompt = render_summary(templates.summary, query, pool, config.rendering)
            phase, params, tpl_id = "summary", sampling.summary, templates.summary.id
        tags = [
            CallTag(query.id, loop_index, sample, phase) for sample in range(1, m + 1)
        ]
        results = _map_calls(lambda t: call(prompt, t, params, tpl_id), tags, executor)

        raw: list[Candidate] = []
        for tag, result in zip(tags, results):
            if isinstance(result, BackendCallError):
                continue
            usage = usage + result.usage
            raw.append(
                Candidate(
                    loop_index=loop_index,
                    sample_index=tag.sample_index,
                    full_text=result.text,
                    extracted_answer=extract_answer(result.text),
                    usage=result.usage,
                )
            )
        raw_per_loop.append(tuple(raw))
        entropy_per_loop.append(
            answer_entropy([c.extracted_answer for c in raw]) if raw else None
        )

        if config.verify_enabled:
            verify_budget = config.rendering.per_candidate_chars
            verify_jobs = [
                (c, CallTag(query.id, loop_index, c.sample_index, "verify")) for c in raw
            ]
            results = _map_calls(
                lambda job: call(
                    render_verify(templates.verify, query, job[0], verify_budget),
                    job[1],
                    sampling.verify,
                    templates.verify.id,
                ),
                verify_jobs,
                executor,
            )
            verified = []
            for (candidate, _), result in zip(verify_jobs, results):
                if isinstance(result, BackendCallError):
                    continue
                usage = usage + result.usage
                verified.append(replace(candidate, verdict=judge(result.text)))
        else:
            verified = [replace(c, verdict=VERDICT_SKIPPED) for c in raw]

        verified_set = union_accepted(verified_set, verified)
        history.append(verified_set)

        if verified_set:
            pool = verified_set
        elif config.empty_set_fallback == "carry_unverified":
            if not raw:
                raise QueryFailedError(
                    query.id, f"round {loop_index} produced no candidates at all"
                )
            pool = empty_set_fallback(query.id, raw)
        else:
            raise QueryFailedError(
                query.id, f"round {loop_index} accepted nothing and fallback is 'fail'"
            )

    if config.summary_enabled:
        final_tag = CallTag(query.id, config.loops, 0, "final_summary")
        prompt = render_summary(templates.summary, query, pool, config.rendering)
        try:
            result = call(prompt, final_tag, sampling.summary, templates.summary.id)
        except BackendCallError as exc:
            raise QueryFailedError(query.id, f"final summary call failed: {exc}") from exc
        usage = usage + result.usage
        final_text = result.text
        final_answer = extract_answer(final_text)
    else:
        last_raw = raw_per_loop[-1]
        if not last_raw:
            raise QueryFailedError(query.id, "no candidates to pick a final answer from")
        pick = uniform_from_key(
            query_key(run_seed, query.id), config.loops, 0, "final_summary", "pick"
        )
        chosen = last_raw[int(pick * len(last_raw))]
        final_text = chosen.full_text
        final_answer = chosen.extracted_answer

    return QueryOutcome(
        query_id=query.id,
        final_answer=final_answer,
        final_text=final_text,
        candidate_history=tuple(history),
        raw_per_loop=tuple(raw_per_loop),
        usage_total=usage,
        entropy_per_loop=tuple(entropy_per_loop),
    )
