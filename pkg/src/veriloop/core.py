"""Value types and text protocols shared by the whole engine.

The engine moves three kinds of text around: candidate solutions, verifier
verdicts, and summarizer output. This module owns the immutable value types
for those, plus the two parsing protocols everything else relies on:

* verdict marker: a line-anchored ``FINAL VERDICT: CORRECT|INCORRECT``,
  case-insensitive, last occurrence wins (models like to restate);
* answer marker: the last balanced ``\\boxed{...}``, falling back to the
  last line-anchored ``FINAL ANSWER:`` line.

Extracted answers are canonical strings: trimmed, internal whitespace
collapsed, surrounding LaTeX math delimiters stripped. There is no numeric
normalization on purpose ("0.5" and "1/2" stay distinct answers).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ContractViolation

#: Sentinel answer for text the extractor could not parse. It is a category
#: of its own in entropy computations and never matches a ground truth.
UNEXTRACTABLE = "unextractable"

_VERDICT_RE = re.compile(
    r"^[ \t]*FINAL VERDICT:[ \t]*(CORRECT|INCORRECT)\b",
    re.IGNORECASE | re.MULTILINE,
)
_FINAL_ANSWER_RE = re.compile(
    r"^[ \t]*FINAL ANSWER:[ \t]*(.*?)[ \t]*$",
    re.IGNORECASE | re.MULTILINE,
)
_BOXED_MARK = "\\boxed{"

# Outermost-first; "$$" must be tried before "$".
_MATH_DELIMS = (("\\(", "\\)"), ("\\[", "\\]"), ("$$", "$$"), ("$", "$"))


@dataclass(frozen=True, slots=True)
class TokenUsage:
    """Token cost of one call (or a sum of calls). Totals are always prompt + completion."""

    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )

    @staticmethod
    def zero() -> "TokenUsage":
        return TokenUsage(0, 0)


@dataclass(frozen=True, slots=True)
class Query:
    """One problem to solve. ``ground_truth`` is optional; unlabeled queries are
    excluded from accuracy aggregates but still run through the pipeline."""

    id: str
    prompt: str
    ground_truth: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("query id must be non-empty")
        if not self.prompt:
            raise ValueError(f"query {self.id!r} has an empty prompt")


@dataclass(frozen=True, slots=True)
class VerificationVerdict:
    """Parsed verifier output. ``parse_ok`` false forces judgment 0: an
    unparseable verdict never admits a candidate."""

    raw_text: str
    judgment: int
    parse_ok: bool

    def __post_init__(self):
        if self.judgment not in (0, 1):
            raise ValueError("judgment must be 0 or 1")
        if not self.parse_ok and self.judgment != 0:
            raise ValueError("missing marker must map to judgment 0")


#: Verdict attached to candidates when verification is disabled: everything
#: is admitted without a verifier call.
VERDICT_SKIPPED = VerificationVerdict(raw_text="", judgment=1, parse_ok=True)


@dataclass(frozen=True, slots=True)
class Candidate:
    """One generated solution.

    ``loop_index`` counts rounds from 0, ``sample_index`` counts samples within
    a round from 1. ``unverified_fallback`` marks members that entered a
    summary pool without acceptance because the verified set was empty.
    """

    loop_index: int
    sample_index: int
    full_text: str
    extracted_answer: str
    verdict: VerificationVerdict | None = None
    usage: TokenUsage = field(default_factory=TokenUsage.zero)
    unverified_fallback: bool = False

    def __post_init__(self):
        if self.loop_index < 0:
            raise ValueError("loop_index must be >= 0")
        if self.sample_index < 1:
            raise ValueError("sample_index must be >= 1")

    @property
    def order_key(self) -> tuple[int, int]:
        return (self.loop_index, self.sample_index)

    @property
    def accepted(self) -> bool:
        return self.verdict is not None and self.verdict.judgment == 1


@dataclass(frozen=True)
class CandidateSet:
    """Accumulated pool of candidates for one query.

    Members are kept sorted by (loop_index, sample_index) so the pool reads
    the same no matter in which order concurrent verifications finished.
    Duplicate texts are retained: the pool is a multiset. Every member is
    either accepted or explicitly flagged as unverified fallback.
    """

    query_id: str
    members: tuple[Candidate, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.members, key=lambda c: c.order_key))
        object.__setattr__(self, "members", ordered)
        for c in ordered:
            if not c.accepted and not c.unverified_fallback:
                raise ContractViolation(
                    f"candidate ({c.loop_index},{c.sample_index}) in pool for "
                    f"{self.query_id!r} is neither accepted nor flagged unverified"
                )

    @staticmethod
    def empty(query_id: str) -> "CandidateSet":
        return CandidateSet(query_id=query_id)

    def __len__(self) -> int:
        return len(self.members)

    def __bool__(self) -> bool:
        return bool(self.members)


def judge(verdict_text: str) -> VerificationVerdict:
    """Map raw verifier text to a binary verdict via the marker protocol.

    The last line-anchored ``FINAL VERDICT:`` marker wins; a missing marker
    yields judgment 0 with ``parse_ok`` false.
    """
    matches = _VERDICT_RE.findall(verdict_text)
    if not matches:
        return VerificationVerdict(raw_text=verdict_text, judgment=0, parse_ok=False)
    judgment = 1 if matches[-1].upper() == "CORRECT" else 0
    return VerificationVerdict(raw_text=verdict_text, judgment=judgment, parse_ok=True)


def canonicalize_answer(text: str) -> str:
    """Normalize an answer string: trim, strip surrounding math delimiters,
    collapse internal whitespace. Purely textual; no numeric rewriting."""
    s = text.strip()
    changed = True
    while changed and s:
        changed = False
        for open_d, close_d in _MATH_DELIMS:
            if (
                len(s) > len(open_d) + len(close_d)
                and s.startswith(open_d)
                and s.endswith(close_d)
            ):
                s = s[len(open_d) : len(s) - len(close_d)].strip()
                changed = True
                break
    return " ".join(s.split())


def _last_balanced_boxed(text: str) -> str | None:
    """Content of the last ``\\boxed{...}`` whose braces balance, or None."""
    start = len(text)
    while True:
        start = text.rfind(_BOXED_MARK, 0, start)
        if start < 0:
            return None
        depth = 0
        for i in range(start + len(_BOXED_MARK) - 1, len(text)):
            ch = text[i]
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start + len(_BOXED_MARK) : i]
        # Unbalanced occurrence; keep scanning leftwards.


def extract_answer(full_text: str) -> str:
    """Pull the final answer out of a solution text.

    The last balanced ``\\boxed{...}`` takes precedence over the last
    ``FINAL ANSWER:`` line. Returns the canonical answer, or the
    ``UNEXTRACTABLE`` sentinel when neither marker is present (or the
    marker content canonicalizes to nothing).
    """
    boxed = _last_balanced_boxed(full_text)
    if boxed is not None:
        canonical = canonicalize_answer(boxed)
        if canonical:
            return canonical
    lines = _FINAL_ANSWER_RE.findall(full_text)
    if lines:
        canonical = canonicalize_answer(lines[-1])
        if canonical:
            return canonical
    return UNEXTRACTABLE


def union_accepted(pool: CandidateSet, batch: Sequence[Candidate]) -> CandidateSet:
    """Fold a verified batch into the pool, keeping only accepted members.

    Every batch member must carry a verdict; feeding unverified candidates
    here is a programming error, not a data condition. The input pool is
    untouched (value semantics) and the result stays sorted by
    (loop_index, sample_index) regardless of batch arrival order.
    """
    for c in batch:
        if c.verdict is None:
            raise ContractViolation(
                f"candidate ({c.loop_index},{c.sample_index}) has no verdict; "
                "verify the batch before pooling it"
            )
    admitted = [c for c in batch if c.verdict.judgment == 1]
    if not admitted:
        return pool
    return CandidateSet(query_id=pool.query_id, members=pool.members + tuple(admitted))
