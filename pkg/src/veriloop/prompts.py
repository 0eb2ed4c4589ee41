"""Prompt templates and rendering.

Templates are plain text files with ``{{name}}`` placeholders, validated at
load time: each role has a fixed placeholder vocabulary, required names must
appear, unknown names fail fast. Rendering is pure string substitution, so a
prompt re-rendered from the same inputs is byte-identical; the trace relies
on that to detect configuration drift on resume.

Candidate pools are serialized one candidate per line::

    Candidate 3: 42 - <whitespace-flattened reasoning excerpt>
    Candidate 4 (unverified): 17

The "(unverified)" mark appears on fallback members that entered the pool
without acceptance. The simulation oracle parses these lines back; real
backends just read them.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import CandidateSet, Query, Candidate
from .errors import ContractViolation, TemplateError

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")

#: Placeholder vocabulary per role. All names are required.
ROLE_PLACEHOLDERS = {
    "answer": ("question",),
    "verify": ("question", "solution"),
    "summary": ("question", "candidates"),
    "judge": ("question", "prediction", "reference"),
}

#: A template must instruct the model to emit the marker its consumer parses.
_ROLE_MARKER_HINTS = {
    "answer": ("\\boxed", "FINAL ANSWER"),
    "verify": ("FINAL VERDICT",),
    "summary": ("\\boxed", "FINAL ANSWER"),
    "judge": ("FINAL VERDICT",),
}

_POOL_LINE_RE = re.compile(r"^Candidate \d+( \(unverified\))?: (.*)$", re.MULTILINE)


@dataclass(frozen=True, slots=True)
class PromptTemplate:
    """A validated template. ``id`` ties rendered prompts back to the exact
    template text in run traces (name plus a content digest)."""

    role: str
    template_text: str
    id: str


@dataclass(frozen=True, slots=True)
class CandidateRendering:
    """How candidate pools are serialized into summary prompts."""

    per_candidate_chars: int = 2000
    max_candidates: int = 32
    include_full_reasoning: bool = True

    def __post_init__(self):
        if self.per_candidate_chars <= 0:
            raise ValueError("per_candidate_chars must be positive")
        if self.max_candidates <= 0:
            raise ValueError("max_candidates must be positive")


@dataclass(frozen=True, slots=True)
class TemplateSet:
    """The three pipeline templates, plus the optional judge template."""

    answer: PromptTemplate
    verify: PromptTemplate
    summary: PromptTemplate
    judge: PromptTemplate | None = None


def validate_template(role: str, text: str, name: str) -> None:
    """Raise TemplateError unless ``text`` is a well-formed template for ``role``."""
    if role not in ROLE_PLACEHOLDERS:
        raise TemplateError(f"unknown template role {role!r}")
    allowed = set(ROLE_PLACEHOLDERS[role])
    found = set(_PLACEHOLDER_RE.findall(text))
    unknown = sorted(found - allowed)
    if unknown:
        raise TemplateError(
            f"template {name!r} (role {role}) uses unknown placeholders: {', '.join(unknown)}"
        )
    missing = sorted(allowed - found)
    if missing:
        raise TemplateError(
            f"template {name!r} (role {role}) is missing placeholders: {', '.join(missing)}"
        )
    if not any(hint in text for hint in _ROLE_MARKER_HINTS[role]):
        hints = " or ".join(repr(h) for h in _ROLE_MARKER_HINTS[role])
        raise TemplateError(
            f"template {name!r} (role {role}) never instructs the {hints} marker; "
            "its output would be unparseable"
        )


def make_template(role: str, text: str, name: str) -> PromptTemplate:
    validate_template(role, text, name)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:8]
    return PromptTemplate(role=role, template_text=text, id=f"{name}@{digest}")


def _default_text(stem: str) -> str:
    return resources.files("veriloop").joinpath(f"templates/{stem}.txt").read_text("utf-8")


def load_template(role: str, name: str, directory: Path | None = None) -> PromptTemplate:
    """Load ``<name>.txt`` from ``directory``, or the packaged default when no
    directory is given. A directory that lacks the file is an error; there is
    no silent fallback."""
    if directory is None:
        text = _default_text(name)
    else:
        path = Path(directory) / f"{name}.txt"
        if not path.is_file():
            raise TemplateError(f"template file not found: {path}")
        text = path.read_text("utf-8")
    return make_template(role, text, name)


def load_templates(
    directory: Path | None = None,
    names: dict[str, str] | None = None,
    with_judge: bool = False,
) -> TemplateSet:
    """Load the pipeline template set. ``names`` maps role to file stem and
    defaults to the role names themselves."""
    names = dict(names or {})
    stems = {role: names.get(role, role) for role in ("answer", "verify", "summary", "judge")}
    judge_tpl = None
    if with_judge:
        judge_tpl = load_template("judge", stems["judge"], directory)
    return TemplateSet(
        answer=load_template("answer", stems["answer"], directory),
        verify=load_template("verify", stems["verify"], directory),
        summary=load_template("summary", stems["summary"], directory),
        judge=judge_tpl,
    )


def substitute(template_text: str, values: dict[str, str]) -> str:
    """Replace every ``{{name}}`` with its value. Load-time validation
    guarantees the names line up, so this never leaves a placeholder behind."""

    def repl(m: re.Match) -> str:
        return values[m.group(1)]

    return _PLACEHOLDER_RE.sub(repl, template_text)


def flatten_excerpt(text: str, budget: int) -> str:
    """Whitespace-flatten ``text`` and cut it to ``budget`` characters.
    Flattening guarantees a serialized candidate never spans lines."""
    return " ".join(text.split())[:budget]


def serialize_pool(pool: CandidateSet, rendering: CandidateRendering) -> str:
    """Render a candidate pool into the line format summary prompts embed.

    Pools larger than ``max_candidates`` keep the members with the highest
    (loop_index, sample_index): recent rounds carry the refined candidates.
    The kept members are numbered 1..n in pool order.
    """
    members = pool.members
    if len(members) > rendering.max_candidates:
        members = members[-rendering.max_candidates :]
    lines = []
    for i, c in enumerate(members, start=1):
        flag = " (unverified)" if c.unverified_fallback else ""
        head = f"Candidate {i}{flag}: {c.extracted_answer}"
        if rendering.include_full_reasoning:
            excerpt = flatten_excerpt(c.full_text, rendering.per_candidate_chars)
            lines.append(f"{head} - {excerpt}")
        else:
            lines.append(head)
    return "\n".join(lines)


def parse_pool_lines(text: str) -> list[tuple[bool, str]]:
    """Inverse of :func:`serialize_pool` headers: (unverified?, rest-of-line)
    per serialized candidate. Used by the simulation oracle; the rest-of-line
    still contains the excerpt suffix when reasoning was included."""
    return [(bool(m.group(1)), m.group(2)) for m in _POOL_LINE_RE.finditer(text)]


def render_answer(template: PromptTemplate, query: Query) -> str:
    """First-round prompt: pose the question from scratch."""
    if template.role != "answer":
        raise ContractViolation(f"expected an answer template, got role {template.role!r}")
    return substitute(template.template_text, {"question": query.prompt})


def render_verify(
    template: PromptTemplate,
    query: Query,
    candidate: Candidate,
    budget: int | None = None,
) -> str:
    """Verification prompt for one candidate. ``budget`` optionally caps the
    embedded solution text. Over-budget solutions keep their head and tail
    around an elision marker: the conclusion (and its final answer) must
    survive truncation or the verifier has nothing to check."""
    if template.role != "verify":
        raise ContractViolation(f"expected a verify template, got role {template.role!r}")
    solution = candidate.full_text
    if budget is not None and len(solution) > budget:
        head = budget // 2
        tail = budget - head
        solution = solution[:head] + "\n[...]\n" + solution[len(solution) - tail :]
    return substitute(
        template.template_text, {"question": query.prompt, "solution": solution}
    )


def render_summary(
    template: PromptTemplate,
    query: Query,
    pool: CandidateSet,
    rendering: CandidateRendering,
) -> str:
    """Summarization prompt over the current pool.

    The pool must be non-empty; when the verified set is empty the caller is
    expected to pass the unverified fallback pool instead.
    """
    if template.role != "summary":
        raise ContractViolation(f"expected a summary template, got role {template.role!r}")
    if not pool:
        raise ContractViolation(
            f"summary prompt for {query.id!r} requested over an empty pool"
        )
    return substitute(
        template.template_text,
        {"question": query.prompt, "candidates": serialize_pool(pool, rendering)},
    )


def render_judge(
    template: PromptTemplate, query: Query, prediction: str, reference: str
) -> str:
    """Scoring prompt: does the prediction match the reference answer."""
    if template.role != "judge":
        raise ContractViolation(f"expected a judge template, got role {template.role!r}")
    return substitute(
        template.template_text,
        {"question": query.prompt, "prediction": prediction, "reference": reference},
    )
