"""Text-generation backends behind one interface: prompt in, completion out.

Two real implementations live here. ``OracleBackend`` is a deterministic
simulator whose behavior per call is a pure function of (run seed, call tag,
prompt): correctness events are drawn by hashing the tag, never from a shared
RNG stream, so results are identical under any parallel schedule and resume
is trivially consistent. ``RemoteBackend`` speaks the OpenAI-compatible
chat-completions wire format with bounded retries and full-jitter backoff.

The hash chain at the bottom (splitmix64 finalizer over a per-query sha256
key) exists in a scalar form used per call and a numpy form used by the
model validator to simulate millions of calls; the two are bit-identical by
construction and by test.
"""
from __future__ import annotations

import hashlib
import os
import random
import re
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Protocol

import numpy as np

from .core import TokenUsage, extract_answer
from .errors import BackendCallError, ConfigError, ContextOverflowError
from .prompts import parse_pool_lines

PHASES = ("answer", "verify", "summary", "final_summary", "judge")

_MASK64 = (1 << 64) - 1
_MIX_M1 = 0xBF58476D1CE4E5B9
_MIX_M2 = 0x94D049BB133111EB
_LOOP_SALT = 0x9E3779B97F4A7C15
_SAMPLE_SALT = 0xC2B2AE3D27D4EB4F
_PHASE_SALT = 0xFF51AFD7ED558CCD
_PURPOSE_SALT = 0xD6E8FEB86659FD93

_PHASE_CODES = {name: i + 1 for i, name in enumerate(PHASES)}
_PURPOSE_CODES = {"correct": 1, "accept": 2, "wrong_index": 3, "pick": 4, "event": 5}


@dataclass(frozen=True, slots=True, order=True)
class CallTag:
    """Stable identity of one backend call within a run.

    (query_id, loop_index, sample_index, phase) is unique per run; the trace
    and every deterministic draw key off it.
    """

    query_id: str
    loop_index: int
    sample_index: int
    phase: str

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.loop_index < 0 or self.sample_index < 0:
            raise ValueError("loop_index and sample_index must be >= 0")

    def key(self) -> str:
        return f"{self.query_id}|{self.loop_index}|{self.sample_index}|{self.phase}"


@dataclass(frozen=True, slots=True)
class SamplingParams:
    """Decoding parameters forwarded to the backend. ``top_k`` of -1 means
    "not restricted" and is omitted from remote request bodies."""

    temperature: float = 1.0
    top_p: float = 1.0
    top_k: int = -1
    max_tokens: int = 64000

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.top_k != -1 and self.top_k < 1:
            raise ValueError("top_k must be -1 or >= 1")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True, slots=True)
class GenerationRequest:
    """One call. ``template_id`` is provenance for the trace; backends ignore it."""

    prompt: str
    sampling: SamplingParams
    tag: CallTag
    template_id: str | None = None


@dataclass(frozen=True, slots=True)
class GenerationResult:
    text: str
    usage: TokenUsage
    backend_id: str


class Backend(Protocol):
    """Anything that turns a GenerationRequest into a GenerationResult."""

    backend_id: str

    def generate(self, request: GenerationRequest) -> GenerationResult: ...


# ---------------------------------------------------------------------------
# Deterministic per-tag randomness.


def _splitmix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_M1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_M2) & _MASK64
    return x ^ (x >> 31)


def query_key(run_seed: int, query_id: str) -> int:
    """64-bit key for one query under one seed, from sha256 so arbitrary id
    strings spread uniformly and results are platform-independent."""
    digest = hashlib.sha256(f"{run_seed}\x1f{query_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _chain(key: int, loop_index: int, sample_index: int, phase_code: int, purpose_code: int) -> int:
    x = key
    x = _splitmix64(x ^ (((loop_index + 1) * _LOOP_SALT) & _MASK64))
    x = _splitmix64(x ^ (((sample_index + 1) * _SAMPLE_SALT) & _MASK64))
    x = _splitmix64(x ^ ((phase_code * _PHASE_SALT) & _MASK64))
    x = _splitmix64(x ^ ((purpose_code * _PURPOSE_SALT) & _MASK64))
    return x


def uniform_from_key(
    key: int, loop_index: int, sample_index: int, phase: str, purpose: str
) -> float:
    """Uniform [0, 1) draw, a pure function of its arguments."""
    x = _chain(key, loop_index, sample_index, _PHASE_CODES[phase], _PURPOSE_CODES[purpose])
    return (x >> 11) * 2.0**-53


def tag_uniform(run_seed: int, tag: CallTag, purpose: str = "event") -> float:
    """Uniform [0, 1) draw keyed by (run seed, call tag, purpose)."""
    return uniform_from_key(
        query_key(run_seed, tag.query_id), tag.loop_index, tag.sample_index, tag.phase, purpose
    )


def oracle_decide(run_seed: int, tag: CallTag, p_event: float, purpose: str = "event") -> bool:
    """Deterministic Bernoulli(p_event) draw for one call.

    Schedule-independent and replayable: the same (seed, tag, purpose) always
    lands on the same side, and p_event of 0 or 1 is exact for every tag.
    """
    if not (0.0 <= p_event <= 1.0):
        raise ValueError("p_event must be in [0, 1]")
    return tag_uniform(run_seed, tag, purpose) < p_event


def _splitmix64_vec(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(_MIX_M1)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(_MIX_M2)
    return x ^ (x >> np.uint64(31))


def query_key_array(run_seed: int, query_ids: list[str]) -> np.ndarray:
    """Vector of :func:`query_key` values, dtype uint64."""
    return np.array([query_key(run_seed, qid) for qid in query_ids], dtype=np.uint64)


def uniform_grid(
    keys: np.ndarray,
    loop_index: int,
    sample_indices: np.ndarray,
    phase: str,
    purpose: str,
) -> np.ndarray:
    """Vectorized twin of :func:`uniform_from_key`.

    Broadcasts query keys against sample indices and returns a
    (len(keys), len(sample_indices)) float64 array that matches the scalar
    path bit for bit. The model validator leans on this to simulate runs at
    scales the per-call path cannot reach.
    """
    keys = np.asarray(keys, dtype=np.uint64)[:, None]
    samples = np.asarray(sample_indices, dtype=np.uint64)[None, :]
    loop_salt = np.uint64(((loop_index + 1) * _LOOP_SALT) & _MASK64)
    sample_salt = (samples + np.uint64(1)) * np.uint64(_SAMPLE_SALT)
    phase_salt = np.uint64((_PHASE_CODES[phase] * _PHASE_SALT) & _MASK64)
    purpose_salt = np.uint64((_PURPOSE_CODES[purpose] * _PURPOSE_SALT) & _MASK64)
    x = _splitmix64_vec(keys ^ loop_salt)
    x = _splitmix64_vec(x ^ sample_salt)
    x = _splitmix64_vec(x ^ phase_salt)
    x = _splitmix64_vec(x ^ purpose_salt)
    return (x >> np.uint64(11)).astype(np.float64) * 2.0**-53


# ---------------------------------------------------------------------------
# Simulation oracle.


@dataclass(frozen=True, slots=True)
class OracleParams:
    """Generative model the simulation oracle follows.

    p_correct is the chance a fresh first-round answer is right; tpr/fpr are
    the verifier's accept rates on correct/incorrect candidates; s_present
    and s_absent are the summarizer's success rates depending on whether the
    pool holds at least one accepted correct candidate. Token fields are the
    synthetic completion cost charged per call of each phase.
    """

    p_correct: float = 0.5
    tpr: float = 0.9
    fpr: float = 0.1
    s_present: float = 0.95
    s_absent: float = 0.1
    answer_tokens: int = 900
    verify_tokens: int = 350
    summary_tokens: int = 500
    wrong_answer_vocab: int = 8

    def __post_init__(self):
        for name in ("p_correct", "tpr", "fpr", "s_present", "s_absent"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("answer_tokens", "verify_tokens", "summary_tokens"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.wrong_answer_vocab < 1:
            raise ValueError("wrong_answer_vocab must be >= 1")


def _estimate_prompt_tokens(prompt: str) -> int:
    # Rough 4-chars-per-token accounting; deterministic is what matters here.
    return max(1, len(prompt) // 4)


@lru_cache(maxsize=4096)
def _pool_has_accepted_correct(prompt: str, truth: str) -> bool:
    """Does a serialized pool inside ``prompt`` hold an accepted candidate
    whose answer equals ``truth``? Unverified-fallback members are ignored:
    they were never admitted, so they must not flip the summarizer's odds."""
    marker = truth + " - "
    for unverified, rest in parse_pool_lines(prompt):
        if unverified:
            continue
        if rest == truth or rest.startswith(marker):
            return True
    return False


class OracleBackend:
    """Deterministic simulator with correctness embedded in its own text.

    A correct generation answers ``\\boxed{<ground truth>}``; an incorrect one
    answers ``\\boxed{WRONG-j}`` with j hash-picked from a small vocabulary so
    wrong answers split votes realistically. Verify calls read the candidate
    text out of the prompt (the last boxed answer) and accept with tpr or fpr
    accordingly; summary calls succeed with s_present when the serialized
    pool holds an accepted correct member, else s_absent. Judge calls compare
    the predicted/reference lines exactly.

    The prompt parsing only understands structures this package renders; the
    oracle is a measurement instrument for this pipeline, not a general
    model stand-in.
    """

    backend_id = "oracle"

    _JUDGE_RE = re.compile(
        r"^Predicted answer: (?P<pred>.*)$\n^Reference answer: (?P<ref>.*)$", re.MULTILINE
    )

    def __init__(self, params: OracleParams, run_seed: int, ground_truth: Mapping[str, str]):
        for qid, truth in ground_truth.items():
            if not truth:
                raise ConfigError(f"oracle needs a non-empty ground truth for query {qid!r}")
        self.params = params
        self.run_seed = run_seed
        self.ground_truth = dict(ground_truth)
        self._keys: dict[str, int] = {}

    def _key(self, query_id: str) -> int:
        key = self._keys.get(query_id)
        if key is None:
            key = query_key(self.run_seed, query_id)
            self._keys[query_id] = key
        return key

    def _truth(self, tag: CallTag) -> str:
        try:
            return self.ground_truth[tag.query_id]
        except KeyError:
            raise BackendCallError(
                f"oracle has no ground truth for query {tag.query_id!r}", call_tag=tag
            ) from None

    def _uniform(self, tag: CallTag, purpose: str) -> float:
        return uniform_from_key(
            self._key(tag.query_id), tag.loop_index, tag.sample_index, tag.phase, purpose
        )

    def _answer_text(self, tag: CallTag, correct: bool) -> str:
        if correct:
            answer = self._truth(tag)
        else:
            u = self._uniform(tag, "wrong_index")
            answer = f"WRONG-{int(u * self.params.wrong_answer_vocab) + 1}"
        return f"Worked through the problem step by step.\n\\boxed{{{answer}}}"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        tag = request.tag
        p = self.params
        phase = tag.phase
        if phase != "judge":
            # Fail on unknown queries up front, not only on the draws that
            # happen to need the truth string.
            self._truth(tag)
        if phase == "answer":
            correct = self._uniform(tag, "correct") < p.p_correct
            text = self._answer_text(tag, correct)
            completion = p.answer_tokens
        elif phase == "verify":
            candidate_answer = extract_answer(request.prompt)
            rate = p.tpr if candidate_answer == self._truth(tag) else p.fpr
            accepted = self._uniform(tag, "accept") < rate
            word = "CORRECT" if accepted else "INCORRECT"
            text = f"Re-derived the solution and compared.\nFINAL VERDICT: {word}"
            completion = p.verify_tokens
        elif phase in ("summary", "final_summary"):
            rate = (
                p.s_present
                if _pool_has_accepted_correct(request.prompt, self._truth(tag))
                else p.s_absent
            )
            correct = self._uniform(tag, "correct") < rate
            text = self._answer_text(tag, correct)
            completion = p.summary_tokens
        elif phase == "judge":
            m = self._JUDGE_RE.search(request.prompt)
            if m is None:
                raise BackendCallError(
                    "oracle judge could not find prediction/reference lines", call_tag=tag
                )
            word = "CORRECT" if m.group("pred") == m.group("ref") else "INCORRECT"
            text = f"Compared the two answers.\nFINAL VERDICT: {word}"
            completion = p.verify_tokens
        else:  # pragma: no cover - CallTag already rejects unknown phases
            raise BackendCallError(f"unsupported phase {phase!r}", call_tag=tag)
        usage = TokenUsage(_estimate_prompt_tokens(request.prompt), completion)
        return GenerationResult(text=text, usage=usage, backend_id=self.backend_id)


# ---------------------------------------------------------------------------
# OpenAI-compatible remote backend.

_RETRYABLE_STATUS = frozenset({429}) | frozenset(range(500, 600))
_CONTEXT_OVERFLOW_RE = re.compile(
    r"context|maximum (context )?length|too many tokens|token limit", re.IGNORECASE
)


@dataclass(frozen=True, slots=True)
class RemoteSettings:
    """Connection settings for an OpenAI-compatible endpoint. The API key is
    read from ``api_key_env`` at call time and never stored in configs."""

    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 120.0
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_cap: float = 30.0

    def __post_init__(self):
        if not self.base_url:
            raise ConfigError("remote backend needs a base_url")
        if not self.model:
            raise ConfigError("remote backend needs a model name")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.backoff_base <= 0 or self.backoff_cap <= 0:
            raise ConfigError("backoff parameters must be positive")


class RemoteBackend:
    """Chat-completions client with bounded, jittered retries.

    Retries transport failures, 429 and 5xx with full-jitter exponential
    backoff (sleep ~ U[0, min(cap, base * 2^attempt)]). Other 4xx responses
    are permanent; among them, context-window overflows raise their own
    error type so callers can shrink prompts instead of retrying.
    """

    def __init__(
        self,
        settings: RemoteSettings,
        session=None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        import requests

        self.settings = settings
        self.backend_id = f"remote:{settings.model}"
        self._session = session if session is not None else requests.Session()
        self._sleep = sleep
        self._rng = rng if rng is not None else random.Random()
        self._url = settings.base_url.rstrip("/") + "/chat/completions"

    def _headers(self, tag: CallTag) -> dict[str, str]:
        key = os.environ.get(self.settings.api_key_env)
        if not key:
            raise BackendCallError(
                f"environment variable {self.settings.api_key_env} is not set",
                call_tag=tag,
            )
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def _body(self, request: GenerationRequest) -> dict:
        s = request.sampling
        body = {
            "model": self.settings.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": s.temperature,
            "top_p": s.top_p,
            "max_tokens": s.max_tokens,
        }
        if s.top_k != -1:
            body["top_k"] = s.top_k
        return body

    def _parse(self, payload: dict, tag: CallTag) -> GenerationResult:
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendCallError(f"malformed completion payload: {exc!r}", call_tag=tag)
        usage = payload.get("usage") or {}
        return GenerationResult(
            text=text,
            usage=TokenUsage(
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            ),
            backend_id=self.backend_id,
        )

    def generate(self, request: GenerationRequest) -> GenerationResult:
        import requests

        headers = self._headers(request.tag)
        body = self._body(request)
        last_failure = "no attempt made"
        for attempt in range(self.settings.max_attempts):
            if attempt:
                delay = min(
                    self.settings.backoff_cap,
                    self.settings.backoff_base * 2 ** (attempt - 1),
                )
                self._sleep(self._rng.uniform(0.0, delay))
            try:
                response = self._session.post(
                    self._url, json=body, headers=headers, timeout=self.settings.timeout
                )
            except requests.RequestException as exc:
                last_failure = f"transport error: {exc}"
                continue
            status = response.status_code
            if status == 200:
                return self._parse(response.json(), request.tag)
            detail = response.text[:500]
            if status in _RETRYABLE_STATUS:
                last_failure = f"HTTP {status}: {detail}"
                continue
            if _CONTEXT_OVERFLOW_RE.search(detail):
                raise ContextOverflowError(
                    f"HTTP {status}, prompt exceeds the context window: {detail}",
                    call_tag=request.tag,
                )
            raise BackendCallError(f"HTTP {status}: {detail}", call_tag=request.tag)
        raise BackendCallError(
            f"gave up after {self.settings.max_attempts} attempts; last failure: {last_failure}",
            call_tag=request.tag,
        )
