"""Append-only run trace: one JSON line per backend call, flushed as written.

The trace is the run's source of truth. Every call appends exactly one
record when it finishes (successfully or not); resume reads the file back
and replays successful records instead of re-issuing their calls. A torn
final line is the signature of a mid-write interruption and is dropped;
damage anywhere else refuses to load so a corrupted run cannot silently
continue.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from ..backend import CallTag, GenerationResult
from ..core import TokenUsage
from ..errors import TraceError

_FIELDS = (
    "query_id",
    "loop_index",
    "sample_index",
    "phase",
    "template_id",
    "prompt_sha256",
    "response",
    "prompt_tokens",
    "completion_tokens",
    "total_tokens",
    "backend_id",
    "error",
    "started_at",
    "finished_at",
)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    tag: CallTag
    prompt_sha256: str
    response: str | None
    usage: TokenUsage
    backend_id: str | None
    template_id: str | None
    error: str | None
    started_at: float
    finished_at: float

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json_line(self) -> str:
        payload = {
            "query_id": self.tag.query_id,
            "loop_index": self.tag.loop_index,
            "sample_index": self.tag.sample_index,
            "phase": self.tag.phase,
            "template_id": self.template_id,
            "prompt_sha256": self.prompt_sha256,
            "response": self.response,
            "prompt_tokens": self.usage.prompt_tokens,
            "completion_tokens": self.usage.completion_tokens,
            "total_tokens": self.usage.total_tokens,
            "backend_id": self.backend_id,
            "error": self.error,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)

    @staticmethod
    def from_dict(payload: dict, where: str) -> "TraceRecord":
        missing = [f for f in _FIELDS if f not in payload]
        if missing:
            raise TraceError(f"{where}: record is missing field(s) {', '.join(missing)}")
        unknown = sorted(set(payload) - set(_FIELDS))
        if unknown:
            raise TraceError(f"{where}: record has unknown field(s) {', '.join(unknown)}")
        usage = TokenUsage(int(payload["prompt_tokens"]), int(payload["completion_tokens"]))
        if usage.total_tokens != int(payload["total_tokens"]):
            raise TraceError(f"{where}: token totals do not add up")
        try:
            tag = CallTag(
                query_id=payload["query_id"],
                loop_index=int(payload["loop_index"]),
                sample_index=int(payload["sample_index"]),
                phase=payload["phase"],
            )
        except ValueError as exc:
            raise TraceError(f"{where}: {exc}") from None
        return TraceRecord(
            tag=tag,
            prompt_sha256=payload["prompt_sha256"],
            response=payload["response"],
            usage=usage,
            backend_id=payload["backend_id"],
            template_id=payload["template_id"],
            error=payload["error"],
            started_at=float(payload["started_at"]),
            finished_at=float(payload["finished_at"]),
        )

    def to_result(self) -> GenerationResult:
        if not self.ok or self.response is None:
            raise TraceError(f"record for {self.tag.key()} holds a failure, not a result")
        return GenerationResult(
            text=self.response,
            usage=self.usage,
            backend_id=self.backend_id or "replay",
        )


class TraceWriter:
    """Thread-safe appender. One line per record, flushed immediately, so an
    interrupted run loses at most the record being written."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._drop_torn_tail()
        self._file = open(self.path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def _drop_torn_tail(self) -> None:
        # Appending after a torn final line would weld the fragment onto the
        # next record; cut back to the last record boundary first.
        if not self.path.exists():
            return
        raw = self.path.read_bytes()
        if not raw or raw.endswith(b"\n"):
            return
        with open(self.path, "rb+") as f:
            f.truncate(raw.rfind(b"\n") + 1)

    def append(self, record: TraceRecord) -> None:
        line = record.to_json_line()
        with self._lock:
            self._file.write(line + "\n")
            self._file.flush()

    def close(self) -> None:
        with self._lock:
            self._file.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def read_trace(path: str | Path) -> list[TraceRecord]:
    """Load a trace, dropping at most one torn trailing line.

    A final line without a newline (or that stops parsing mid-object) is the
    leftover of an interrupted write and is discarded; the call it belonged
    to never completed, so re-running it is exactly what resume does anyway.
    Malformed JSON on any *complete* line is corruption and raises.
    """
    path = Path(path)
    records: list[TraceRecord] = []
    raw = path.read_text("utf-8")
    if not raw:
        return records
    complete_tail = raw.endswith("\n")
    lines = raw.splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        last = lineno == len(lines)
        try:
            payload = json.loads(line)
            record = TraceRecord.from_dict(payload, f"{path}:{lineno}")
        except (json.JSONDecodeError, TraceError):
            if last and not complete_tail:
                break
            raise TraceError(
                f"{path}:{lineno}: unreadable trace record; "
                "resume refused, rerun with --fresh to discard the trace"
            ) from None
        records.append(record)
    return records


def replay_map(records: list[TraceRecord]) -> dict[str, TraceRecord]:
    """Successful records by tag key. Failures are omitted (they get retried)
    and two successes for one tag mean the trace is corrupt."""
    out: dict[str, TraceRecord] = {}
    for record in records:
        if not record.ok:
            continue
        key = record.tag.key()
        if key in out:
            raise TraceError(f"duplicate successful record for call {key}")
        out[key] = record
    return out
