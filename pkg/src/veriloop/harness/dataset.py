"""Dataset loading: line-delimited JSON, one query per line.

Each record needs ``id`` and ``question``; ``answer`` is the optional ground
truth. Extra fields are tolerated (datasets carry metadata), duplicate ids
and malformed lines are not. ``bundled:<name>`` resolves to a dataset
shipped inside the package.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..core import Query
from ..errors import DatasetError
from .config import BUNDLED_PREFIX


def _read_text(spec: str) -> tuple[str, str]:
    if spec.startswith(BUNDLED_PREFIX):
        name = spec[len(BUNDLED_PREFIX) :]
        ref = resources.files("veriloop").joinpath(f"data/{name}.jsonl")
        try:
            return ref.read_text("utf-8"), spec
        except FileNotFoundError:
            raise DatasetError(f"no bundled dataset named {name!r}") from None
    path = Path(spec)
    try:
        return path.read_text("utf-8"), str(path)
    except FileNotFoundError:
        raise DatasetError(f"dataset file not found: {path}") from None


def load_dataset(spec: str) -> list[Query]:
    """Parse a dataset into queries, preserving file order."""
    text, label = _read_text(spec)
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{label}:{lineno}: not valid JSON ({exc.msg})") from None
        if not isinstance(record, dict):
            raise DatasetError(f"{label}:{lineno}: record must be a JSON object")
        try:
            qid = record["id"]
            question = record["question"]
        except KeyError as exc:
            raise DatasetError(f"{label}:{lineno}: missing field {exc.args[0]!r}") from None
        answer = record.get("answer")
        if not isinstance(qid, str) or not isinstance(question, str):
            raise DatasetError(f"{label}:{lineno}: id and question must be strings")
        if answer is not None and not isinstance(answer, str):
            raise DatasetError(f"{label}:{lineno}: answer must be a string when present")
        if qid in seen:
            raise DatasetError(f"{label}:{lineno}: duplicate id {qid!r}")
        seen.add(qid)
        try:
            queries.append(Query(id=qid, prompt=question, ground_truth=answer))
        except ValueError as exc:
            raise DatasetError(f"{label}:{lineno}: {exc}") from None
    if not queries:
        raise DatasetError(f"{label}: no records")
    return queries
