"""Exception types raised across the package.

Everything derives from VeriloopError so callers can catch the package's
failures with one clause while still telling configuration mistakes apart
from runtime ones.
"""
from __future__ import annotations


class VeriloopError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(VeriloopError):
    """A caller broke a documented precondition (e.g. verdictless batch member)."""


class TemplateError(VeriloopError):
    """A prompt template failed load-time validation."""


class ConfigError(VeriloopError):
    """A run configuration is malformed, inconsistent, or carries unknown keys."""


class DatasetError(VeriloopError):
    """A dataset file could not be parsed into queries."""


class TraceError(VeriloopError):
    """A trace file is unreadable, inconsistent with the run, or incomplete for replay."""


class BackendCallError(VeriloopError):
    """A backend call failed permanently.

    Carries the call tag so the harness can mark the exact call in the trace.
    """

    def __init__(self, message: str, call_tag=None):
        super().__init__(message)
        self.call_tag = call_tag


class ContextOverflowError(BackendCallError):
    """The prompt exceeded the remote model's context window; never retried."""


class QueryFailedError(VeriloopError):
    """A single query could not produce a final answer; the run continues."""

    def __init__(self, query_id: str, reason: str):
        super().__init__(f"query {query_id!r} failed: {reason}")
        self.query_id = query_id
        self.reason = reason


class VoteError(VeriloopError):
    """Majority voting had no votable answers."""


class EvaluationError(VeriloopError):
    """An answer could not be scored (e.g. the judge call failed)."""
