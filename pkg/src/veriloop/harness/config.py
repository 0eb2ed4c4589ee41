"""Run configuration: strict JSON loading, defaults, and a stable digest.

Every level rejects unknown keys so typos fail before any tokens are spent.
``RunConfig.to_dict`` materializes all defaults into a canonical dict; the
sha256 of its compact JSON form is the run digest that resume uses to refuse
silently-changed configurations.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from ..backend import OracleParams, RemoteSettings, SamplingParams
from ..errors import ConfigError
from ..pipeline import ABLATIONS, PhaseSampling, PipelineConfig
from ..prompts import CandidateRendering

BUNDLED_PREFIX = "bundled:"
EVALUATION_MODES = ("exact_match", "llm_judge")


def _reject_unknown(data: Mapping[str, Any], allowed: tuple[str, ...], context: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {', '.join(unknown)}")


def _build(cls, data: Mapping[str, Any], context: str):
    """Construct a validating dataclass from a dict, converting its
    complaints into ConfigError with the config path attached."""
    try:
        return cls(**data)
    except (TypeError, ValueError, ConfigError) as exc:
        raise ConfigError(f"invalid {context}: {exc}") from exc


@dataclass(frozen=True, slots=True)
class TemplatesConfig:
    """Where templates come from: a directory (None means the packaged
    defaults) and the file stem per role."""

    dir: str | None = None
    answer: str = "answer"
    verify: str = "verify"
    summary: str = "summary"
    judge: str = "judge"

    def names(self) -> dict[str, str]:
        return {
            "answer": self.answer,
            "verify": self.verify,
            "summary": self.summary,
            "judge": self.judge,
        }


@dataclass(frozen=True, slots=True)
class EvaluationConfig:
    mode: str = "exact_match"
    pass_at_ks: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mode not in EVALUATION_MODES:
            raise ConfigError(
                f"evaluation mode must be one of {EVALUATION_MODES}, got {self.mode!r}"
            )
        if self.pass_at_ks is not None:
            object.__setattr__(self, "pass_at_ks", tuple(int(k) for k in self.pass_at_ks))
            if not self.pass_at_ks or any(k < 1 for k in self.pass_at_ks):
                raise ConfigError("pass_at_ks must be a non-empty list of integers >= 1")
            if self.mode != "exact_match":
                raise ConfigError("pass_at_ks requires exact_match evaluation")


@dataclass(frozen=True, slots=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/run"
    dataset: str = BUNDLED_PREFIX + "synthetic15"
    max_concurrency: int = 8
    ablation: str = "full"
    backend_kind: str = "oracle"
    oracle: OracleParams = field(default_factory=OracleParams)
    remote: RemoteSettings | None = None
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    templates: TemplatesConfig = field(default_factory=TemplatesConfig)

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")
        if self.ablation not in ABLATIONS:
            raise ConfigError(
                f"unknown ablation {self.ablation!r}; expected one of {', '.join(ABLATIONS)}"
            )
        if self.backend_kind not in ("oracle", "remote"):
            raise ConfigError("backend kind must be 'oracle' or 'remote'")
        if self.backend_kind == "remote" and self.remote is None:
            raise ConfigError("remote backend selected but no remote settings given")
        ks = self.evaluation.pass_at_ks
        if ks and max(ks) > self.pipeline.samples_per_loop:
            raise ConfigError(
                f"pass_at_ks up to {max(ks)} need samples_per_loop >= {max(ks)}"
            )

    def to_dict(self) -> dict:
        """Canonical resolved form; parses back via run_config_from_dict."""
        sampling = self.pipeline.sampling.resolved()
        backend: dict[str, Any] = {"kind": self.backend_kind}
        if self.backend_kind == "oracle":
            o = self.oracle
            backend.update(
                p_correct=o.p_correct,
                tpr=o.tpr,
                fpr=o.fpr,
                s_present=o.s_present,
                s_absent=o.s_absent,
                answer_tokens=o.answer_tokens,
                verify_tokens=o.verify_tokens,
                summary_tokens=o.summary_tokens,
                wrong_answer_vocab=o.wrong_answer_vocab,
            )
        else:
            r = self.remote
            backend.update(
                base_url=r.base_url,
                model=r.model,
                api_key_env=r.api_key_env,
                timeout=r.timeout,
                max_attempts=r.max_attempts,
                backoff_base=r.backoff_base,
                backoff_cap=r.backoff_cap,
            )

        def sampling_dict(s: SamplingParams) -> dict:
            return {
                "temperature": s.temperature,
                "top_p": s.top_p,
                "top_k": s.top_k,
                "max_tokens": s.max_tokens,
            }

        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": self.dataset,
            "max_concurrency": self.max_concurrency,
            "ablation": self.ablation,
            "backend": backend,
            "pipeline": {
                "loops": self.pipeline.loops,
                "samples_per_loop": self.pipeline.samples_per_loop,
                "verify_enabled": self.pipeline.verify_enabled,
                "summary_enabled": self.pipeline.summary_enabled,
                "empty_set_fallback": self.pipeline.empty_set_fallback,
                "rendering": {
                    "per_candidate_chars": self.pipeline.rendering.per_candidate_chars,
                    "max_candidates": self.pipeline.rendering.max_candidates,
                    "include_full_reasoning": self.pipeline.rendering.include_full_reasoning,
                },
                "sampling": {
                    "answer": sampling_dict(sampling.answer),
                    "verify": sampling_dict(sampling.verify),
                    "summary": sampling_dict(sampling.summary),
                },
            },
            "evaluation": {
                "mode": self.evaluation.mode,
                "pass_at_ks": list(self.evaluation.pass_at_ks)
                if self.evaluation.pass_at_ks
                else None,
            },
            "templates": {
                "dir": self.templates.dir,
                "answer": self.templates.answer,
                "verify": self.templates.verify,
                "summary": self.templates.summary,
                "judge": self.templates.judge,
            },
        }

    def digest(self) -> str:
        """Hash of everything that determines run results.

        Operational knobs (output directory, concurrency) are excluded: a
        resumed run may move hosts or change parallelism without changing
        what it computes, and reports from equal-seed runs must agree.
        """
        return config_digest(self.to_dict())


_OPERATIONAL_KEYS = ("output_dir", "max_concurrency")


def config_digest(config_dict: Mapping[str, Any]) -> str:
    """Digest of a resolved config dict, ignoring operational keys."""
    semantic = {k: v for k, v in config_dict.items() if k not in _OPERATIONAL_KEYS}
    canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_preset(name: str) -> dict:
    """Sampling parameters of a shipped per-model preset."""
    path = resources.files("veriloop").joinpath(f"presets/{name}.json")
    try:
        data = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"unknown sampling preset {name!r}") from None
    _reject_unknown(data, ("temperature", "top_p", "top_k", "max_tokens"), f"preset {name!r}")
    return data


def _sampling_from(data: Mapping[str, Any], base: SamplingParams, context: str) -> SamplingParams:
    _reject_unknown(data, ("temperature", "top_p", "top_k", "max_tokens"), context)
    merged = {
        "temperature": data.get("temperature", base.temperature),
        "top_p": data.get("top_p", base.top_p),
        "top_k": data.get("top_k", base.top_k),
        "max_tokens": data.get("max_tokens", base.max_tokens),
    }
    return _build(SamplingParams, merged, context)


def _pipeline_from(data: Mapping[str, Any]) -> PipelineConfig:
    allowed = (
        "loops",
        "samples_per_loop",
        "verify_enabled",
        "summary_enabled",
        "empty_set_fallback",
        "rendering",
        "sampling",
        "preset",
    )
    _reject_unknown(data, allowed, "pipeline")
    rendering_data = data.get("rendering", {})
    _reject_unknown(
        rendering_data,
        ("per_candidate_chars", "max_candidates", "include_full_reasoning"),
        "pipeline.rendering",
    )
    rendering = _build(CandidateRendering, rendering_data, "pipeline.rendering")

    base = SamplingParams()
    preset = data.get("preset")
    if preset is not None:
        base = _sampling_from(load_preset(preset), base, f"preset {preset!r}")
    sampling_data = data.get("sampling", {})
    _reject_unknown(sampling_data, ("answer", "verify", "summary"), "pipeline.sampling")
    answer = _sampling_from(sampling_data.get("answer", {}), base, "pipeline.sampling.answer")
    verify = (
        _sampling_from(sampling_data["verify"], answer, "pipeline.sampling.verify")
        if "verify" in sampling_data
        else None
    )
    summary = (
        _sampling_from(sampling_data["summary"], answer, "pipeline.sampling.summary")
        if "summary" in sampling_data
        else None
    )

    fields = {
        key: data[key]
        for key in (
            "loops",
            "samples_per_loop",
            "verify_enabled",
            "summary_enabled",
            "empty_set_fallback",
        )
        if key in data
    }
    return _build(
        PipelineConfig,
        {
            **fields,
            "rendering": rendering,
            "sampling": PhaseSampling(answer=answer, verify=verify, summary=summary),
        },
        "pipeline",
    )


def run_config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    allowed = (
        "seed",
        "output_dir",
        "dataset",
        "max_concurrency",
        "ablation",
        "backend",
        "pipeline",
        "evaluation",
        "templates",
    )
    _reject_unknown(data, allowed, "run config")

    backend_data = dict(data.get("backend", {}))
    kind = backend_data.pop("kind", "oracle")
    oracle = OracleParams()
    remote = None
    if kind == "oracle":
        _reject_unknown(
            backend_data,
            (
                "p_correct",
                "tpr",
                "fpr",
                "s_present",
                "s_absent",
                "answer_tokens",
                "verify_tokens",
                "summary_tokens",
                "wrong_answer_vocab",
            ),
            "backend (oracle)",
        )
        oracle = _build(OracleParams, backend_data, "oracle backend settings")
    elif kind == "remote":
        _reject_unknown(
            backend_data,
            (
                "base_url",
                "model",
                "api_key_env",
                "timeout",
                "max_attempts",
                "backoff_base",
                "backoff_cap",
            ),
            "backend (remote)",
        )
        remote = _build(RemoteSettings, backend_data, "remote backend settings")
    else:
        raise ConfigError(f"unknown backend kind {kind!r}")

    evaluation_data = data.get("evaluation", {})
    _reject_unknown(evaluation_data, ("mode", "pass_at_ks"), "evaluation")
    evaluation = _build(
        EvaluationConfig,
        {
            "mode": evaluation_data.get("mode", "exact_match"),
            "pass_at_ks": evaluation_data.get("pass_at_ks"),
        },
        "evaluation",
    )

    templates_data = data.get("templates", {})
    _reject_unknown(templates_data, ("dir", "answer", "verify", "summary", "judge"), "templates")
    templates = _build(TemplatesConfig, templates_data, "templates")

    ablation = str(data.get("ablation", "full"))
    if ablation not in ABLATIONS:
        raise ConfigError(
            f"unknown ablation {ablation!r}; expected one of {', '.join(ABLATIONS)}"
        )
    pipeline = _pipeline_from(data.get("pipeline", {}))
    deltas = ABLATIONS[ablation]
    if deltas:
        # The label owns these fields; an explicit pipeline section cannot
        # silently contradict it.
        try:
            pipeline = replace(pipeline, **deltas)
        except (TypeError, ValueError) as exc:  # pragma: no cover - deltas are static
            raise ConfigError(f"invalid ablation deltas: {exc}") from exc

    return _build(
        RunConfig,
        {
            "seed": int(data.get("seed", 0)),
            "output_dir": str(data.get("output_dir", "runs/run")),
            "dataset": str(data.get("dataset", BUNDLED_PREFIX + "synthetic15")),
            "max_concurrency": int(data.get("max_concurrency", 8)),
            "ablation": ablation,
            "backend_kind": kind,
            "oracle": oracle,
            "remote": remote,
            "pipeline": pipeline,
            "evaluation": evaluation,
            "templates": templates,
        },
        "run config",
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return run_config_from_dict(data)


def apply_overrides(
    config: RunConfig,
    seed: int | None = None,
    ablation: str | None = None,
    loops: int | None = None,
    samples: int | None = None,
    output_dir: str | None = None,
) -> RunConfig:
    """Apply CLI-level overrides. The ablation label rewrites the pipeline
    deltas; explicit --loops/--samples win over both."""
    pipeline = config.pipeline
    label = config.ablation
    if ablation is not None:
        if ablation not in ABLATIONS:
            raise ConfigError(
                f"unknown ablation {ablation!r}; expected one of {', '.join(ABLATIONS)}"
            )
        label = ablation
    pipeline = _build(
        PipelineConfig,
        {
            "loops": pipeline.loops,
            "samples_per_loop": pipeline.samples_per_loop,
            "verify_enabled": pipeline.verify_enabled,
            "summary_enabled": pipeline.summary_enabled,
            "empty_set_fallback": pipeline.empty_set_fallback,
            "rendering": pipeline.rendering,
            "sampling": pipeline.sampling,
            **ABLATIONS[label],
        },
        "pipeline",
    )
    if loops is not None:
        pipeline = replace(pipeline, loops=loops)
    if samples is not None:
        pipeline = replace(pipeline, samples_per_loop=samples)
    out = replace(config, pipeline=pipeline, ablation=label)
    if seed is not None:
        out = replace(out, seed=seed)
    if output_dir is not None:
        out = replace(out, output_dir=output_dir)
    return out
