"""Sample, verify, and summarize: an iterative answer-refinement pipeline.

The engine draws a batch of candidate answers, checks each one with a
verification call, and condenses the accepted pool with a summary call,
repeating for a configured number of loops before a final summary produces
the answer. Everything downstream of a text-in/text-out backend protocol is
deterministic given a run seed, including the bundled oracle backend, which
makes runs replayable and the closed-form accuracy model testable by Monte
Carlo.
"""

__version__ = "0.1.0"

from .analytics import (
    AnalyticalParams,
    answer_entropy,
    p_has_correct,
    pass1_final,
    pass1_final_general,
    pass_at_k,
    pass_at_k_curve,
    posterior_correct,
)
from .backend import (
    Backend,
    CallTag,
    GenerationRequest,
    GenerationResult,
    OracleBackend,
    OracleParams,
    RemoteBackend,
    RemoteSettings,
    SamplingParams,
)
from .core import (
    UNEXTRACTABLE,
    Candidate,
    CandidateSet,
    Query,
    TokenUsage,
    VerificationVerdict,
    canonicalize_answer,
    extract_answer,
    judge,
)
from .errors import (
    BackendCallError,
    ConfigError,
    ContextOverflowError,
    ContractViolation,
    DatasetError,
    EvaluationError,
    QueryFailedError,
    TemplateError,
    TraceError,
    VeriloopError,
    VoteError,
)
from .pipeline import (
    ABLATIONS,
    PhaseSampling,
    PipelineConfig,
    QueryOutcome,
    ablation_mode,
    apply_ablation,
    majority_vote,
    run_query,
)
from .prompts import (
    CandidateRendering,
    PromptTemplate,
    TemplateSet,
    load_template,
    load_templates,
    serialize_pool,
)

__all__ = [
    "__version__",
    "ABLATIONS",
    "AnalyticalParams",
    "Backend",
    "BackendCallError",
    "CallTag",
    "Candidate",
    "CandidateRendering",
    "CandidateSet",
    "ConfigError",
    "ContextOverflowError",
    "ContractViolation",
    "DatasetError",
    "EvaluationError",
    "GenerationRequest",
    "GenerationResult",
    "OracleBackend",
    "OracleParams",
    "PhaseSampling",
    "PipelineConfig",
    "PromptTemplate",
    "Query",
    "QueryFailedError",
    "QueryOutcome",
    "RemoteBackend",
    "RemoteSettings",
    "SamplingParams",
    "TemplateError",
    "TemplateSet",
    "TokenUsage",
    "TraceError",
    "UNEXTRACTABLE",
    "VerificationVerdict",
    "VeriloopError",
    "VoteError",
    "ablation_mode",
    "answer_entropy",
    "apply_ablation",
    "canonicalize_answer",
    "extract_answer",
    "judge",
    "load_template",
    "load_templates",
    "majority_vote",
    "p_has_correct",
    "pass1_final",
    "pass1_final_general",
    "pass_at_k",
    "pass_at_k_curve",
    "posterior_correct",
    "run_query",
    "serialize_pool",
]
