"""Monte Carlo validation of the closed-form accuracy model.

Each grid point is simulated two ways and compared against the formula:

* a vectorized simulator that draws the exact uniforms the oracle backend
  would draw (same hash chain, bit for bit) for a single-round run, which
  makes 100k-trial points cheap, and
* the real string pipeline on a small prefix of the same query ids, which
  must agree with the vectorized rows exactly, candidate for candidate.

The second route guards the first: if the fast path ever drifted from what
the pipeline actually does, the bitwise check fails before any statistics
are computed. A point passes when |empirical - analytical| stays within
``tolerance_sigmas`` binomial standard errors.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..analytics import AnalyticalParams, pass1_final
from ..backend import OracleBackend, OracleParams, query_key_array, uniform_grid
from ..core import Query, canonicalize_answer
from ..errors import ConfigError
from ..pipeline import PipelineConfig, run_query
from ..prompts import CandidateRendering, load_templates

DEFAULT_TRIALS = 100_000
DEFAULT_PIPELINE_CHECK = 256
_POINT_FIELDS = ("p_correct", "tpr", "fpr", "s_present", "s_absent", "n_total")
_MC_TRUTH = "42"


@dataclass(frozen=True, slots=True)
class ValidationPoint:
    """One oracle parameterization to check the formula against."""

    p_correct: float
    tpr: float
    fpr: float
    s_present: float
    s_absent: float
    n_total: int

    def analytical(self) -> AnalyticalParams:
        return AnalyticalParams(
            p_correct=self.p_correct,
            tpr=self.tpr,
            fpr=self.fpr,
            s_present=self.s_present,
            s_absent=self.s_absent,
            n_total=self.n_total,
        )

    def oracle(self) -> OracleParams:
        return OracleParams(
            p_correct=self.p_correct,
            tpr=self.tpr,
            fpr=self.fpr,
            s_present=self.s_present,
            s_absent=self.s_absent,
        )


# Twelve points spanning every axis value in both directions: weak and strong
# samplers, lenient and strict verifiers, both summary regimes, both widths.
DEFAULT_GRID: tuple[ValidationPoint, ...] = (
    ValidationPoint(0.1, 0.70, 0.05, 0.9, 0.0, 8),
    ValidationPoint(0.1, 0.95, 0.30, 1.0, 0.2, 32),
    ValidationPoint(0.1, 0.95, 0.05, 1.0, 0.2, 8),
    ValidationPoint(0.1, 0.70, 0.30, 0.9, 0.0, 32),
    ValidationPoint(0.5, 0.70, 0.30, 1.0, 0.2, 8),
    ValidationPoint(0.5, 0.95, 0.05, 0.9, 0.0, 32),
    ValidationPoint(0.5, 0.95, 0.30, 0.9, 0.0, 8),
    ValidationPoint(0.5, 0.70, 0.05, 1.0, 0.2, 32),
    ValidationPoint(0.9, 0.70, 0.05, 0.9, 0.0, 8),
    ValidationPoint(0.9, 0.95, 0.30, 1.0, 0.2, 8),
    ValidationPoint(0.9, 0.70, 0.30, 1.0, 0.2, 32),
    ValidationPoint(0.9, 0.95, 0.05, 0.9, 0.0, 32),
)


def simulate_point(
    point: ValidationPoint, trials: int, seed: int, id_prefix: str = "mc-"
) -> np.ndarray:
    """Single-round outcomes for ``trials`` queries, as a boolean vector.

    Row i is exactly what the pipeline would produce for the query id
    ``f"{id_prefix}{i:07d}"`` at this seed: same answer draws, same verify
    draws, same final summary draw.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    ids = [f"{id_prefix}{i:07d}" for i in range(trials)]
    keys = query_key_array(seed, ids)
    samples = np.arange(1, point.n_total + 1, dtype=np.uint64)
    u_answer = uniform_grid(keys, 0, samples, "answer", "correct")
    correct = u_answer < point.p_correct
    u_verify = uniform_grid(keys, 0, samples, "verify", "accept")
    accepted = u_verify < np.where(correct, point.tpr, point.fpr)
    # An empty verified pool falls back to unverified candidates, which the
    # summary treats the same as a pool with no accepted correct member.
    pool_rate = np.where((correct & accepted).any(axis=1), point.s_present, point.s_absent)
    u_final = uniform_grid(
        keys, 0, np.zeros(1, dtype=np.uint64), "final_summary", "correct"
    )[:, 0]
    return u_final < pool_rate


def _pipeline_reference(
    point: ValidationPoint, count: int, seed: int, id_prefix: str
) -> np.ndarray:
    """Run the real pipeline for the first ``count`` query ids of a point."""
    config = PipelineConfig(
        loops=0,
        samples_per_loop=point.n_total,
        rendering=CandidateRendering(
            per_candidate_chars=160,
            max_candidates=max(32, point.n_total),
            include_full_reasoning=False,
        ),
    )
    templates = load_templates()
    ids = [f"{id_prefix}{i:07d}" for i in range(count)]
    backend = OracleBackend(point.oracle(), seed, {qid: _MC_TRUTH for qid in ids})
    results = []
    for qid in ids:
        outcome = run_query(
            Query(id=qid, prompt=f"Compute the value for case {qid}."),
            config,
            backend,
            templates,
            seed,
        )
        results.append(canonicalize_answer(outcome.final_answer) == _MC_TRUTH)
    return np.array(results, dtype=bool)


@dataclass(frozen=True, slots=True)
class PointResult:
    point: ValidationPoint
    analytical: float
    mc_estimate: float
    mc_stderr: float
    abs_diff: float
    sigmas: float
    pipeline_checked: int
    pipeline_mismatches: int
    status: str

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def validate_model(
    points: Sequence[ValidationPoint] = DEFAULT_GRID,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    pipeline_check: int = DEFAULT_PIPELINE_CHECK,
    tolerance_sigmas: float = 4.0,
    analytical_fn: Callable[[AnalyticalParams], float] = pass1_final,
) -> list[PointResult]:
    """Compare Monte Carlo estimates against the closed form on each point.

    ``analytical_fn`` is injectable so a corrupted formula can be shown to
    fail (the validator must reject a wrong model, not only accept the right
    one). ``pipeline_check`` rows per point are recomputed through the real
    pipeline and must match the simulator exactly.
    """
    results = []
    for index, point in enumerate(points):
        prefix = f"mc{index:02d}-"
        finals = simulate_point(point, trials, seed, prefix)
        checked = min(pipeline_check, trials)
        mismatches = 0
        if checked:
            reference = _pipeline_reference(point, checked, seed, prefix)
            mismatches = int(np.sum(reference != finals[:checked]))
        analytical = analytical_fn(point.analytical())
        estimate = float(np.mean(finals))
        stderr = math.sqrt(analytical * (1.0 - analytical) / trials)
        diff = abs(estimate - analytical)
        if stderr > 0.0:
            sigmas = diff / stderr
        else:
            sigmas = 0.0 if diff == 0.0 else math.inf
        ok = sigmas <= tolerance_sigmas and mismatches == 0
        results.append(
            PointResult(
                point=point,
                analytical=analytical,
                mc_estimate=estimate,
                mc_stderr=stderr,
                abs_diff=diff,
                sigmas=sigmas,
                pipeline_checked=checked,
                pipeline_mismatches=mismatches,
                status="ok" if ok else "fail",
            )
        )
    return results


def _fmt(value: float) -> str:
    return format(value, ".12g")


def render_validation_csv(results: Sequence[PointResult]) -> str:
    lines = [
        ",".join(
            _POINT_FIELDS
            + ("analytical", "mc_estimate", "mc_stderr", "abs_diff", "sigmas")
            + ("pipeline_checked", "pipeline_mismatches", "status")
        )
    ]
    for r in results:
        p = r.point
        lines.append(
            ",".join(
                [
                    _fmt(p.p_correct),
                    _fmt(p.tpr),
                    _fmt(p.fpr),
                    _fmt(p.s_present),
                    _fmt(p.s_absent),
                    str(p.n_total),
                    _fmt(r.analytical),
                    _fmt(r.mc_estimate),
                    _fmt(r.mc_stderr),
                    _fmt(r.abs_diff),
                    _fmt(r.sigmas),
                    str(r.pipeline_checked),
                    str(r.pipeline_mismatches),
                    r.status,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def sweep_rows(
    points: Sequence[ValidationPoint],
    trials: int | None = None,
    seed: int = 0,
) -> str:
    """Analytical values for a grid, optionally alongside MC estimates."""
    header = list(_POINT_FIELDS) + ["analytical"]
    if trials:
        header += ["mc_estimate", "mc_stderr"]
    lines = [",".join(header)]
    for index, point in enumerate(points):
        value = pass1_final(point.analytical())
        row = [
            _fmt(point.p_correct),
            _fmt(point.tpr),
            _fmt(point.fpr),
            _fmt(point.s_present),
            _fmt(point.s_absent),
            str(point.n_total),
            _fmt(value),
        ]
        if trials:
            finals = simulate_point(point, trials, seed, f"sw{index:02d}-")
            row.append(_fmt(float(np.mean(finals))))
            row.append(_fmt(math.sqrt(value * (1.0 - value) / trials)))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _point_from_dict(data: dict, context: str) -> ValidationPoint:
    if not isinstance(data, dict):
        raise ConfigError(f"{context}: each grid point must be an object")
    unknown = set(data) - set(_POINT_FIELDS)
    if unknown:
        raise ConfigError(f"{context}: unknown point fields {sorted(unknown)}")
    missing = [f for f in _POINT_FIELDS if f not in data]
    if missing:
        raise ConfigError(f"{context}: point is missing fields {missing}")
    try:
        point = ValidationPoint(
            p_correct=float(data["p_correct"]),
            tpr=float(data["tpr"]),
            fpr=float(data["fpr"]),
            s_present=float(data["s_present"]),
            s_absent=float(data["s_absent"]),
            n_total=int(data["n_total"]),
        )
        point.analytical()  # range checks live on the analytical params
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc
    return point


def load_grid(path: str | Path) -> tuple[list[ValidationPoint], int | None]:
    """Read a grid file: either explicit ``points`` or ``axes`` to cross.

    Returns the points and the optional trial count the file requests.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: grid file must hold an object")
    unknown = set(data) - {"points", "axes", "trials"}
    if unknown:
        raise ConfigError(f"{path}: unknown grid keys {sorted(unknown)}")
    if ("points" in data) == ("axes" in data):
        raise ConfigError(f"{path}: grid needs exactly one of 'points' or 'axes'")
    trials = data.get("trials")
    if trials is not None and (not isinstance(trials, int) or trials < 1):
        raise ConfigError(f"{path}: trials must be a positive integer")
    if "points" in data:
        raw = data["points"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{path}: 'points' must be a non-empty list")
        return [_point_from_dict(p, str(path)) for p in raw], trials
    axes = data["axes"]
    if not isinstance(axes, dict):
        raise ConfigError(f"{path}: 'axes' must be an object")
    unknown = set(axes) - set(_POINT_FIELDS)
    if unknown:
        raise ConfigError(f"{path}: unknown axes {sorted(unknown)}")
    missing = [f for f in _POINT_FIELDS if f not in axes]
    if missing:
        raise ConfigError(f"{path}: axes missing {missing}")
    values = []
    for field in _POINT_FIELDS:
        axis = axes[field]
        if not isinstance(axis, list) or not axis:
            raise ConfigError(f"{path}: axis {field!r} must be a non-empty list")
        values.append(axis)
    points = [
        _point_from_dict(dict(zip(_POINT_FIELDS, combo)), str(path))
        for combo in itertools.product(*values)
    ]
    return points, trials
