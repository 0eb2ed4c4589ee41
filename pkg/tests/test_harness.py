import hashlib
import json
from dataclasses import replace

import pytest

from veriloop.backend import (
    CallTag,
    GenerationRequest,
    OracleBackend,
    OracleParams,
    RemoteSettings,
    SamplingParams,
)
from veriloop.core import Query, TokenUsage
from veriloop.errors import (
    BackendCallError,
    ConfigError,
    DatasetError,
    EvaluationError,
    TraceError,
)
from veriloop.harness.config import (
    EvaluationConfig,
    RunConfig,
    apply_overrides,
    config_digest,
    load_config,
    load_preset,
    run_config_from_dict,
)
from veriloop.harness.dataset import load_dataset
from veriloop.harness.report import build_report
from veriloop.harness.runner import (
    CONFIG_NAME,
    REPORT_NAME,
    TRACE_NAME,
    ReplayBackend,
    evaluate_answer,
    rebuild_report,
    run_benchmark,
)
from veriloop.harness.trace import TraceRecord, TraceWriter, read_trace, replay_map
from veriloop.pipeline import PipelineConfig
from veriloop.prompts import CandidateRendering, load_templates

FAST_RENDER = CandidateRendering(
    per_candidate_chars=120, max_candidates=16, include_full_reasoning=False
)
FAST_PIPELINE = PipelineConfig(loops=1, samples_per_loop=3, rendering=FAST_RENDER)
PRESET_NAMES = (
    "gpt-oss-120b",
    "seed-oss-36b-instruct",
    "qwen3-30b-a3b-thinking-2507",
    "qwen3-30b-a3b-instruct-2507",
    "qwen3-4b-thinking-2507",
    "qwen3-4b-instruct-2507",
    "ernie-4.5-21b-a3b-thinking",
    "ernie-4.5-vl-28b-a3b",
    "qwen2.5-omni-7b",
)


def small_config(tmp_path, **kw):
    fields = {
        "seed": 11,
        "output_dir": str(tmp_path / "run"),
        "max_concurrency": 4,
        "pipeline": FAST_PIPELINE,
    }
    fields.update(kw)
    return RunConfig(**fields)


def trace_record(
    qid="q1",
    loop=0,
    sample=1,
    phase="answer",
    response="ok",
    error=None,
    prompt_hash="h" * 64,
    prompt_tokens=10,
    completion_tokens=20,
):
    return TraceRecord(
        tag=CallTag(qid, loop, sample, phase),
        prompt_sha256=prompt_hash,
        response=response,
        usage=TokenUsage(prompt_tokens, completion_tokens),
        backend_id="b",
        template_id="t",
        error=error,
        started_at=1.0,
        finished_at=2.0,
    )


class TestConfigStrictness:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            run_config_from_dict({"sede": 3})

    def test_unknown_backend_key(self):
        with pytest.raises(ConfigError, match="backend"):
            run_config_from_dict({"backend": {"kind": "oracle", "p_corect": 0.5}})

    def test_unknown_remote_key(self):
        with pytest.raises(ConfigError, match="backend"):
            run_config_from_dict(
                {"backend": {"kind": "remote", "base_url": "u", "model": "m", "retries": 3}}
            )

    def test_unknown_backend_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            run_config_from_dict({"backend": {"kind": "local"}})

    def test_unknown_pipeline_key(self):
        with pytest.raises(ConfigError, match="pipeline"):
            run_config_from_dict({"pipeline": {"loop": 2}})

    def test_unknown_rendering_key(self):
        with pytest.raises(ConfigError, match="rendering"):
            run_config_from_dict({"pipeline": {"rendering": {"chars": 100}}})

    def test_unknown_sampling_phase(self):
        with pytest.raises(ConfigError, match="sampling"):
            run_config_from_dict({"pipeline": {"sampling": {"judge": {}}}})

    def test_unknown_sampling_field(self):
        with pytest.raises(ConfigError, match="answer"):
            run_config_from_dict({"pipeline": {"sampling": {"answer": {"temp": 0.5}}}})

    def test_unknown_evaluation_key(self):
        with pytest.raises(ConfigError, match="evaluation"):
            run_config_from_dict({"evaluation": {"metric": "em"}})

    def test_unknown_templates_key(self):
        with pytest.raises(ConfigError, match="templates"):
            run_config_from_dict({"templates": {"judgee": "x"}})

    def test_remote_kind_needs_settings(self):
        with pytest.raises(ConfigError):
            run_config_from_dict({"backend": {"kind": "remote"}})
        with pytest.raises(ConfigError):
            RunConfig(backend_kind="remote")

    def test_invalid_values_name_their_context(self):
        with pytest.raises(ConfigError, match="oracle"):
            run_config_from_dict({"backend": {"kind": "oracle", "p_correct": 1.5}})
        with pytest.raises(ConfigError, match="pipeline"):
            run_config_from_dict({"pipeline": {"loops": -2}})


class TestConfigRoundTrip:
    def test_oracle_round_trip_is_idempotent(self):
        config = RunConfig(
            seed=5,
            ablation="no_loop",
            oracle=OracleParams(p_correct=0.3, tpr=0.8, fpr=0.2),
            pipeline=PipelineConfig(loops=0, samples_per_loop=4),
            evaluation=EvaluationConfig(pass_at_ks=(1, 4)),
        )
        first = config.to_dict()
        rebuilt = run_config_from_dict(first)
        assert rebuilt.to_dict() == first
        assert rebuilt.digest() == config.digest()

    def test_remote_round_trip(self):
        config = RunConfig(
            backend_kind="remote",
            remote=RemoteSettings(base_url="http://localhost:8000/v1", model="m"),
        )
        first = config.to_dict()
        assert run_config_from_dict(first).to_dict() == first

    def test_digest_ignores_operational_keys(self):
        base = RunConfig(seed=3)
        assert base.digest() == replace(base, output_dir="elsewhere").digest()
        assert base.digest() == replace(base, max_concurrency=64).digest()
        assert base.digest() != replace(base, seed=4).digest()

    def test_config_digest_matches_method(self):
        config = RunConfig(seed=9)
        assert config_digest(config.to_dict()) == config.digest()


class TestPresets:
    def test_all_presets_load_as_sampling_params(self):
        for name in PRESET_NAMES:
            params = SamplingParams(**load_preset(name))
            assert params.max_tokens > 0

    def test_known_values(self):
        thinking = load_preset("qwen3-30b-a3b-thinking-2507")
        assert thinking == {
            "temperature": 0.6,
            "top_p": 0.95,
            "top_k": -1,
            "max_tokens": 64000,
        }
        assert load_preset("qwen2.5-omni-7b")["max_tokens"] == 8192

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="preset"):
            load_preset("definitely-not-a-model")

    def test_preset_feeds_pipeline_sampling(self):
        config = run_config_from_dict({"pipeline": {"preset": "qwen3-4b-thinking-2507"}})
        answer = config.pipeline.sampling.answer
        assert answer.temperature == 0.7
        assert answer.top_p == 0.8

    def test_explicit_sampling_overrides_preset(self):
        config = run_config_from_dict(
            {
                "pipeline": {
                    "preset": "qwen3-4b-thinking-2507",
                    "sampling": {"answer": {"temperature": 0.1}},
                }
            }
        )
        answer = config.pipeline.sampling.answer
        assert answer.temperature == 0.1
        assert answer.top_p == 0.8  # untouched fields still come from the preset


class TestEvaluationConfigRules:
    def test_mode_validation(self):
        with pytest.raises(ConfigError):
            EvaluationConfig(mode="vibes")

    def test_pass_at_ks_need_exact_match(self):
        with pytest.raises(ConfigError):
            EvaluationConfig(mode="llm_judge", pass_at_ks=(1,))

    def test_pass_at_ks_positive(self):
        with pytest.raises(ConfigError):
            EvaluationConfig(pass_at_ks=(0,))
        with pytest.raises(ConfigError):
            EvaluationConfig(pass_at_ks=())

    def test_ks_capped_by_samples(self):
        with pytest.raises(ConfigError, match="samples_per_loop"):
            RunConfig(
                evaluation=EvaluationConfig(pass_at_ks=(16,)),
                pipeline=PipelineConfig(samples_per_loop=8),
            )


class TestAblationWiring:
    def test_label_overrides_pipeline_section(self):
        config = run_config_from_dict({"ablation": "no_loop", "pipeline": {"loops": 5}})
        assert config.pipeline.loops == 0

    def test_baseline_disables_everything(self):
        config = run_config_from_dict({"ablation": "baseline"})
        assert config.pipeline.loops == 0
        assert not config.pipeline.verify_enabled
        assert not config.pipeline.summary_enabled

    def test_unknown_label(self):
        with pytest.raises(ConfigError, match="ablation"):
            run_config_from_dict({"ablation": "quarter_loop"})

    def test_apply_overrides_ablation_then_explicit(self):
        config = apply_overrides(RunConfig(), ablation="no_loop", loops=3, samples=2)
        assert config.ablation == "no_loop"
        assert config.pipeline.loops == 3
        assert config.pipeline.samples_per_loop == 2

    def test_apply_overrides_seed_and_output(self):
        config = apply_overrides(RunConfig(), seed=77, output_dir="somewhere")
        assert config.seed == 77
        assert config.output_dir == "somewhere"


class TestLoadConfig:
    def test_round_trip_through_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"seed": 13, "ablation": "no_loop"}), "utf-8")
        config = load_config(path)
        assert config.seed == 13
        assert config.pipeline.loops == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{", "utf-8")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)

    def test_non_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", "utf-8")
        with pytest.raises(ConfigError, match="object"):
            load_config(path)


class TestDataset:
    def test_bundled_synthetic(self):
        queries = load_dataset("bundled:synthetic15")
        assert len(queries) == 15
        assert queries[0].id == "s01"
        assert all(q.ground_truth for q in queries)

    def test_file_order_and_extra_fields(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"id": "b", "question": "B?", "answer": "2", "source": "x"}\n'
            "\n"
            '{"id": "a", "question": "A?"}\n',
            "utf-8",
        )
        queries = load_dataset(str(path))
        assert [q.id for q in queries] == ["b", "a"]
        assert queries[1].ground_truth is None

    def test_error_carries_line_number(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": "a", "question": "A?"}\nnot json\n', "utf-8")
        with pytest.raises(DatasetError, match=":2:"):
            load_dataset(str(path))

    def test_missing_field(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": "a"}\n', "utf-8")
        with pytest.raises(DatasetError, match="question"):
            load_dataset(str(path))

    def test_non_string_id(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": 3, "question": "A?"}\n', "utf-8")
        with pytest.raises(DatasetError, match="strings"):
            load_dataset(str(path))

    def test_non_string_answer(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": "a", "question": "A?", "answer": 3}\n', "utf-8")
        with pytest.raises(DatasetError, match="answer"):
            load_dataset(str(path))

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"id": "a", "question": "A?"}\n{"id": "a", "question": "B?"}\n', "utf-8"
        )
        with pytest.raises(DatasetError, match="duplicate"):
            load_dataset(str(path))

    def test_non_object_record(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("[1]\n", "utf-8")
        with pytest.raises(DatasetError, match="object"):
            load_dataset(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("", "utf-8")
        with pytest.raises(DatasetError, match="no records"):
            load_dataset(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            load_dataset(str(tmp_path / "nope.jsonl"))

    def test_unknown_bundled(self):
        with pytest.raises(DatasetError, match="bundled"):
            load_dataset("bundled:imaginary")


class TestTrace:
    def test_write_read_round_trip(self, tmp_path):
        path = tmp_path / "t.jsonl"
        records = [
            trace_record(),
            trace_record(sample=2, response=None, error="boom", prompt_tokens=0, completion_tokens=0),
        ]
        with TraceWriter(path) as writer:
            for record in records:
                writer.append(record)
        loaded = read_trace(path)
        assert loaded == records
        assert loaded[0].ok and not loaded[1].ok

    def test_torn_tail_dropped(self, tmp_path):
        path = tmp_path / "t.jsonl"
        with TraceWriter(path) as writer:
            writer.append(trace_record())
            writer.append(trace_record(sample=2))
        with open(path, "a", encoding="utf-8") as f:
            f.write('{"query_id": "q1", "loop_in')
        assert len(read_trace(path)) == 2

    def test_torn_tail_with_valid_json_but_partial_record(self, tmp_path):
        path = tmp_path / "t.jsonl"
        with TraceWriter(path) as writer:
            writer.append(trace_record())
        with open(path, "a", encoding="utf-8") as f:
            f.write('{"query_id": "q1"}')
        assert len(read_trace(path)) == 1

    def test_mid_file_corruption_refuses(self, tmp_path):
        path = tmp_path / "t.jsonl"
        with TraceWriter(path) as writer:
            writer.append(trace_record())
            writer.append(trace_record(sample=2))
        lines = path.read_text("utf-8").splitlines()
        lines[0] = lines[0][:30]
        path.write_text("\n".join(lines) + "\n", "utf-8")
        with pytest.raises(TraceError, match="--fresh"):
            read_trace(path)

    def test_complete_malformed_tail_refuses(self, tmp_path):
        path = tmp_path / "t.jsonl"
        with TraceWriter(path) as writer:
            writer.append(trace_record())
        with open(path, "a", encoding="utf-8") as f:
            f.write("garbage\n")
        with pytest.raises(TraceError, match="--fresh"):
            read_trace(path)

    def test_record_field_validation(self):
        payload = json.loads(trace_record().to_json_line())
        del payload["response"]
        with pytest.raises(TraceError, match="missing"):
            TraceRecord.from_dict(payload, "x")
        payload = json.loads(trace_record().to_json_line())
        payload["extra"] = 1
        with pytest.raises(TraceError, match="unknown"):
            TraceRecord.from_dict(payload, "x")
        payload = json.loads(trace_record().to_json_line())
        payload["total_tokens"] = 999
        with pytest.raises(TraceError, match="add up"):
            TraceRecord.from_dict(payload, "x")

    def test_to_result_refuses_failures(self):
        failed = trace_record(response=None, error="boom")
        with pytest.raises(TraceError):
            failed.to_result()

    def test_replay_map_skips_failures_and_rejects_duplicates(self):
        ok = trace_record()
        failed = trace_record(sample=2, response=None, error="boom")
        mapping = replay_map([ok, failed])
        assert set(mapping) == {ok.tag.key()}
        with pytest.raises(TraceError, match="duplicate"):
            replay_map([ok, ok])


def _token_sums(records):
    total = TokenUsage.zero()
    per_query = {}
    for record in records:
        total = total + record.usage
        if record.tag.phase != "judge":
            qid = record.tag.query_id
            per_query[qid] = per_query.get(qid, TokenUsage.zero()) + record.usage
    return total, per_query


class TestRunBenchmark:
    def test_full_run_writes_consistent_artifacts(self, tmp_path):
        config = small_config(tmp_path)
        result = run_benchmark(config)
        out = tmp_path / "run"
        assert (out / TRACE_NAME).exists()
        assert (out / CONFIG_NAME).exists()
        assert result.report_path == out / REPORT_NAME

        report = result.report
        assert report["aggregates"]["n_queries"] == 15
        assert report["aggregates"]["n_failed"] == 0
        assert 0.0 <= report["aggregates"]["accuracy"] <= 1.0

        records = read_trace(out / TRACE_NAME)
        total, per_query = _token_sums(records)
        tokens = report["aggregates"]["tokens"]
        assert tokens["prompt"] == total.prompt_tokens
        assert tokens["completion"] == total.completion_tokens
        assert tokens["total"] == total.total_tokens
        assert tokens["evaluation_total"] == 0
        assert tokens["per_query_max_total"] == max(
            u.total_tokens for u in per_query.values()
        )
        by_id = {row["id"]: row for row in report["queries"]}
        for qid, usage in per_query.items():
            assert by_id[qid]["tokens"]["total"] == usage.total_tokens

    def test_resume_is_a_no_op(self, tmp_path):
        config = small_config(tmp_path)
        run_benchmark(config)
        out = tmp_path / "run"
        trace_before = (out / TRACE_NAME).read_bytes()
        report_before = (out / REPORT_NAME).read_bytes()
        run_benchmark(config)
        assert (out / TRACE_NAME).read_bytes() == trace_before
        assert (out / REPORT_NAME).read_bytes() == report_before

    @pytest.mark.parametrize("keep", [0, 5, 20])
    def test_interrupted_run_resumes_to_identical_report(self, tmp_path, keep):
        config = small_config(tmp_path)
        reference = run_benchmark(config).report_path.read_bytes()
        out = tmp_path / "run"
        lines = (out / TRACE_NAME).read_text("utf-8").splitlines()
        assert len(lines) > 20
        kept = "".join(line + "\n" for line in lines[:keep])
        (out / TRACE_NAME).write_text(kept, "utf-8")
        (out / REPORT_NAME).unlink()
        resumed = run_benchmark(config)
        assert resumed.report_path.read_bytes() == reference

    def test_interrupted_mid_record_resumes_to_identical_report(self, tmp_path):
        config = small_config(tmp_path)
        reference = run_benchmark(config).report_path.read_bytes()
        out = tmp_path / "run"
        lines = (out / TRACE_NAME).read_text("utf-8").splitlines()
        torn = "".join(line + "\n" for line in lines[:7]) + lines[7][:40]
        (out / TRACE_NAME).write_text(torn, "utf-8")
        resumed = run_benchmark(config)
        assert resumed.report_path.read_bytes() == reference

    def test_concurrency_does_not_change_the_report(self, tmp_path):
        sequential = run_benchmark(
            small_config(tmp_path, output_dir=str(tmp_path / "seq"), max_concurrency=1)
        )
        threaded = run_benchmark(
            small_config(tmp_path, output_dir=str(tmp_path / "par"), max_concurrency=8)
        )
        assert (
            sequential.report_path.read_bytes() == threaded.report_path.read_bytes()
        )

    def test_changed_config_refuses_resume(self, tmp_path):
        run_benchmark(small_config(tmp_path))
        with pytest.raises(ConfigError, match="--fresh"):
            run_benchmark(small_config(tmp_path, seed=12))

    def test_fresh_discards_previous_run(self, tmp_path):
        run_benchmark(small_config(tmp_path))
        result = run_benchmark(small_config(tmp_path, seed=12), fresh=True)
        assert result.report["run"]["seed"] == 12
        stored = json.loads((tmp_path / "run" / CONFIG_NAME).read_text("utf-8"))
        assert stored["seed"] == 12

    def test_tampered_prompt_hash_refuses_resume(self, tmp_path):
        config = small_config(tmp_path)
        run_benchmark(config)
        out = tmp_path / "run"
        lines = (out / TRACE_NAME).read_text("utf-8").splitlines()
        payload = json.loads(lines[0])
        payload["prompt_sha256"] = "0" * 64
        lines[0] = json.dumps(payload, ensure_ascii=False, sort_keys=True)
        (out / TRACE_NAME).write_text("".join(line + "\n" for line in lines), "utf-8")
        with pytest.raises(TraceError, match="different prompt"):
            run_benchmark(config)

    def test_all_queries_failing_still_reports(self, tmp_path):
        config = small_config(
            tmp_path,
            oracle=OracleParams(p_correct=0.0, tpr=1.0, fpr=0.0),
            pipeline=replace(FAST_PIPELINE, empty_set_fallback="fail"),
        )
        result = run_benchmark(config)
        aggregates = result.report["aggregates"]
        assert aggregates["n_failed"] == 15
        assert aggregates["accuracy"] is None
        row = result.report["queries"][0]
        assert row["failed"] and row["failure_reason"]
        assert row["candidates_per_loop"] is None

    def test_llm_judge_run_matches_exact_match(self, tmp_path):
        exact = run_benchmark(
            small_config(tmp_path, output_dir=str(tmp_path / "exact"))
        )
        judged = run_benchmark(
            small_config(
                tmp_path,
                output_dir=str(tmp_path / "judged"),
                evaluation=EvaluationConfig(mode="llm_judge"),
            )
        )
        assert (
            judged.report["aggregates"]["accuracy"]
            == exact.report["aggregates"]["accuracy"]
        )
        assert judged.report["aggregates"]["tokens"]["evaluation_total"] > 0
        phases = {r.tag.phase for r in read_trace(tmp_path / "judged" / TRACE_NAME)}
        assert "judge" in phases

    def test_pass_at_k_lands_in_report(self, tmp_path):
        config = small_config(
            tmp_path, evaluation=EvaluationConfig(pass_at_ks=(1, 3))
        )
        report = run_benchmark(config).report
        curve = report["aggregates"]["pass_at_k"]
        assert set(curve) == {"1", "3"}
        assert 0.0 <= curve["1"] <= curve["3"] <= 1.0


class TestEvaluateAnswer:
    def test_exact_match(self):
        assert evaluate_answer("42", "42", "exact_match")
        assert evaluate_answer("  42 ", "42", "exact_match")
        assert not evaluate_answer("42.0", "42", "exact_match")

    def test_llm_judge_against_oracle(self):
        backend = OracleBackend(OracleParams(), 0, {})
        templates = load_templates(with_judge=True)
        query = Query(id="q1", prompt="What is 6*7?")
        assert evaluate_answer(
            "42", "42", "llm_judge", query=query, backend=backend, templates=templates
        )
        assert not evaluate_answer(
            "41", "42", "llm_judge", query=query, backend=backend, templates=templates
        )

    def test_llm_judge_needs_collaborators(self):
        with pytest.raises(EvaluationError):
            evaluate_answer("1", "1", "llm_judge")

    def test_unknown_mode(self):
        with pytest.raises(EvaluationError):
            evaluate_answer("1", "1", "fuzzy")


class TestReplayAndRebuild:
    def test_rebuild_report_is_byte_identical(self, tmp_path):
        config = small_config(tmp_path)
        original = run_benchmark(config).report_path.read_bytes()
        rebuilt = rebuild_report(tmp_path / "run")
        assert rebuilt.report_path.read_bytes() == original

    def test_rebuild_with_judge_evaluation(self, tmp_path):
        config = small_config(tmp_path, evaluation=EvaluationConfig(mode="llm_judge"))
        original = run_benchmark(config).report_path.read_bytes()
        assert rebuild_report(tmp_path / "run").report_path.read_bytes() == original

    def test_rebuild_needs_a_run_directory(self, tmp_path):
        with pytest.raises(ConfigError, match="run directory"):
            rebuild_report(tmp_path)

    def _request(self, prompt="hello", qid="q1"):
        return GenerationRequest(
            prompt=prompt,
            sampling=SamplingParams(),
            tag=CallTag(qid, 0, 1, "answer"),
            template_id="t",
        )

    def test_replay_backend_serves_and_refuses(self):
        prompt = "hello"
        stored = trace_record(
            prompt_hash=hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        )
        backend = ReplayBackend([stored])
        result = backend.generate(self._request(prompt))
        assert result.text == "ok"
        with pytest.raises(TraceError, match="different prompt"):
            backend.generate(self._request("other prompt"))
        with pytest.raises(TraceError, match="no record"):
            backend.generate(self._request(prompt, qid="q2"))

    def test_replay_backend_replays_failures(self):
        failed = trace_record(response=None, error="rate limited")
        backend = ReplayBackend([failed])
        with pytest.raises(BackendCallError, match="rate limited"):
            backend.generate(self._request())


class TestReportShape:
    def test_unlabeled_queries_are_counted(self, tmp_path):
        config = small_config(tmp_path)
        result = run_benchmark(config)
        queries = load_dataset(config.dataset)
        queries[0] = replace(queries[0], ground_truth=None)
        evaluations = {q.id: (None if i == 0 else True) for i, q in enumerate(queries)}
        records = read_trace(tmp_path / "run" / TRACE_NAME)
        report = build_report(config, queries, result.outcomes, {}, evaluations, records)
        assert report["aggregates"]["n_unlabeled"] == 1
        assert report["aggregates"]["n_evaluated"] == 14
        assert report["queries"][0]["correct"] is None

    def test_entropy_and_vote_aggregates(self, tmp_path):
        report = run_benchmark(small_config(tmp_path)).report
        means = report["aggregates"]["mean_entropy_per_loop"]
        assert len(means) == FAST_PIPELINE.loops + 1
        assert all(m is None or m >= 0.0 for m in means)
        vote = report["aggregates"]["majority_vote_first_loop_accuracy"]
        assert 0.0 <= vote <= 1.0

    def test_run_section_pins_the_configuration(self, tmp_path):
        config = small_config(tmp_path)
        report = run_benchmark(config).report
        run = report["run"]
        assert run["seed"] == config.seed
        assert run["config_digest"] == config.digest()
        assert run["loops"] == 1
        assert run["samples_per_loop"] == 3
        assert run["backend"] == "oracle"
