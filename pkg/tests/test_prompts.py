from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from veriloop.core import Candidate, CandidateSet, Query, VerificationVerdict
from veriloop.errors import ContractViolation, TemplateError
from veriloop.prompts import (
    CandidateRendering,
    flatten_excerpt,
    load_template,
    load_templates,
    make_template,
    parse_pool_lines,
    render_answer,
    render_judge,
    render_summary,
    render_verify,
    serialize_pool,
    substitute,
    validate_template,
)

ACCEPT = VerificationVerdict("FINAL VERDICT: CORRECT", 1, True)


def cand(loop, sample, answer="42", text=None, unverified=False):
    return Candidate(
        loop_index=loop,
        sample_index=sample,
        full_text=text if text is not None else f"reasoning about it\n\\boxed{{{answer}}}",
        extracted_answer=answer,
        verdict=None if unverified else ACCEPT,
        unverified_fallback=unverified,
    )


QUERY = Query(id="q1", prompt="What is 1+1?")


class TestValidation:
    def test_answer_needs_question(self):
        with pytest.raises(TemplateError):
            make_template("answer", "Solve it. \\boxed{answer}", "t")

    def test_verify_needs_solution(self):
        with pytest.raises(TemplateError):
            make_template("verify", "{{question}} FINAL VERDICT:", "t")

    def test_unknown_placeholder_rejected_at_load(self):
        with pytest.raises(TemplateError):
            make_template("answer", "{{question}} {{hint}} \\boxed{answer}", "t")

    def test_unknown_role(self):
        with pytest.raises(TemplateError):
            validate_template("translate", "{{question}}", "t")

    def test_marker_instruction_required(self):
        # an answer template that never mentions the answer marker is useless
        with pytest.raises(TemplateError):
            make_template("answer", "Just solve {{question}} and reply.", "t")
        with pytest.raises(TemplateError):
            make_template("verify", "{{question}} {{solution}} say yes or no", "t")

    def test_good_templates_pass(self):
        make_template("answer", "{{question}} end with FINAL ANSWER: x", "t")
        make_template("verify", "{{question}} {{solution}} FINAL VERDICT: line", "t")
        make_template("summary", "{{question}} {{candidates}} use \\boxed{}", "t")

    def test_template_id_tracks_content(self):
        a = make_template("answer", "{{question}} \\boxed{answer}", "mine")
        b = make_template("answer", "{{question}} \\boxed{answer} v2", "mine")
        assert a.id != b.id
        assert a.id.startswith("mine@")


class TestLoading:
    def test_defaults_load(self):
        ts = load_templates()
        assert ts.answer.role == "answer"
        assert ts.verify.role == "verify"
        assert ts.summary.role == "summary"
        assert ts.judge is None

    def test_judge_loads_on_request(self):
        ts = load_templates(with_judge=True)
        assert ts.judge is not None and ts.judge.role == "judge"

    def test_directory_override(self, tmp_path: Path):
        (tmp_path / "answer.txt").write_text(
            "Custom: {{question}} \\boxed{answer}", "utf-8"
        )
        tpl = load_template("answer", "answer", tmp_path)
        assert tpl.template_text.startswith("Custom:")

    def test_missing_file_in_explicit_directory(self, tmp_path: Path):
        with pytest.raises(TemplateError):
            load_template("answer", "answer", tmp_path)

    def test_stem_selection(self, tmp_path: Path):
        (tmp_path / "alt.txt").write_text("{{question}} \\boxed{answer}", "utf-8")
        tpl = load_template("answer", "alt", tmp_path)
        assert tpl.id.startswith("alt@")


class TestSubstitute:
    def test_replaces_all(self):
        assert substitute("a {{x}} b {{x}}", {"x": "1"}) == "a 1 b 1"

    @given(st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=50))
    def test_value_round_trips(self, value):
        assert substitute("v={{x}}", {"x": value}) == f"v={value}"


class TestSerializePool:
    def test_order_and_numbering(self):
        pool = CandidateSet(query_id="q1", members=(cand(1, 2, "b"), cand(0, 1, "a")))
        text = serialize_pool(pool, CandidateRendering(include_full_reasoning=False))
        assert text == "Candidate 1: a\nCandidate 2: b"

    def test_unverified_flag_serialized(self):
        pool = CandidateSet(query_id="q1", members=(cand(0, 1, "a", unverified=True),))
        text = serialize_pool(pool, CandidateRendering(include_full_reasoning=False))
        assert text == "Candidate 1 (unverified): a"

    def test_truncation_keeps_latest(self):
        members = tuple(cand(l, s, f"a{l}{s}") for l in range(5) for s in range(1, 9))
        pool = CandidateSet(query_id="q1", members=members)
        rendering = CandidateRendering(max_candidates=32, include_full_reasoning=False)
        lines = serialize_pool(pool, rendering).splitlines()
        assert len(lines) == 32
        # the 8 dropped members are exactly loop 0
        assert lines[0] == "Candidate 1: a11"
        assert lines[-1] == "Candidate 32: a48"

    def test_count_never_exceeds_max(self):
        members = tuple(cand(0, s) for s in range(1, 41))
        pool = CandidateSet(query_id="q1", members=members)
        for max_c in (1, 7, 32, 40, 100):
            rendering = CandidateRendering(max_candidates=max_c, include_full_reasoning=False)
            assert len(serialize_pool(pool, rendering).splitlines()) == min(max_c, 40)

    def test_reasoning_excerpt_budget(self):
        long_text = "word " * 500 + "\\boxed{7}"
        pool = CandidateSet(query_id="q1", members=(cand(0, 1, "7", text=long_text),))
        rendering = CandidateRendering(per_candidate_chars=50, max_candidates=8)
        line = serialize_pool(pool, rendering)
        assert line.startswith("Candidate 1: 7 - word word")
        assert len(line) <= len("Candidate 1: 7 - ") + 50

    def test_excerpt_never_spans_lines(self):
        pool = CandidateSet(
            query_id="q1", members=(cand(0, 1, "7", text="line one\nline two\n\\boxed{7}"),)
        )
        rendering = CandidateRendering(per_candidate_chars=200, max_candidates=8)
        assert len(serialize_pool(pool, rendering).splitlines()) == 1

    def test_round_trip_parse(self):
        pool = CandidateSet(
            query_id="q1",
            members=(cand(0, 1, "a"), cand(0, 2, "b", unverified=True), cand(1, 1, "c")),
        )
        text = serialize_pool(pool, CandidateRendering(include_full_reasoning=False))
        parsed = parse_pool_lines(text)
        assert parsed == [(False, "a"), (True, "b"), (False, "c")]


class TestRenderAnswer:
    def test_substitution(self):
        tpl = make_template("answer", "Solve: {{question}}\n\\boxed{answer}", "t")
        out = render_answer(tpl, QUERY)
        assert "Solve: What is 1+1?" in out

    def test_contains_prompt_verbatim(self):
        tpl = load_templates().answer
        assert QUERY.prompt in render_answer(tpl, QUERY)

    def test_role_enforced(self):
        tpl = load_templates().verify
        with pytest.raises(ContractViolation):
            render_answer(tpl, QUERY)

    def test_deterministic(self):
        tpl = load_templates().answer
        assert render_answer(tpl, QUERY) == render_answer(tpl, QUERY)


class TestRenderVerify:
    def test_contains_question_and_solution(self):
        tpl = load_templates().verify
        c = cand(0, 1, "9", text="my derivation\n\\boxed{9}")
        out = render_verify(tpl, QUERY, c)
        assert QUERY.prompt in out and "my derivation" in out

    def test_budget_keeps_head_and_tail(self):
        tpl = load_templates().verify
        text = "START " + "x" * 5000 + " \\boxed{9}"
        c = cand(0, 1, "9", text=text)
        out = render_verify(tpl, QUERY, c, budget=200)
        assert "START" in out
        assert "\\boxed{9}" in out
        assert "x" * 5000 not in out

    def test_no_budget_embeds_everything(self):
        tpl = load_templates().verify
        text = "y" * 3000
        out = render_verify(tpl, QUERY, cand(0, 1, "9", text=text))
        assert text in out

    def test_role_enforced(self):
        with pytest.raises(ContractViolation):
            render_verify(load_templates().answer, QUERY, cand(0, 1))


class TestRenderSummary:
    RENDERING = CandidateRendering()

    def test_serialized_pool_embedded(self):
        tpl = load_templates().summary
        pool = CandidateSet(query_id="q1", members=(cand(0, 1, "a"), cand(0, 2, "b")))
        out = render_summary(tpl, QUERY, pool, CandidateRendering(include_full_reasoning=False))
        assert "Candidate 1: a" in out and "Candidate 2: b" in out
        assert QUERY.prompt in out

    def test_empty_pool_is_contract_violation(self):
        tpl = load_templates().summary
        with pytest.raises(ContractViolation):
            render_summary(tpl, QUERY, CandidateSet.empty("q1"), self.RENDERING)

    def test_role_enforced(self):
        pool = CandidateSet(query_id="q1", members=(cand(0, 1),))
        with pytest.raises(ContractViolation):
            render_summary(load_templates().answer, QUERY, pool, self.RENDERING)


class TestRenderJudge:
    def test_lines_present(self):
        tpl = load_templates(with_judge=True).judge
        out = render_judge(tpl, QUERY, "42", "42")
        assert "Predicted answer: 42" in out
        assert "Reference answer: 42" in out

    def test_role_enforced(self):
        with pytest.raises(ContractViolation):
            render_judge(load_templates().answer, QUERY, "1", "2")


class TestFlattenExcerpt:
    def test_flatten_and_cut(self):
        assert flatten_excerpt("a\nb\t c", 100) == "a b c"
        assert flatten_excerpt("abcdef", 3) == "abc"

    @given(st.text(max_size=300), st.integers(1, 50))
    def test_budget_respected(self, text, budget):
        out = flatten_excerpt(text, budget)
        assert len(out) <= budget
        assert "\n" not in out
