"""Trace one query through the sample/verify/summarize loop, round by round.

Everything runs on the deterministic oracle backend, so the printout is
reproducible; rerun with a different --seed to watch another trajectory.
"""
import argparse

from veriloop import (
    OracleBackend,
    OracleParams,
    PipelineConfig,
    Query,
    load_templates,
    run_query,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--loops", type=int, default=2)
    parser.add_argument("--samples", type=int, default=4)
    args = parser.parse_args()

    params = OracleParams(p_correct=0.5, tpr=0.9, fpr=0.1, s_present=0.95, s_absent=0.1)
    backend = OracleBackend(params, args.seed, {"demo-001": "42"})
    config = PipelineConfig(loops=args.loops, samples_per_loop=args.samples)
    query = Query(id="demo-001", prompt="What is 6 x 7?")

    print(f"query {query.id!r}: {query.prompt}  (ground truth 42, seed {args.seed})")
    print(
        f"oracle: p_correct={params.p_correct} tpr={params.tpr} fpr={params.fpr} "
        f"s_present={params.s_present} s_absent={params.s_absent}"
    )
    outcome = run_query(query, config, backend, load_templates(), args.seed)

    for loop, raw in enumerate(outcome.raw_per_loop):
        phase = "answer samples" if loop == 0 else "summary samples"
        print(f"\nround {loop} ({len(raw)} {phase}):")
        pool = outcome.candidate_history[loop]
        accepted = {(m.loop_index, m.sample_index) for m in pool.members}
        for cand in raw:
            verdict = (
                "accepted" if (loop, cand.sample_index) in accepted else "rejected"
            )
            print(f"  #{cand.sample_index}  {cand.extracted_answer:<10} {verdict}")
        entropy = outcome.entropy_per_loop[loop]
        shown = "n/a" if entropy is None else f"{entropy:.3f} bits"
        print(f"  pool after union: {len(pool.members)} candidates, raw entropy {shown}")

    print(f"\nfinal summary answer: {outcome.final_answer}")
    print(
        f"tokens: {outcome.usage_total.prompt_tokens} prompt + "
        f"{outcome.usage_total.completion_tokens} completion = "
        f"{outcome.usage_total.total_tokens}"
    )


if __name__ == "__main__":
    main()
