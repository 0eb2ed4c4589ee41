"""Measure what each pipeline stage buys at a fixed oracle difficulty.

All four modes see the same query stream and run seed, so the accuracy gaps
are paired comparisons, not independent estimates.
"""
import argparse
from dataclasses import replace

from veriloop import (
    ABLATIONS,
    AnalyticalParams,
    OracleBackend,
    OracleParams,
    PipelineConfig,
    Query,
    apply_ablation,
    load_templates,
    pass1_final,
    run_query,
)

POINT = dict(p_correct=0.5, tpr=0.9, fpr=0.1, s_present=0.95, s_absent=0.1)


def mode_accuracy(mode: str, n_queries: int, seed: int) -> float:
    config = apply_ablation(PipelineConfig(loops=2, samples_per_loop=8), mode)
    ids = [f"ab-{i:05d}" for i in range(n_queries)]
    backend = OracleBackend(OracleParams(**POINT), seed, {q: "42" for q in ids})
    templates = load_templates()
    hits = sum(
        run_query(Query(id=qid, prompt="x"), config, backend, templates, seed).final_answer
        == "42"
        for qid in ids
    )
    return hits / n_queries


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--queries", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"oracle point {POINT}, loops=2, samples_per_loop=8, {args.queries} queries")
    print(f"{'mode':<20} {'accuracy':>9}")
    accuracies = {}
    for mode in ABLATIONS:
        accuracies[mode] = mode_accuracy(mode, args.queries, args.seed)
        print(f"{mode:<20} {accuracies[mode]:>9.4f}")

    params = AnalyticalParams(n_total=8, **POINT)
    print(
        f"\nsingle-round model: verify-on {pass1_final(params):.4f}, "
        f"verify-off {pass1_final(replace(params, tpr=1.0, fpr=1.0)):.4f}"
    )
    print(
        "with a two-value summarizer the final answer only needs the truth to\n"
        "survive into the pool, so skipping verification (which thins correct\n"
        "candidates at tpr < 1) edges out the verified single round; the loops\n"
        "are what lift the full pipeline above both."
    )


if __name__ == "__main__":
    main()
