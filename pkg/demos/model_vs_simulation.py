"""Put the closed-form accuracy model next to Monte Carlo pipeline runs.

Two views: final accuracy as the first-round batch grows, and a sweep over
the verifier's false-positive rate, which the model says cannot move final
accuracy at all (wrong accepted candidates never add the true answer to the
pool and never remove it).
"""
import argparse

import numpy as np

from veriloop import pass1_final
from veriloop.harness.validate import ValidationPoint, simulate_point

BASE = dict(p_correct=0.5, tpr=0.9, fpr=0.1, s_present=0.95, s_absent=0.1)


def row(point: ValidationPoint, trials: int, seed: int) -> tuple[float, float, float]:
    outcomes = simulate_point(point, trials, seed=seed)
    estimate = float(np.mean(outcomes))
    stderr = float(np.std(outcomes, ddof=1) / np.sqrt(trials))
    return pass1_final(point.analytical()), estimate, stderr


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=20_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"batch-size sweep at {BASE} ({args.trials} trials per row)")
    print(f"{'n_total':>8} {'model':>10} {'simulated':>10} {'stderr':>8} {'sigmas':>7}")
    for n_total in (1, 2, 4, 8, 16, 32):
        model, estimate, stderr = row(
            ValidationPoint(n_total=n_total, **BASE), args.trials, args.seed
        )
        sigmas = abs(estimate - model) / stderr
        print(f"{n_total:>8} {model:>10.4f} {estimate:>10.4f} {stderr:>8.4f} {sigmas:>7.2f}")

    print(f"\nfalse-positive-rate sweep at n_total=8 (model column is constant)")
    print(f"{'fpr':>8} {'model':>10} {'simulated':>10} {'stderr':>8} {'sigmas':>7}")
    for fpr in (0.0, 0.1, 0.3, 0.6, 1.0):
        point = ValidationPoint(n_total=8, **{**BASE, "fpr": fpr})
        model, estimate, stderr = row(point, args.trials, args.seed)
        sigmas = abs(estimate - model) / stderr
        print(f"{fpr:>8.1f} {model:>10.4f} {estimate:>10.4f} {stderr:>8.4f} {sigmas:>7.2f}")


if __name__ == "__main__":
    main()
