"""Evaluation math: pass@k, answer entropy, and the closed-form model that
predicts final accuracy of one sample -> verify -> summarize round.

The closed form composes four pieces:

* posterior_correct: chance an *accepted* candidate is actually right,
* p_has_correct: chance a verified pool of n_v accepted candidates holds
  at least one right answer,
* binomial_pmf: distribution of the verified pool size for n_total
  generations accepted independently with rate p_accept,
* pass1_final: expectation of the summarizer's success over that pool-size
  distribution, where the summarizer lands s_present when a right answer is
  in the pool and s_absent otherwise.

binomial_pmf works in log space (gammaln) and renormalizes, so total mass
stays within 1e-12 of one for n_total up to 10^4.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True, slots=True)
class AnalyticalParams:
    """Inputs of the closed-form model: base correctness rate, verifier
    accept rates, the two summarizer success rates, and the number of
    first-round generations."""

    p_correct: float
    tpr: float
    fpr: float
    s_present: float
    s_absent: float
    n_total: int

    def __post_init__(self):
        for name in ("p_correct", "tpr", "fpr", "s_present", "s_absent"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.n_total < 1:
            raise ValueError("n_total must be >= 1")


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that a uniform k-subset of n samples (c of them correct)
    contains at least one correct sample: 1 - C(n-c, k) / C(n, k).

    Computed as a running product so huge n stays stable; any zero factor
    short-circuits to exactly 1.0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0 <= c <= n):
        raise ValueError("c must be in [0, n]")
    if not (1 <= k <= n):
        raise ValueError("k must be in [1, n]")
    if c == 0:
        return 0.0
    miss = 1.0
    for i in range(k):
        numerator = n - c - i
        if numerator <= 0:
            return 1.0
        miss *= numerator / (n - i)
    return 1.0 - miss


def pass_at_k_curve(
    records: Sequence[tuple[int, int]], ks: Sequence[int]
) -> dict[int, float]:
    """Average per-problem pass@k over (n, c) records, one value per k.

    All records must share the same n, and every requested k must fit in it.
    """
    if not records:
        raise ValueError("no records to aggregate")
    n = records[0][0]
    if any(rec_n != n for rec_n, _ in records):
        raise ValueError("all records must share the same sample count n")
    if not ks:
        raise ValueError("no k values requested")
    if max(ks) > n or min(ks) < 1:
        raise ValueError(f"every k must lie in [1, {n}]")
    return {
        k: float(np.mean([pass_at_k(n, c, k) for n, c in records])) for k in ks
    }


def answer_entropy(answers: Iterable[str]) -> float:
    """Shannon entropy (bits) of the empirical answer distribution.

    Unextractable answers count as a category of their own; the input is a
    plain list of extracted-answer strings.
    """
    counts = Counter(answers)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("cannot take the entropy of zero answers")
    entropy = 0.0
    for count in counts.values():
        p = count / total
        entropy -= p * math.log2(p)
    return entropy


def posterior_correct(p_correct: float, tpr: float, fpr: float) -> float:
    """P[candidate is right | verifier accepted it]. Zero acceptance mass
    (p_correct*tpr + (1-p_correct)*fpr == 0) maps to 0 by convention."""
    accept = p_correct * tpr + (1.0 - p_correct) * fpr
    if accept == 0.0:
        return 0.0
    return p_correct * tpr / accept


def p_has_correct(q: float, n_v: int) -> float:
    """P[>=1 right answer among n_v accepted candidates, each right w.p. q].
    An empty pool has none by definition (n_v == 0 gives 0 even at q == 1)."""
    if not (0.0 <= q <= 1.0):
        raise ValueError("q must be in [0, 1]")
    if n_v < 0:
        raise ValueError("n_v must be >= 0")
    if n_v == 0:
        return 0.0
    return 1.0 - (1.0 - q) ** n_v


def binomial_pmf(n_total: int, p_accept: float, n_v: int) -> float:
    """Binomial(n_total, p_accept) probability of exactly n_v successes,
    evaluated in log space so large n_total keeps full precision."""
    return float(_binomial_pmf_vector(n_total, p_accept)[n_v])


def _binomial_pmf_vector(n_total: int, p_accept: float) -> np.ndarray:
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if not (0.0 <= p_accept <= 1.0):
        raise ValueError("p_accept must be in [0, 1]")
    k = np.arange(n_total + 1)
    if p_accept == 0.0:
        pmf = np.zeros(n_total + 1)
        pmf[0] = 1.0
        return pmf
    if p_accept == 1.0:
        pmf = np.zeros(n_total + 1)
        pmf[n_total] = 1.0
        return pmf
    log_comb = gammaln(n_total + 1) - gammaln(k + 1) - gammaln(n_total - k + 1)
    log_pmf = log_comb + k * math.log(p_accept) + (n_total - k) * math.log1p(-p_accept)
    pmf = np.exp(log_pmf)
    # gammaln drift accumulates to ~1e-12 of total mass at n_total ~ 10^4;
    # renormalizing shifts each term by under 1e-15 relative and restores
    # an exact unit sum
    return pmf / pmf.sum()


def pass1_final(params: AnalyticalParams) -> float:
    """Expected final accuracy of one sample -> verify -> summarize round.

    Marginalizes the verified pool size n_v ~ Binomial(n_total, p_accept)
    and, per size, mixes the two summarizer success rates by the chance the
    pool holds a right answer. Written as
    s_absent + E[p_has_correct] * (s_present - s_absent) so equal success
    rates collapse to exactly that rate.
    """
    q = posterior_correct(params.p_correct, params.tpr, params.fpr)
    p_accept = params.p_correct * params.tpr + (1.0 - params.p_correct) * params.fpr
    pmf = _binomial_pmf_vector(params.n_total, p_accept)
    n_v = np.arange(params.n_total + 1)
    has = 1.0 - (1.0 - q) ** n_v
    has[0] = 0.0
    expected_has = float(np.dot(pmf, has))
    return params.s_absent + expected_has * (params.s_present - params.s_absent)


def pass1_final_general(
    p_correct: float,
    tpr: float,
    fpr: float,
    summary_success: Callable[[float], float],
    n_total: int,
) -> float:
    """Generalization of :func:`pass1_final` to a summarizer success curve
    over the fraction of right answers in the verified pool.

    ``summary_success(r)`` gives the success rate for a pool whose correct
    fraction is r; the empty pool is scored at r == 0. The two-value contract
    is the special case of a step function at r > 0. Exact enumeration over
    the joint counts of accepted-correct and accepted-wrong candidates, so
    it's O(n_total^2) and meant for exploration, not sweeps.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    p_good = p_correct * tpr
    p_bad = (1.0 - p_correct) * fpr
    p_rest = 1.0 - p_good - p_bad
    log_fact = gammaln(np.arange(n_total + 1) + 1.0)

    def log_pow(base: float, exp: int) -> float:
        if exp == 0:
            return 0.0
        if base == 0.0:
            return -math.inf
        return exp * math.log(base)

    total = 0.0
    for good in range(n_total + 1):
        for bad in range(n_total + 1 - good):
            rest = n_total - good - bad
            log_w = (
                log_fact[n_total]
                - log_fact[good]
                - log_fact[bad]
                - log_fact[rest]
                + log_pow(p_good, good)
                + log_pow(p_bad, bad)
                + log_pow(p_rest, rest)
            )
            if log_w == -math.inf:
                continue
            pool = good + bad
            r = good / pool if pool else 0.0
            total += math.exp(log_w) * summary_success(r)
    return total
