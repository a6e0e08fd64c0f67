"""Learning from samples, the epsilon-sample stability harness and the distinguisher experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dist import (
    ContinuousSampler,
    DistError,
    FiniteSampler,
    ProductPrior,
    Sampler,
    TripleSampler,
    as_sampler,
    discretize,
    draw_triples,
    empirical,
    fmt_value,
    interval_discrepancy,
    sample_size,
    to_value,
)
from .gft import expected_gft, expected_gft_learned, monte_carlo_gft
from .mech import CompatPair, LearnedMechanism
from .optdp import solve
from .oracle import TripleSet, overfit_mechanism

DEFAULT_DELTA = Fraction(1, 10)
FRESH_FACTOR = 16  # fresh triples for the distinguisher: FRESH_FACTOR / c^2
ORACLE_GRID = 101


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, trial])


@dataclass(frozen=True)
class LearnReport:
    mech: LearnedMechanism
    sample_counts: tuple[int, int, int]
    seed: int
    epsilon: Fraction
    delta: Fraction
    empirical_gft: Fraction
    true_gft: Fraction | None = None  # exact, when the sampler is a finite prior
    true_gft_estimate: tuple[float, float] | None = None  # Monte Carlo (mean, half-width)

    def to_json(self) -> dict:
        doc = {
            "mechanism": self.mech.to_json(),
            "sample_counts": list(self.sample_counts),
            "seed": self.seed,
            "epsilon": fmt_value(self.epsilon),
            "delta": fmt_value(self.delta),
            "empirical_gft": fmt_value(self.empirical_gft),
        }
        if self.true_gft is not None:
            doc["true_gft"] = fmt_value(self.true_gft)
        if self.true_gft_estimate is not None:
            doc["true_gft_estimate"] = {"mean": self.true_gft_estimate[0], "half_width": self.true_gft_estimate[1]}
        return doc


def learn_from_samples(seller, buyer1, buyer2) -> tuple[LearnedMechanism, Fraction]:
    """Solve on the empirical product of three multisets and wrap with the rounding rule."""
    emp = ProductPrior(empirical(seller), empirical(buyer1), empirical(buyer2))
    res = solve(emp)
    return LearnedMechanism(res.pair), res.stats.total


def learn_mechanism(
    sampler,
    epsilon,
    delta,
    seed: int,
    size_factor=4,
    evaluate: bool = True,
    mc_samples: int = 100_000,
) -> LearnReport:
    """Sample, solve on the empirical product, return the rounding mechanism.

    With ``evaluate`` the learned mechanism is scored on the true
    distribution: exactly for finite priors, by Monte Carlo otherwise.
    """
    eps, dlt = to_value(epsilon), to_value(delta)
    n = sample_size(eps, dlt, size_factor)
    src = as_sampler(sampler)
    ss = draw_triples(src, n, seed)
    mech, emp_gft = learn_from_samples(ss.seller, ss.buyer1, ss.buyer2)
    exact = est = None
    if evaluate:
        if isinstance(src, FiniteSampler):
            exact = expected_gft_learned(mech, src.prior).total
        else:
            est = monte_carlo_gft(mech, src, mc_samples, seed + 1)
    return LearnReport(mech, (n, n, n), seed, eps, dlt, emp_gft, exact, est)


@dataclass
class StabilityReport:
    epsilon: Fraction
    trials: int
    sample_size: int
    max_total: Fraction = Fraction(0)
    max_buyer1: Fraction = Fraction(0)
    max_buyer2: Fraction = Fraction(0)
    discarded: int = 0
    violations: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def gft_stability_check(
    pair: CompatPair,
    true_prior: ProductPrior,
    epsilon,
    seed: int,
    trials: int,
    delta=DEFAULT_DELTA,
    size_factor=4,
) -> StabilityReport:
    """Compare a monotone pair's GFT on the prior and on empirical priors from epsilon-samples.

    Trials whose samples are not epsilon-samples (interval discrepancy above
    epsilon for some agent) are discarded and counted.  On the rest the
    total difference must stay within 12 eps and each buyer's share within 6 eps.
    """
    rep = pair.report()
    if not (rep.compatible and rep.monotone1 and rep.monotone2):
        raise ValueError("stability check needs a monotone compatible pair")
    eps = to_value(epsilon)
    n = sample_size(eps, delta, size_factor)
    truth = expected_gft(pair, true_prior)
    out = StabilityReport(eps, trials, n)
    for k in range(trials):
        ss = draw_triples(true_prior, n, trial_seed(seed, k))
        disc = [interval_discrepancy(d, s) for d, s in zip(true_prior.agents, (ss.seller, ss.buyer1, ss.buyer2))]
        if max(disc) > eps:
            out.discarded += 1
            out.rows.append({"trial": k, "discarded": True})
            continue
        emp = expected_gft(pair, ss.empirical_prior())
        d_tot = abs(truth.total - emp.total)
        d1 = abs(truth.gft1 - emp.gft1)
        d2 = abs(truth.gft2 - emp.gft2)
        out.max_total = max(out.max_total, d_tot)
        out.max_buyer1 = max(out.max_buyer1, d1)
        out.max_buyer2 = max(out.max_buyer2, d2)
        if d_tot > 12 * eps or d1 > 6 * eps or d2 > 6 * eps:
            out.violations.append((k, d_tot, d1, d2))
        out.rows.append({"trial": k, "discarded": False, "total": d_tot, "buyer1": d1, "buyer2": d2})
    return out


# --- distinguisher ----------------------------------------------------------


@dataclass(frozen=True)
class DistinguisherVerdict:
    g_star_c: float
    g_c: float
    threshold: float
    fresh: int
    learner: str

    @property
    def statistic(self) -> float:
        return self.g_star_c - self.g_c

    @property
    def verdict(self) -> str:
        return verdict_for(self.statistic, self.threshold)

    def to_json(self) -> dict:
        return {
            "g_star_c": self.g_star_c,
            "g_c": self.g_c,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "fresh_samples": self.fresh,
            "learner": self.learner,
            "verdict": self.verdict,
        }


def verdict_for(statistic: float, threshold: float) -> str:
    return "GAP" if statistic > threshold else "FIRST_BEST_ACHIEVABLE"


def generic_triple_sampler(T: int, seed: int) -> TripleSampler:
    """Uniform distribution over ``T`` triples with i.i.d. U[0,1] coordinates (almost surely generic)."""
    rng = np.random.default_rng(seed)
    while True:
        vals = rng.random(3 * T)
        if len(np.unique(vals)) == 3 * T and vals.min() > 0:
            break
    fr = [Fraction(float(v)) for v in vals]
    return TripleSampler(tuple(tuple(fr[3 * i : 3 * i + 3]) for i in range(T)))


def oracle_mechanism(sampler: Sampler, grid: int = ORACLE_GRID) -> LearnedMechanism:
    """The best simple mechanism with full knowledge of the sampler (the learner the argument assumes).

    Triple sets get the overfit mechanism; finite priors their exact
    optimum; uniform mixtures the optimum of a ``grid``-point discretization.
    """
    if isinstance(sampler, TripleSampler):
        return LearnedMechanism(overfit_mechanism(TripleSet(sampler.triples, sampler.weights)))
    if isinstance(sampler, FiniteSampler):
        return LearnedMechanism(solve(sampler.prior).pair)
    if isinstance(sampler, ContinuousSampler):
        prior = ProductPrior(*(discretize(m, grid) for m in (sampler.seller, sampler.buyer1, sampler.buyer2)))
        return LearnedMechanism(solve(prior).pair)
    raise DistError(f"no oracle for sampler {type(sampler).__name__}")


def distinguisher(
    sampler_unknown,
    t: int,
    c_guess,
    seed: int,
    learner: str = "empirical",
    fresh_factor=FRESH_FACTOR,
    oracle_grid: int = ORACLE_GRID,
) -> DistinguisherVerdict:
    """Estimate first-best minus learned-mechanism GFT on fresh triples and compare with 3c.

    ``learner="empirical"`` solves on the empirical product of ``t`` samples;
    ``learner="oracle"`` uses :func:`oracle_mechanism`, i.e. a learner that
    meets the c-accuracy guarantee by construction.
    """
    c = to_value(c_guess)
    if t < 1 or c <= 0:
        raise ValueError("need t >= 1 and c > 0")
    src = as_sampler(sampler_unknown)
    ss = np.random.SeedSequence([seed, 0xD15])
    learn_seq, fresh_seq = ss.spawn(2)
    if learner == "empirical":
        cols = src.draw(np.random.default_rng(learn_seq), t)
        mech, _ = learn_from_samples(*cols)
    elif learner == "oracle":
        mech = oracle_mechanism(src, oracle_grid)
    else:
        raise ValueError(f"unknown learner {learner!r}")
    n_fresh = math.ceil(float(fresh_factor) / float(c) ** 2)
    vs, v1, v2 = src.draw_float(np.random.default_rng(fresh_seq), n_fresh)
    g_star = float(np.maximum(np.maximum(v1 - vs, v2 - vs), 0.0).mean())
    g = float(mech.batch_realized_gft(vs, v1, v2).mean())
    return DistinguisherVerdict(g_star, g, 3 * float(c), n_fresh, learner)
