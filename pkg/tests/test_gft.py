import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from _gen import random_compatible_pair, random_prior

from smallmarket.dist import ContinuousSampler, ProductPrior, point_mass, uniform, uniform_over
from smallmarket.gft import (
    GftStats,
    bilateral_gft,
    bilateral_table,
    expected_gft,
    expected_gft_bruteforce,
    expected_gft_learned,
    first_best,
    monte_carlo_gft,
    realized_gft,
)
from smallmarket.mech import (
    NO_TRADE,
    Allocation,
    LearnedMechanism,
    Outcome,
    PairError,
    CompatPair,
    PriceFn,
    execute_learned,
    pair_from_arrays,
)
from smallmarket.optdp import solve

U3 = uniform_over(["0", "0.5", "1"])
UNIFORM3 = ProductPrior(U3, U3, U3)
VS = uniform_over(["0", "0.5"])
V1 = uniform_over(["0.4", "0.8"])
BILATERAL = ProductPrior(VS, V1, point_mass(0))


def _enumerate_first_best(prior):
    total = F(0)
    for (vs, ws), (v1, w1), (v2, w2) in itertools.product(*(d.atoms for d in prior.agents)):
        total += ws * w1 * w2 * max(v1 - vs, v2 - vs, 0)
    return total


def test_realized_gft():
    vals = (F(1, 5), F(7, 10), F(3, 10))
    assert realized_gft(Outcome.trade(Allocation.BUYER1, F(1, 2), 1), vals) == F(1, 2)
    assert realized_gft(Outcome(Allocation.SELLER, (0, 0, 0), 6), vals) == 0
    assert realized_gft(Outcome.trade(Allocation.BUYER2, F(1, 2), 2), ("0.5", "0.4", "0.6")) == F(1, 10)


def test_three_point_pair_extracts_first_best():
    pair = pair_from_arrays(["0", "0.5", "1"], ["0.5", "0.5", "1"], ["0.5", "1", "1"])
    stats = expected_gft(pair, UNIFORM3)
    assert stats.total == F(1, 3) == stats.first_best
    assert stats.gap == 0
    assert expected_gft_bruteforce(pair, UNIFORM3) == F(1, 3)


def test_never_trade_total_zero():
    S = UNIFORM3.support
    pair = CompatPair(PriceFn.constant(S, NO_TRADE), PriceFn.constant(S, NO_TRADE))
    assert expected_gft(pair, UNIFORM3).total == 0


def test_bilateral_instance_pair():
    S = BILATERAL.support
    pair = CompatPair(PriceFn.constant(S, "0.4"), PriceFn.constant(S, NO_TRADE))
    stats = expected_gft(pair, BILATERAL)
    assert stats.total == stats.gft1 == F(3, 10)
    assert stats.gft2 == 0


def test_first_best_examples():
    assert first_best(UNIFORM3) == F(1, 3)
    mixed = ProductPrior(VS, V1, uniform_over(["0.2", "0.6"]))
    assert first_best(mixed) == F(33, 80)
    assert first_best(ProductPrior(point_mass(1), point_mass(0), point_mass(0))) == 0


def test_first_best_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(40):
        prior = random_prior(rng, int(rng.integers(2, 7)))
        assert first_best(prior) == _enumerate_first_best(prior)


def test_bilateral_gft_examples():
    assert bilateral_gft("0.5", U3, U3) == F(2, 9)
    assert bilateral_gft("0.4", VS, V1) == F(3, 10)
    assert bilateral_gft("0.9", VS, V1) == 0


def test_bilateral_table_matches_pointwise():
    rng = np.random.default_rng(1)
    for _ in range(30):
        p = random_prior(rng, int(rng.integers(2, 7)))
        S = p.support
        assert bilateral_table(S, p.seller, p.buyer1) == [bilateral_gft(s, p.seller, p.buyer1) for s in S]


def test_bilateral_is_a_one_buyer_pair():
    """Posting p to buyer 2 alone equals the pair (NO_TRADE, p) when buyer 1 sits below p."""
    rng = np.random.default_rng(2)
    for _ in range(30):
        p = random_prior(rng, int(rng.integers(3, 7)))
        S = p.support
        for k in range(1, len(S)):
            prior = ProductPrior(p.seller, point_mass(0), p.buyer2)
            pair = CompatPair(PriceFn.constant(S, NO_TRADE), PriceFn.constant(S, S[k]))
            assert expected_gft(pair, prior).total == bilateral_gft(S[k], p.seller, p.buyer2)


def test_off_support_price_never_beats_support():
    rng = np.random.default_rng(3)
    for _ in range(30):
        p = random_prior(rng, int(rng.integers(2, 7)))
        S = list(p.support)
        for q in (F(k, 97) for k in range(98)):
            best = max(bilateral_gft(s, p.seller, p.buyer1) for s in S + [q])
            assert bilateral_gft(q, p.seller, p.buyer1) <= best
            assert bilateral_gft(q, p.seller, p.buyer1) <= max(bilateral_table(S, p.seller, p.buyer1))


def test_expected_gft_two_summation_orders():
    rng = np.random.default_rng(4)
    for _ in range(80):
        prior = random_prior(rng, int(rng.integers(2, 6)))
        pair = random_compatible_pair(rng, prior.support)
        stats = expected_gft(pair, prior)
        assert stats.total == expected_gft_bruteforce(pair, prior)
        assert stats.total == stats.gft1 + stats.gft2
        assert 0 <= stats.total <= stats.first_best


def test_expected_gft_needs_covering_support():
    pair = pair_from_arrays(["0", "1"], ["inf", "inf"], ["inf", "inf"])
    with pytest.raises(PairError):
        expected_gft(pair, UNIFORM3)


def test_learned_evaluator_agrees_on_support():
    rng = np.random.default_rng(5)
    for _ in range(30):
        prior = random_prior(rng, int(rng.integers(2, 7)))
        res = solve(prior)
        assert expected_gft_learned(LearnedMechanism(res.pair), prior) == res.stats


def test_learned_evaluator_off_support_prior():
    pair = pair_from_arrays(["0", "0.5", "1"], ["0.5", "0.5", "1"], ["0.5", "1", "1"])
    mech = LearnedMechanism(pair)
    prior = ProductPrior(uniform_over(["0.1", "0.6"]), uniform_over(["0.3", "0.9"]), uniform_over(["0.2", "0.7"]))
    got = expected_gft_learned(mech, prior).total
    want = F(0)
    for (vs, ws), (v1, w1), (v2, w2) in itertools.product(*(d.atoms for d in prior.agents)):
        want += ws * w1 * w2 * realized_gft(execute_learned(mech, (vs, v1, v2)), (vs, v1, v2))
    assert got == want


def test_stats_json():
    doc = GftStats(F(1, 3), F(1, 6), F(1, 6), F(1, 2)).to_json()
    assert doc["gap"] == "1/6"
    assert doc["total_approx"] == pytest.approx(1 / 3)


def test_monte_carlo_never_trade():
    pair = pair_from_arrays(["0", "1"], ["inf", "inf"], ["inf", "inf"])
    u = uniform(0, 1)
    assert monte_carlo_gft(LearnedMechanism(pair), ContinuousSampler(u, u, u), 1000, 0) == (0.0, 0.0)


def test_monte_carlo_deterministic_and_covers_exact():
    prior = random_prior(np.random.default_rng(6), 5)
    res = solve(prior)
    mech = LearnedMechanism(res.pair)
    exact = float(res.stats.total)
    assert monte_carlo_gft(mech, prior, 5000, 9) == monte_carlo_gft(mech, prior, 5000, 9)
    inside = 0
    trials = 100
    for seed in range(trials):
        mean, hw = monte_carlo_gft(mech, prior, 100_000, seed)
        inside += abs(mean - exact) <= 3 * hw
    assert inside >= 99
