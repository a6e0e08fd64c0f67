from fractions import Fraction as F

import numpy as np
from _gen import random_compatible_pair, random_prior

from smallmarket.dist import ProductPrior, to_value, uniform_over
from smallmarket.gft import bilateral_gft, expected_gft
from smallmarket.mech import NO_TRADE, CompatPair, PriceFn, validate_pair
from smallmarket.optdp import solve
from smallmarket.transform import (
    _restriction_all,
    apply_g,
    best_price_indices,
    canonicalize,
    canonicalize_steps,
    compat_restriction,
    restricted_best_price,
    restriction_index,
)

S = tuple(to_value(v) for v in ["0", "0.2", "0.4", "0.5", "0.6", "0.8", "1"])
VS = uniform_over(["0", "0.5"])
V1 = uniform_over(["0.4", "0.8"])
V2 = uniform_over(["0.2", "0.6"])
U3 = uniform_over(["0", "0.5", "1"])


def _step_f1(support=S):
    return PriceFn.from_values(support, ["0.5" if v <= F(3, 5) else "inf" for v in support])


def test_restriction_examples():
    f1 = _step_f1()
    assert compat_restriction(f1, "0.5") == F(3, 5)
    assert compat_restriction(f1, "0.4") == 0
    assert compat_restriction(PriceFn.constant(S, NO_TRADE), "0.8") == 0


def test_restriction_sweep_matches_pointwise():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = int(rng.integers(1, 7))
        f = PriceFn(tuple(F(k, 7) for k in range(m)), tuple(int(x) for x in rng.integers(0, m + 1, size=m)))
        want = [restriction_index(f, k) for k in range(m)]
        assert _restriction_all(f) == want
        assert want == sorted(want)


def test_restricted_best_price_examples():
    assert restricted_best_price(0, VS, V1, S) == F(2, 5)
    assert bilateral_gft(F(2, 5), VS, V1) == F(3, 10)
    # 0.5, 0.6 and 0.8 all reach 0.275; the highest wins
    assert restricted_best_price("0.5", VS, V1, S) == F(4, 5)
    assert {bilateral_gft(p, VS, V1) for p in ("0.5", "0.6", "0.8")} == {F(11, 40)}
    assert restricted_best_price(0, U3, U3, (0, F(1, 2), 1)) == F(1, 2)


def test_restricted_best_price_properties():
    rng = np.random.default_rng(1)
    for _ in range(60):
        p = random_prior(rng, int(rng.integers(2, 7)))
        cands = p.support
        unrestricted = restricted_best_price(0, p.seller, p.buyer1, cands)
        for r in cands:
            got = restricted_best_price(r, p.seller, p.buyer1, cands)
            assert got >= r
            if unrestricted >= r:
                assert got == unrestricted


def test_dense_price_sweep_agrees_with_support_candidates():
    """Prices between support points never beat the support-restricted choice."""
    rng = np.random.default_rng(2)
    dense = [F(k, 240) for k in range(241)]
    for _ in range(40):
        p = random_prior(rng, int(rng.integers(2, 7)))
        for r in p.support:
            got = restricted_best_price(r, p.seller, p.buyer2, p.support)
            sweep = max(bilateral_gft(q, p.seller, p.buyer2) for q in dense if q >= r)
            assert bilateral_gft(got, p.seller, p.buyer2) == sweep


def test_apply_g_no_trade_argument_gives_constant_best_price():
    f2 = apply_g(PriceFn.constant(S, NO_TRADE), VS, V1)
    assert set(f2.values()) == {restricted_best_price(0, VS, V1, S)}


def test_apply_g_two_regions():
    f2 = apply_g(_step_f1(), VS, V2)
    want = [F(1, 5) if v < F(1, 2) else F(3, 5) for v in S]
    assert f2.values() == want


def test_apply_g_idempotent_and_compatible():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = random_prior(rng, int(rng.integers(2, 7)))
        pair = random_compatible_pair(rng, p.support)
        g1 = apply_g(pair.f1, p.seller, p.buyer2)
        assert apply_g(pair.f1, p.seller, p.buyer2) == g1
        assert validate_pair(pair.f1, g1).compatible


def test_canonicalize_fixed_point_in_value():
    rng = np.random.default_rng(4)
    for _ in range(30):
        p = random_prior(rng, int(rng.integers(2, 7)))
        res = solve(p)
        out = canonicalize(res.pair, p)
        assert expected_gft(out, p).total == res.stats.total


def test_canonicalize_from_never_trade():
    prior = ProductPrior(VS, V1, V2)
    Sp = prior.support
    pair = CompatPair(PriceFn.constant(Sp, NO_TRADE), PriceFn.constant(Sp, NO_TRADE))
    steps = canonicalize_steps(pair, prior)
    p1, p2 = steps.best_prices
    assert (p1, p2) == (F(2, 5), F(1, 5))
    out = steps.result
    assert all(out.f1(v) == p1 for v in Sp if v < p2)
    assert all(out.f2(v) == p2 for v in Sp if v < p1)
    rep = out.report(tight_from=(p1, p2))
    assert rep.compatible and rep.monotone1 and rep.monotone2 and rep.tight


def test_canonicalize_property_run():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = random_prior(rng, int(rng.integers(2, 6)))
        steps = canonicalize_steps(random_compatible_pair(rng, p.support), p)
        totals = [s.total for s in steps.stats]
        assert totals == sorted(totals)
        rep = steps.result.report(tight_from=steps.best_prices)
        assert rep.compatible and rep.monotone1 and rep.monotone2 and rep.tight


def test_best_price_indices_match_examples():
    prior = ProductPrior(VS, V1, V2)
    i1, i2 = best_price_indices(prior)
    assert (prior.support[i1], prior.support[i2]) == (F(2, 5), F(1, 5))
