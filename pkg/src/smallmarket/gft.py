"""Gains-from-trade evaluation: exact expectations, first best, bilateral prices, Monte Carlo."""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .dist import ZERO, FiniteDist, ProductPrior, Sampler, as_sampler, fmt_value, to_value
from .mech import (
    NO_TRADE,
    Allocation,
    CompatPair,
    LearnedMechanism,
    Outcome,
    PairError,
    execute,
)


@dataclass(frozen=True)
class GftStats:
    total: Fraction
    gft1: Fraction
    gft2: Fraction
    first_best: Fraction

    @property
    def gap(self) -> Fraction:
        return self.first_best - self.total

    def to_json(self) -> dict:
        out = {}
        for key in ("total", "gft1", "gft2", "first_best", "gap"):
            v = getattr(self, key)
            out[key] = fmt_value(v)
            out[key + "_approx"] = float(v)
        return out


def realized_gft(outcome: Outcome, values) -> Fraction:
    vs, v1, v2 = (to_value(v) for v in values)
    if outcome.allocation is Allocation.BUYER1:
        return v1 - vs
    if outcome.allocation is Allocation.BUYER2:
        return v2 - vs
    return ZERO


def first_best(prior: ProductPrior) -> Fraction:
    """``E[max(v1 - vs, v2 - vs, 0)]`` using seller prefix sums."""
    cdf = _SellerCdf(prior.seller)
    total = ZERO
    for v1, w1 in prior.buyer1.atoms:
        for v2, w2 in prior.buyer2.atoms:
            top = max(v1, v2)
            k = bisect_left(cdf.values, top)
            if k:
                total += w1 * w2 * (top * cdf.mass[k] - cdf.moment[k])
    return total


def bilateral_gft(p, seller: FiniteDist, buyer: FiniteDist) -> Fraction:
    """Expected GFT of a posted price ``p``: trade iff ``v_b >= p >= v_s``."""
    p = to_value(p)
    return sum(
        (ws * wb * (vb - vs) for vs, ws in seller.atoms if vs <= p for vb, wb in buyer.atoms if vb >= p),
        ZERO,
    )


class _SellerCdf:
    """Prefix sums of the seller distribution for interval queries ``(lo, hi]``."""

    def __init__(self, seller: FiniteDist):
        self.values = seller.values
        self.mass = [ZERO]
        self.moment = [ZERO]
        for v, w in seller.atoms:
            self.mass.append(self.mass[-1] + w)
            self.moment.append(self.moment[-1] + w * v)

    def upto(self, t) -> int:
        return bisect_right(self.values, t)


def _pair_gain(cdf: _SellerCdf, v1, v2, x, y) -> tuple[Fraction, Fraction]:
    """Expected (buyer-1, buyer-2) GFT over the seller for fixed buyer bids and prices.

    The winner for a given seller value is the first clause whose seller
    threshold is met, so the clause list is walked once with the seller
    mass split into consecutive ``(previous threshold, threshold]`` bands.
    A buyer strictly above their offer is the only possible trade.
    """
    clauses = []
    fin1, fin2 = x != NO_TRADE, y != NO_TRADE
    if fin1 and v1 > x:
        clauses.append((x, 1))
    elif fin2 and v2 > y:
        clauses.append((y, 2))
    else:
        if fin1 and fin2 and v1 == x and v2 == y:
            clauses.append((min(x, y), 1 if v1 >= v2 else 2))
        if fin1 and v1 == x:
            clauses.append((x, 1))
        if fin2 and v2 == y:
            clauses.append((y, 2))
    g = [ZERO, ZERO]
    covered = 0
    for t, who in clauses:
        k = cdf.upto(t)
        if k <= covered:
            continue
        dm = cdf.mass[k] - cdf.mass[covered]
        dx = cdf.moment[k] - cdf.moment[covered]
        v = v1 if who == 1 else v2
        g[who - 1] += v * dm - dx
        covered = k
    return g[0], g[1]


def _expected(prior: ProductPrior, prices: Callable) -> GftStats:
    cdf = _SellerCdf(prior.seller)
    g1 = g2 = ZERO
    for v1, w1 in prior.buyer1.atoms:
        for v2, w2 in prior.buyer2.atoms:
            x, y = prices(v1, v2)
            a, b = _pair_gain(cdf, v1, v2, x, y)
            if a or b:
                w = w1 * w2
                g1 += w * a
                g2 += w * b
    return GftStats(g1 + g2, g1, g2, first_best(prior))


def expected_gft(pair: CompatPair, prior: ProductPrior) -> GftStats:
    """Exact expected GFT of the pair's mechanism under a product prior.

    Every prior value must be a point of the pair's support.
    """
    S = set(pair.support)
    for d in prior.agents[1:]:
        missing = [v for v in d.values if v not in S]
        if missing:
            raise PairError(f"prior values {missing[:3]} are not in the pair's support")
    pos = {v: k for k, v in enumerate(pair.support)}
    f1, f2 = pair.f1, pair.f2
    return _expected(prior, lambda v1, v2: (f1.price_value(pos[v2]), f2.price_value(pos[v1])))


def expected_gft_learned(mech: LearnedMechanism, prior: ProductPrior) -> GftStats:
    """Exact expected GFT of a learned (rounding) mechanism under any prior on [0, 1]."""
    return _expected(prior, mech.prices)


def expected_gft_bruteforce(pair: CompatPair, prior: ProductPrior) -> Fraction:
    """Triple sum of realized GFT over all support atoms, via ``execute``."""
    total = ZERO
    for vs, ws in prior.seller.atoms:
        for v1, w1 in prior.buyer1.atoms:
            for v2, w2 in prior.buyer2.atoms:
                total += ws * w1 * w2 * realized_gft(execute(pair, (vs, v1, v2)), (vs, v1, v2))
    return total


def monte_carlo_gft(mech: LearnedMechanism, sampler, n: int, seed: int) -> tuple[float, float]:
    """Sample-mean GFT over ``n`` fresh triples with a 95% normal half-width."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s: Sampler = as_sampler(sampler)
    vs, v1, v2 = s.draw_float(np.random.default_rng(seed), n)
    g = mech.batch_realized_gft(vs, v1, v2)
    mean = float(g.mean())
    if n < 2:
        return mean, 0.0
    return mean, 1.96 * float(g.std(ddof=1)) / math.sqrt(n)


def bilateral_table(support, seller: FiniteDist, buyer: FiniteDist) -> list[Fraction]:
    """``bilateral_gft(s, seller, buyer)`` for every ``s`` in ``support``, in O(|S|)."""
    cdf = _SellerCdf(seller)
    bvals = buyer.values
    # tail sums of buyer mass and first moment
    tail_mass = [ZERO] * (len(bvals) + 1)
    tail_mom = [ZERO] * (len(bvals) + 1)
    for k in range(len(bvals) - 1, -1, -1):
        v, w = buyer.atoms[k]
        tail_mass[k] = tail_mass[k + 1] + w
        tail_mom[k] = tail_mom[k + 1] + w * v
    out = []
    for s in support:
        kb = bisect_left(bvals, s)
        ks = cdf.upto(s)
        out.append(tail_mom[kb] * cdf.mass[ks] - tail_mass[kb] * cdf.moment[ks])
    return out
