"""Monotonization of compatible pairs under a product prior.

The operator ``g`` replaces one price function by the pointwise best bilateral
price that respects the compatibility constraint imposed by the other
function.  With atoms in the prior that operator can lose GFT: a buyer whose
value equals the other buyer's price still trades through the tie clauses, and
the bilateral objective ignores those trades.  ``canonicalize`` therefore runs
the same three steps (buyer 2, buyer 1, buyer 2) with an exact best response:
the monotone price function that maximizes the true expected GFT against the
fixed partner, subject to the strict compatibility restriction.  The last step
is also capped so the pair comes out tight.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .dist import FiniteDist, ProductPrior, to_value
from .gft import GftStats, bilateral_table, expected_gft
from .mech import Allocation, CompatPair, PairError, PriceFn, resolve


def restriction_index(other: PriceFn, k: int, strict: bool = False) -> int:
    """Index of ``max{v : S[k] >= other(v)}`` (``>`` when ``strict``), or 0 when the set is empty."""
    best = 0
    for v, p in enumerate(other.prices):
        if p < k or (p == k and not strict):
            best = v
    return best


def compat_restriction(other: PriceFn, v, strict: bool = False) -> Fraction:
    """Lowest price the free function may charge at ``v`` given ``other``.

    The default follows the textbook definition, where a tie ``v = other(w)``
    already restricts.  With ``strict`` only ``v > other(w)`` does, which is
    exactly the constraint compatibility imposes.
    """
    S = other.support
    v = to_value(v)
    k = bisect_left(S, v)
    if k == len(S) or S[k] != v:
        raise PairError(f"{v} is not a support point")
    return S[restriction_index(other, k, strict)]


def _restriction_all(other: PriceFn, strict: bool = False) -> list[int]:
    """Restriction index at every support point (monotone, so one sweep)."""
    m = len(other.support)
    # last[p] = largest v with other(v) == p
    last = [-1] * (m + 1)
    for v, p in enumerate(other.prices):
        last[p] = v
    out, cur = [], -1
    for k in range(m):
        if strict:
            out.append(max(cur, 0))
            cur = max(cur, last[k])
        else:
            cur = max(cur, last[k])
            out.append(max(cur, 0))
    return out


def best_index(table: Sequence[Fraction], lo: int) -> int:
    """Highest index ``k >= lo`` maximizing ``table[k]``."""
    best = lo
    for k in range(lo, len(table)):
        if table[k] >= table[best]:
            best = k
    return best


def restricted_best_price(r, seller: FiniteDist, buyer: FiniteDist, candidates: Sequence[Fraction]) -> Fraction:
    """Highest price ``>= r`` among ``{r} ∪ {s in candidates : s >= r}`` with maximal bilateral GFT."""
    r = to_value(r)
    cands = sorted({r} | {s for s in candidates if s >= r})
    table = bilateral_table(cands, seller, buyer)
    return cands[best_index(table, 0)]


def _suffix_best(table: Sequence[Fraction]) -> list[int]:
    """``out[k] = best_index(table, k)`` for every k, in one backward pass."""
    out = [0] * len(table)
    best = len(table) - 1
    for k in range(len(table) - 1, -1, -1):
        if table[k] > table[best]:
            best = k
        out[k] = best
    return out


def apply_g(other: PriceFn, seller: FiniteDist, buyer: FiniteDist, strict: bool = False) -> PriceFn:
    """Restricted best-price function for the buyer whose price ``other`` constrains."""
    S = other.support
    best = _suffix_best(bilateral_table(S, seller, buyer))
    return PriceFn(S, tuple(best[r] for r in _restriction_all(other, strict)))


def best_price_indices(prior: ProductPrior, support=None) -> tuple[int, int]:
    S = support or prior.support
    return (
        best_index(bilateral_table(S, prior.seller, prior.buyer1), 0),
        best_index(bilateral_table(S, prior.seller, prior.buyer2), 0),
    )


def response_table(other: PriceFn, prior: ProductPrior, free: int) -> list[list[Fraction]]:
    """``H[a][q]``: expected GFT given the free buyer's partner value ``S[a]``.

    ``free`` names the buyer whose function is being chosen (1 or 2); its
    argument ``a`` is the other buyer's value and ``q`` ranges over support
    indices plus ``len(S)`` for NO_TRADE.  The expectation is over the seller
    and the free buyer's own value, with the mechanism's tie clauses applied.
    """
    S = other.support
    m = len(S)
    pos = {v: k for k, v in enumerate(S)}
    # seller mass and first moment at or below each support point
    mass = [Fraction(0)] * m
    mom = [Fraction(0)] * m
    for v, w in prior.seller.atoms:
        mass[pos[v]] += w
        mom[pos[v]] += w * v
    for k in range(1, m):
        mass[k] += mass[k - 1]
        mom[k] += mom[k - 1]

    def band(val, lo, hi):
        # GFT of a trade at ``val`` for seller values in (S[lo], S[hi]]
        w = mass[hi] - (mass[lo] if lo >= 0 else 0)
        mu = mom[hi] - (mom[lo] if lo >= 0 else 0)
        return val * w - mu

    own = prior.buyer1 if free == 1 else prior.buyer2
    atoms = [(pos[v], w) for v, w in own.atoms]
    table = []
    for a in range(m):
        row = []
        for q in range(m + 1):
            h = Fraction(0)
            for b, w in atoms:
                x = other.prices[b]
                v1, v2, p1, p2 = (b, a, q, x) if free == 1 else (a, b, x, q)
                lo = -1
                # the outcome only changes when the seller crosses a price
                for t in sorted({p for p in (p1, p2) if p < m}):
                    alloc, _, _ = resolve(t, v1, v2, p1, p2, nt=m)
                    if alloc is not Allocation.SELLER:
                        h += w * band(S[v1] if alloc is Allocation.BUYER1 else S[v2], lo, t)
                    lo = t
            row.append(h)
        table.append(row)
    return table


def best_response(
    other: PriceFn, prior: ProductPrior, free: int, cap: Sequence[int] | None = None, monotone: bool = True
) -> PriceFn:
    """Monotone price function for buyer ``free`` maximizing expected GFT against ``other``.

    Feasible prices at argument ``a`` are those at or above the strict
    compatibility restriction and, when ``cap`` is given, at most ``cap[a]``.
    Ties between optimal functions go to the price ``g`` would post, then to
    larger bilateral GFT, then to lower prices.  With ``monotone=False`` each
    argument is optimized on its own.
    """
    S = other.support
    m = len(S)
    H = response_table(other, prior, free)
    r = _restriction_all(other, strict=True)
    arg = prior.buyer2 if free == 1 else prior.buyer1
    own = prior.buyer1 if free == 1 else prior.buyer2
    weight = [arg.prob(v) for v in S]
    bil = bilateral_table(S, prior.seller, own) + [Fraction(0)]
    g = _suffix_best(bil[:m])
    gq = [g[k] for k in r]

    top = list(cap) if cap is not None else [m] * m

    def score(a, q):
        return (weight[a] * H[a][q], int(q == gq[a]), bil[q], -q)

    def add(x, y):
        return tuple(i + j for i, j in zip(x, y))

    zero = (Fraction(0), 0, Fraction(0), 0)
    if not monotone:
        return PriceFn(S, tuple(max(range(r[a], top[a] + 1), key=lambda q: score(a, q)) for a in range(m)))
    # V[a][lo]: best score of arguments a.. when every price there is >= lo
    V = [[zero] * (m + 1) for _ in range(m + 1)]
    for a in range(m - 1, -1, -1):
        best = None
        for q in range(m, -1, -1):
            if r[a] <= q <= top[a] and V[a + 1][q] is not None:
                cand = add(score(a, q), V[a + 1][q])
                best = cand if best is None or cand > best else best
            V[a][q] = best
    if V[0][0] is None:
        raise PairError("no monotone price function fits between the restriction and the cap")
    out, prev = [], 0
    for a in range(m):
        lo = max(prev, r[a])
        q = next(
            q
            for q in range(lo, top[a] + 1)
            if V[a + 1][q] is not None and add(score(a, q), V[a + 1][q]) == V[a][lo]
        )
        out.append(q)
        prev = q
    return PriceFn(S, tuple(out))


def tight_cap(f1: PriceFn, i1: int, i2: int) -> list[int]:
    """Largest f2 index at each v1 that keeps ``(f1, f2)`` tight after ``(S[i1], S[i2])``.

    For ``v1 >= S[i1]`` this is the smallest ``v2 >= S[i2]`` with
    ``v1 < f1(v2)``; elsewhere, and when no such ``v2`` exists, it is NO_TRADE.
    """
    m = len(f1.support)
    out = []
    for a in range(m):
        c = m
        if a >= i1:
            c = next((b for b in range(i2, m) if a < f1.prices[b]), m)
        out.append(c)
    return out


@dataclass(frozen=True)
class CanonicalSteps:
    """Intermediate pairs of the three-step pipeline with their expected GFT."""

    pairs: tuple[CompatPair, ...]  # input, (f1, f2hat), (f1*, f2hat), (f1*, f2*)
    stats: tuple[GftStats, ...]
    best_prices: tuple[Fraction, Fraction]

    @property
    def result(self) -> CompatPair:
        return self.pairs[-1]


def canonicalize_steps(pair: CompatPair, prior: ProductPrior) -> CanonicalSteps:
    S = pair.support
    missing = [v for v in prior.support if v not in set(S)]
    if missing:
        raise PairError(f"prior support points {missing[:3]} are not in the pair's support")
    f1, f2 = pair.f1, pair.f2
    i1, i2 = best_price_indices(prior, S)
    f2_hat = best_response(f1, prior, 2)
    base = expected_gft(pair, prior).total
    if expected_gft(CompatPair(f1, f2_hat), prior).total < base:
        # the monotone response can trail a non-monotone input; the pointwise one never does
        f2_hat = best_response(f1, prior, 2, monotone=False)
    f1_star = best_response(f2_hat, prior, 1)
    f2_star = best_response(f1_star, prior, 2, cap=tight_cap(f1_star, i1, i2))
    pairs = (pair, CompatPair(f1, f2_hat), CompatPair(f1_star, f2_hat), CompatPair(f1_star, f2_star))
    return CanonicalSteps(pairs, tuple(expected_gft(p, prior) for p in pairs), (S[i1], S[i2]))


def canonicalize(pair: CompatPair, prior: ProductPrior) -> CompatPair:
    """Monotone, compatible pair tight after the best prices, with no less expected GFT."""
    return canonicalize_steps(pair, prior).result
