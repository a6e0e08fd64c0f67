"""Price-function pairs and the mechanism they induce.

A pair ``(f1, f2)`` lives on an ordered support ``S``.  ``f1`` maps buyer 2's
value to buyer 1's price, ``f2`` maps buyer 1's value to buyer 2's price.
Prices are stored as indices into ``S``; the index ``len(S)`` is the
NO_TRADE sentinel (an infinite price, i.e. no offer).
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Sequence

from .dist import ZERO, fmt_value, to_value

NO_TRADE = math.inf


class PairError(ValueError):
    """Invalid price functions: wrong length, off-support price or incompatibility."""


class Allocation(IntEnum):
    SELLER = 0
    BUYER1 = 1
    BUYER2 = 2


# winning-outcome sets
WINS = {
    "seller": frozenset({Allocation.BUYER1, Allocation.BUYER2}),
    "buyer1": frozenset({Allocation.BUYER1}),
    "buyer2": frozenset({Allocation.BUYER2}),
}


@dataclass(frozen=True)
class Outcome:
    allocation: Allocation
    payments: tuple[Fraction, Fraction, Fraction]  # (seller, buyer1, buyer2)
    case: int

    @classmethod
    def trade(cls, buyer: Allocation, price, case: int) -> "Outcome":
        pay = [-price, ZERO, ZERO]
        pay[int(buyer)] = price
        return cls(buyer, tuple(pay), case)


NONE_OUTCOME = Outcome(Allocation.SELLER, (ZERO, ZERO, ZERO), 6)


def resolve(vs, v1, v2, x, y, nt=NO_TRADE, literal=False):
    """Apply the ordered clauses to bids and the two offered prices.

    ``x`` is buyer 1's price f1(v2), ``y`` buyer 2's price f2(v1); ``nt`` marks
    a non-offer.  Works on any totally ordered representation (Fractions,
    floats, support indices).  Returns ``(allocation, case, price)``.

    A buyer strictly above their offer claims the item: the trade happens at
    that offer if the seller accepts it and otherwise nothing happens.  The
    tie clauses only run when no buyer is strictly above.  With
    ``literal=True`` a rejected strict clause falls through to the tie
    clauses instead, which lets the seller block buyer 1 and sell to buyer 2
    at a higher price (see ``tests/test_mech.py``).
    """
    ok1 = x != nt and x >= vs
    ok2 = y != nt and y >= vs
    above1 = x != nt and v1 > x
    above2 = y != nt and v2 > y
    if above1 and (ok1 or not literal):
        return (Allocation.BUYER1, 1, x) if ok1 else (Allocation.SELLER, 6, None)
    if above2 and (ok2 or not literal):
        return (Allocation.BUYER2, 2, y) if ok2 else (Allocation.SELLER, 6, None)
    if ok1 and ok2 and v1 == x and v2 == y:
        if v1 >= v2:
            return Allocation.BUYER1, 3, v1
        return Allocation.BUYER2, 3, v2
    if ok1 and v1 == x:
        return Allocation.BUYER1, 4, x
    if ok2 and v2 == y:
        return Allocation.BUYER2, 5, y
    return Allocation.SELLER, 6, None


@dataclass(frozen=True)
class PriceFn:
    """A price function on ``support``; ``prices[k]`` is an index into support or ``len(support)``."""

    support: tuple[Fraction, ...]
    prices: tuple[int, ...]

    def __post_init__(self):
        m = len(self.support)
        if len(self.prices) != m:
            raise PairError(f"price array has length {len(self.prices)}, support has {m}")
        for p in self.prices:
            if not (0 <= p <= m):
                raise PairError(f"price index {p} outside support")

    @classmethod
    def from_values(cls, support, values) -> "PriceFn":
        support = tuple(support)
        pos = {v: k for k, v in enumerate(support)}
        idx = []
        for v in values:
            if v is None or v == NO_TRADE or v == "inf":
                idx.append(len(support))
                continue
            v = to_value(v)
            if v not in pos:
                raise PairError(f"price {v} is not a support point")
            idx.append(pos[v])
        return cls(support, tuple(idx))

    @classmethod
    def constant(cls, support, value) -> "PriceFn":
        return cls.from_values(support, [value] * len(support))

    def price_value(self, k: int):
        p = self.prices[k]
        return NO_TRADE if p == len(self.support) else self.support[p]

    def __call__(self, v):
        """Price at a support point ``v`` (any form ``to_value`` accepts)."""
        v = to_value(v)
        k = bisect_left(self.support, v)
        if k == len(self.support) or self.support[k] != v:
            raise PairError(f"{v} is not a support point")
        return self.price_value(k)

    def values(self) -> list:
        return [self.price_value(k) for k in range(len(self.support))]

    def is_monotone(self) -> bool:
        return all(a <= b for a, b in zip(self.prices, self.prices[1:]))

    def to_json(self) -> list[str]:
        return ["inf" if v == NO_TRADE else fmt_value(v) for v in self.values()]


@dataclass(frozen=True)
class ValidationReport:
    compatible: bool
    compat_witness: tuple | None
    monotone1: bool
    monotone2: bool
    tight_from: tuple | None
    tight: bool | None
    tight_witness: tuple | None


def _compat_witness(f1: Sequence[int], f2: Sequence[int], m: int, strict_top: bool = False):
    """Index pair ``(a, b)`` with ``a > f1[b]`` and ``b > f2[a]``, or None.

    With ``strict_top=False`` the first condition is relaxed to ``a >= f1[b]``
    for every ``a`` below the top support point; this is the condition under
    which round-down/round-up evaluation off the support stays compatible.
    """
    # suffix_min[b] = (min f1 over b' >= b, argmin)
    suffix = [(m + 1, -1)] * (m + 1)
    for b in range(m - 1, -1, -1):
        suffix[b] = min((f1[b], b), suffix[b + 1])
    for a in range(m):
        if f2[a] >= m:
            continue
        best, b = suffix[f2[a] + 1]
        if b < 0:
            continue
        if best < a or (strict_top and a < m - 1 and best == a):
            return a, b
    return None


def _tight_witness(f1, f2, m, i0, j0):
    """Index pair ``(a >= i0, b >= j0)`` with ``a < f1[b]`` and ``b < f2[a]``, or None."""
    # prefix_max[b] = max f1 over j0 <= b' <= b
    prefix = []
    cur = (-1, -1)
    for b in range(j0, m):
        cur = max(cur, (f1[b], b))
        prefix.append(cur)
    for a in range(i0, m):
        top = min(f2[a], m) - 1  # largest b with b < f2[a]
        if top < j0:
            continue
        best, b = prefix[top - j0]
        if best > a:
            return a, b
    return None


def validate_pair(f1: PriceFn, f2: PriceFn, tight_from: tuple | None = None) -> ValidationReport:
    """Check compatibility, monotonicity and (optionally) tightness after ``tight_from``.

    ``tight_from`` is a pair of support values ``(p1, p2)``.  Witnesses are
    returned as value pairs ``(v1, v2)``.
    """
    if f1.support != f2.support:
        raise PairError("price functions are defined on different supports")
    S = f1.support
    m = len(S)
    w = _compat_witness(f1.prices, f2.prices, m)
    tight = tw = None
    if tight_from is not None:
        i0 = bisect_left(S, to_value(tight_from[0]))
        j0 = bisect_left(S, to_value(tight_from[1]))
        t = _tight_witness(f1.prices, f2.prices, m, i0, j0)
        tight = t is None
        tw = None if t is None else (S[t[0]], S[t[1]])
    return ValidationReport(
        compatible=w is None,
        compat_witness=None if w is None else (S[w[0]], S[w[1]]),
        monotone1=f1.is_monotone(),
        monotone2=f2.is_monotone(),
        tight_from=tight_from,
        tight=tight,
        tight_witness=tw,
    )


@dataclass(frozen=True)
class CompatPair:
    f1: PriceFn
    f2: PriceFn

    def __post_init__(self):
        if self.f1.support != self.f2.support:
            raise PairError("price functions are defined on different supports")
        w = _compat_witness(self.f1.prices, self.f2.prices, len(self.support))
        if w is not None:
            S = self.support
            raise PairError(f"incompatible pair: witness (v1, v2) = ({S[w[0]]}, {S[w[1]]})")

    @property
    def support(self) -> tuple[Fraction, ...]:
        return self.f1.support

    def index_of(self, v) -> int:
        S = self.support
        k = bisect_left(S, v)
        if k == len(S) or S[k] != v:
            raise PairError(f"bid {v} is not a support point")
        return k

    def to_json(self) -> dict:
        return {
            "support": [fmt_value(v) for v in self.support],
            "f1": self.f1.to_json(),
            "f2": self.f2.to_json(),
        }

    def report(self, tight_from=None) -> ValidationReport:
        return validate_pair(self.f1, self.f2, tight_from)


def pair_from_arrays(support, f1_values, f2_values) -> CompatPair:
    """Build and validate a pair from price values (``"inf"``/None/inf for NO_TRADE)."""
    support = tuple(to_value(v) for v in support)
    if any(a >= b for a, b in zip(support, support[1:])):
        raise PairError("support must be strictly increasing")
    return CompatPair(PriceFn.from_values(support, f1_values), PriceFn.from_values(support, f2_values))


def pair_from_json(doc) -> CompatPair:
    try:
        return pair_from_arrays(doc["support"], doc["f1"], doc["f2"])
    except (KeyError, TypeError) as exc:
        raise PairError(f"malformed pair document: {exc}") from exc


def execute_index(pair: CompatPair, s: int, a: int, b: int) -> tuple[Allocation, int, int | None]:
    """``resolve`` on support indices; returns the price as an index."""
    m = len(pair.support)
    return resolve(s, a, b, pair.f1.prices[b], pair.f2.prices[a], nt=m)


def _outcome(alloc, case, price) -> Outcome:
    if alloc is Allocation.SELLER:
        return NONE_OUTCOME
    return Outcome.trade(alloc, price, case)


def execute(pair: CompatPair, bids) -> Outcome:
    """Run the mechanism on on-support bids ``(v_s, v_1, v_2)``.

    Buyer bids must be support points; the seller bid may be any value.
    """
    vs, v1, v2 = (to_value(b) for b in bids)
    a, b = pair.index_of(v1), pair.index_of(v2)
    x, y = pair.f1.price_value(b), pair.f2.price_value(a)
    return _outcome(*resolve(vs, v1, v2, x, y))


@dataclass(frozen=True)
class LearnedMechanism:
    """A pair extended to all of [0, 1] by rounding buyer 1 down and buyer 2 up.

    f2 is evaluated at the largest support point <= v1 and f1 at the smallest
    support point >= v2; bids themselves are compared unrounded.
    """

    pair: CompatPair
    rounding: str = "buyer1-down/buyer2-up"

    def __post_init__(self):
        S = self.support
        if not S or S[0] != 0 or S[-1] != 1:
            raise PairError("learned mechanisms need a support spanning [0, 1]")
        w = _compat_witness(self.pair.f1.prices, self.pair.f2.prices, len(S), strict_top=True)
        if w is not None:
            raise PairError(
                f"rounding breaks compatibility near (v1, v2) = ({S[w[0]]}, {S[w[1]]})"
            )

    @property
    def support(self):
        return self.pair.support

    def prices(self, v1, v2):
        S = self.support
        a = bisect_right(S, v1) - 1
        b = bisect_left(S, v2)
        return self.pair.f1.price_value(b), self.pair.f2.price_value(a)

    def to_json(self) -> dict:
        return {**self.pair.to_json(), "rounding": self.rounding}

    def batch_realized_gft(self, vs, v1, v2):
        """Vectorized realized GFT for float arrays of bids."""
        import numpy as np

        S = np.array([float(v) for v in self.support])
        m = len(S)
        ext = np.append(S, np.inf)
        a = np.searchsorted(S, v1, side="right") - 1
        b = np.searchsorted(S, v2, side="left")
        x = ext[np.asarray(self.pair.f1.prices)[np.minimum(b, m - 1)]]
        y = ext[np.asarray(self.pair.f2.prices)[np.clip(a, 0, m - 1)]]
        ok1 = np.isfinite(x) & (x >= vs)
        ok2 = np.isfinite(y) & (y >= vs)
        above1 = np.isfinite(x) & (v1 > x)
        above2 = ~above1 & np.isfinite(y) & (v2 > y)
        c1 = above1 & ok1
        c2 = above2 & ok2
        rest = ~above1 & ~above2
        eq1 = ok1 & (v1 == x)
        eq2 = ok2 & (v2 == y)
        c3 = rest & eq1 & eq2
        c4 = rest & ~c3 & eq1
        c5 = rest & ~c3 & ~c4 & eq2
        win1 = c1 | c4 | (c3 & (v1 >= v2))
        win2 = c2 | c5 | (c3 & (v1 < v2))
        return np.where(win1, v1 - vs, 0.0) + np.where(win2, v2 - vs, 0.0)


def execute_learned(mech: LearnedMechanism, bids) -> Outcome:
    """Run a learned mechanism on arbitrary bids in [0, 1]."""
    vs, v1, v2 = (to_value(b) for b in bids)
    x, y = mech.prices(v1, v2)
    return _outcome(*resolve(vs, v1, v2, x, y))
