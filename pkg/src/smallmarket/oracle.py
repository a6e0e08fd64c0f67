"""Ground truth: exhaustive optimizers, incentive audits and the overfit mechanism.

Everything here is deliberately independent of the DP solver so the two
can be checked against each other.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .dist import ONE, ZERO, DistError, ProductPrior, fmt_value, to_value
from .gft import realized_gft
from .mech import (
    NO_TRADE,
    Allocation,
    CompatPair,
    Outcome,
    PriceFn,
    _compat_witness,
    execute,
    resolve,
)

MONOTONE_CAP = 6
ALL_COMPATIBLE_CAP = 4


class CapExceeded(ValueError):
    pass


class NotGeneric(ValueError):
    def __init__(self, witness):
        super().__init__(f"triple set is not generic: value {witness} repeats")
        self.witness = witness


@dataclass(frozen=True)
class TripleSet:
    triples: tuple[tuple[Fraction, Fraction, Fraction], ...]
    weights: tuple[Fraction, ...] | None = None

    def __post_init__(self):
        if not self.triples:
            raise DistError("empty triple set")
        if self.weights is not None:
            if len(self.weights) != len(self.triples):
                raise DistError("weights and triples differ in length")
            if any(w <= 0 for w in self.weights) or sum(self.weights) != 1:
                raise DistError("triple weights must be positive and sum to 1")

    def weighted(self):
        n = len(self.triples)
        ws = self.weights or (Fraction(1, n),) * n
        return zip(self.triples, ws)

    def to_json(self) -> dict:
        doc = {"triples": [[fmt_value(v) for v in t] for t in self.triples]}
        if self.weights is not None:
            doc["weights"] = [fmt_value(w) for w in self.weights]
        return doc


def triples_from_json(doc) -> TripleSet:
    try:
        rows = doc["triples"]
        triples = tuple(tuple(to_value(v) for v in row) for row in rows)
        if any(len(t) != 3 for t in triples):
            raise DistError("every triple needs three values")
        weights = doc.get("weights")
        if weights is not None:
            weights = tuple(to_value(w) for w in weights)
    except (KeyError, TypeError) as exc:
        raise DistError(f"malformed triple set: {exc}") from exc
    return TripleSet(triples, weights)


def is_generic(tset: TripleSet, weak: bool = False) -> tuple[bool, Fraction | None]:
    """All 3n values distinct (or, with ``weak``, distinct within each coordinate)."""
    if weak:
        for c in range(3):
            seen = set()
            for t in tset.triples:
                if t[c] in seen:
                    return False, t[c]
                seen.add(t[c])
        return True, None
    seen = set()
    for t in tset.triples:
        for v in t:
            if v in seen:
                return False, v
            seen.add(v)
    return True, None


def overfit_mechanism(tset: TripleSet, weak: bool = False) -> CompatPair:
    """Pair that posts the higher buyer's exact value, keyed on the lower buyer's report."""
    ok, witness = is_generic(tset, weak=weak)
    if not ok:
        raise NotGeneric(witness)
    grid = tuple(sorted({v for t in tset.triples for v in t} | {ZERO, ONE}))
    pos = {v: k for k, v in enumerate(grid)}
    m = len(grid)
    f1 = [m] * m
    f2 = [m] * m
    for _, v1, v2 in tset.triples:
        if v2 <= v1:
            f1[pos[v2]] = pos[v1]
        if v1 <= v2:
            f2[pos[v1]] = pos[v2]
    return CompatPair(PriceFn(grid, tuple(f1)), PriceFn(grid, tuple(f2)))


def triple_gft(pair: CompatPair, tset: TripleSet) -> Fraction:
    return sum((w * realized_gft(execute(pair, t), t) for t, w in tset.weighted()), ZERO)


def triple_first_best(tset: TripleSet) -> Fraction:
    return sum((w * max(t[1] - t[0], t[2] - t[0], ZERO) for t, w in tset.weighted()), ZERO)


def random_generic_set(rng: np.random.Generator, n: int, denominator: int = 10**6) -> TripleSet:
    """``n`` triples of distinct rationals ``k / denominator`` in (0, 1)."""
    ks = rng.choice(np.arange(1, denominator), size=3 * n, replace=False)
    vals = [Fraction(int(k), denominator) for k in ks]
    return TripleSet(tuple(tuple(vals[3 * i : 3 * i + 3]) for i in range(n)))


# --- exhaustive search over price functions ---------------------------------


class Mode(Enum):
    MONOTONE = "monotone"
    ALL_COMPATIBLE = "all"


def monotone_maps(m: int) -> Iterator[tuple[int, ...]]:
    """Non-decreasing maps from m support points to price indices 0..m (m = NO_TRADE)."""
    return itertools.combinations_with_replacement(range(m + 1), m)


def enumerate_monotone_pairs(support: Sequence, cap: int = MONOTONE_CAP) -> Iterator[CompatPair]:
    S = tuple(to_value(v) for v in support)
    m = len(S)
    if m > cap:
        raise CapExceeded(f"|S| = {m} exceeds cap {cap}")
    maps = list(monotone_maps(m))
    for a in maps:
        for b in maps:
            if _compat_witness(a, b, m) is None:
                yield CompatPair(PriceFn(S, a), PriceFn(S, b))


def _payoff_tables(prior: ProductPrior, S) -> tuple[dict, int]:
    """Integer-scaled expected GFT contribution per buyer-value cell and offered prices.

    ``table[(a, b)][x, y]`` is the weight-scaled GFT at buyer values
    ``(S[a], S[b])`` when buyer 1 is offered ``S[x]`` and buyer 2 ``S[y]``
    (index ``m`` = no offer), summed over the seller's distribution.
    """
    m = len(S)
    prices = list(S) + [NO_TRADE]
    raw = {}
    for a, v1 in enumerate(S):
        w1 = prior.buyer1.prob(v1)
        for b, v2 in enumerate(S):
            w2 = prior.buyer2.prob(v2)
            if not (w1 and w2):
                continue
            cell = [[ZERO] * (m + 1) for _ in range(m + 1)]
            for x in range(m + 1):
                for y in range(m + 1):
                    g = ZERO
                    for vs, ws in prior.seller.atoms:
                        alloc, _, _ = resolve(vs, v1, v2, prices[x], prices[y])
                        if alloc is Allocation.BUYER1:
                            g += ws * (v1 - vs)
                        elif alloc is Allocation.BUYER2:
                            g += ws * (v2 - vs)
                    cell[x][y] = w1 * w2 * g
            raw[(a, b)] = cell
    den = 1
    for cell in raw.values():
        for row in cell:
            for v in row:
                den = math.lcm(den, v.denominator)
    bound = sum(abs(v.numerator) * (den // v.denominator) for cell in raw.values() for row in cell for v in row)
    dtype = np.int64 if bound < 2**62 else object
    tables = {
        k: np.array([[v.numerator * (den // v.denominator) for v in row] for row in cell], dtype=dtype)
        for k, cell in raw.items()
    }
    return tables, den


def brute_force_opt(prior: ProductPrior, mode: Mode = Mode.ALL_COMPATIBLE, cap: int | None = None):
    """Exact GFT maximizer over every (monotone or arbitrary) compatible pair on the prior's support.

    Returns ``(pair, gft)``; ties resolve to the first pair in enumeration order.
    """
    S = prior.support
    m = len(S)
    if cap is None:
        cap = MONOTONE_CAP if mode is Mode.MONOTONE else ALL_COMPATIBLE_CAP
    if m > cap:
        raise CapExceeded(f"|S| = {m} exceeds cap {cap} for {mode.value}")
    if mode is Mode.MONOTONE:
        maps = np.array(list(monotone_maps(m)), dtype=np.int64)
    else:
        maps = np.array(list(itertools.product(range(m + 1), repeat=m)), dtype=np.int64)
    tables, den = _payoff_tables(prior, S)
    n = len(maps)
    dtype = next(iter(tables.values())).dtype if tables else np.int64
    total = np.zeros((n, n), dtype=dtype)
    for (a, b), cell in tables.items():
        total += cell[maps[:, b][:, None], maps[:, a][None, :]]
    ok = np.ones((n, n), dtype=bool)
    for a in range(m):
        for b in range(m):
            ok &= ~((a > maps[:, b])[:, None] & (b > maps[:, a])[None, :])
    # every-NO_TRADE pair is compatible, so the max is over a nonempty set
    masked = np.where(ok, total, -1)
    k = int(np.argmax(masked))
    r, c = divmod(k, n)
    pair = CompatPair(PriceFn(S, tuple(int(v) for v in maps[r])), PriceFn(S, tuple(int(v) for v in maps[c])))
    return pair, Fraction(int(masked[r, c]), den)


# --- incentive audit --------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # DSIC | IR | SBB | NORMALIZATION
    agent: str
    bids: tuple
    misreport: Fraction | None = None
    detail: str = ""


AGENT_NAMES = ("seller", "buyer1", "buyer2")


def utility(agent: int, outcome: Outcome, values) -> Fraction:
    """Quasi-linear utility of ``agent`` (0 seller, 1/2 buyers) under true ``values``."""
    alloc = outcome.allocation
    pay = outcome.payments[agent]
    if agent == 0:
        sold = alloc in (Allocation.BUYER1, Allocation.BUYER2)
        return -(values[0] if sold else ZERO) - pay
    return (values[agent] if int(alloc) == agent else ZERO) - pay


def _wins(agent: int, alloc: Allocation) -> bool:
    if agent == 0:
        return alloc is not Allocation.SELLER
    return int(alloc) == agent


def dsic_audit(executor: Callable[[Fraction, Fraction, Fraction], Outcome], grid: Sequence) -> list[Violation]:
    """Check SBB, normalization, ex-post IR and unilateral-deviation DSIC on ``grid``³."""
    grid = [to_value(v) for v in grid]
    cache: dict[tuple, Outcome] = {}

    def run(t):
        if t not in cache:
            cache[t] = executor(*t)
        return cache[t]

    out: list[Violation] = []
    for t in itertools.product(grid, repeat=3):
        o = run(t)
        if sum(o.payments) != 0:
            out.append(Violation("SBB", "all", t, detail=f"payments {tuple(map(str, o.payments))}"))
        for agent in range(3):
            name = AGENT_NAMES[agent]
            if not _wins(agent, o.allocation) and o.payments[agent] != 0:
                out.append(Violation("NORMALIZATION", name, t, detail=f"loser pays {o.payments[agent]}"))
            u = utility(agent, o, t)
            if u < 0:
                out.append(Violation("IR", name, t, detail=f"utility {u}"))
            for r in grid:
                if r == t[agent]:
                    continue
                dev = list(t)
                dev[agent] = r
                ud = utility(agent, run(tuple(dev)), t)
                if ud > u:
                    out.append(Violation("DSIC", name, t, misreport=r, detail=f"{u} < {ud}"))
    return out


def pair_executor(pair: CompatPair) -> Callable:
    return lambda vs, v1, v2: execute(pair, (vs, v1, v2))
