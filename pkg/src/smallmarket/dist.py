"""Finite value distributions, product priors, samplers and epsilon-sample tools.

All probabilities and values in this module are exact ``Fraction`` objects.
Continuous distributions exist only as samplers; they never produce a
``FiniteDist`` directly.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

ZERO = Fraction(0)
ONE = Fraction(1)


class DistError(ValueError):
    """Raised for malformed distributions, priors or sampler specs."""


def to_value(x) -> Fraction:
    """Parse a value from a Fraction, int, decimal string or ``"p/q"`` string.

    Floats are converted exactly (binary expansion), so ``to_value(0.1)`` is
    *not* ``1/10``; pass ``"0.1"`` for that.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise DistError(f"not a number: {x!r}")
    if isinstance(x, (int, float)):
        if isinstance(x, float) and not math.isfinite(x):
            raise DistError(f"not a finite number: {x!r}")
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise DistError(f"cannot parse number {x!r}") from exc
    raise DistError(f"cannot parse number {x!r}")


def fmt_value(x: Fraction) -> str:
    """Canonical string form used in every JSON/CSV output."""
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class FiniteDist:
    """A discrete distribution: ascending distinct values with positive weights summing to 1."""

    atoms: tuple[tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        if not self.atoms:
            raise DistError("distribution has no atoms")
        prev = None
        for v, w in self.atoms:
            if v < 0:
                raise DistError(f"negative value {v}")
            if w <= 0:
                raise DistError(f"nonpositive weight {w} at value {v}")
            if prev is not None and v <= prev:
                raise DistError("atoms must be strictly increasing by value")
            prev = v
        total = sum(w for _, w in self.atoms)
        if total != 1:
            raise DistError(f"weights sum to {total}, not 1")

    @property
    def values(self) -> tuple[Fraction, ...]:
        return tuple(v for v, _ in self.atoms)

    @property
    def weights(self) -> tuple[Fraction, ...]:
        return tuple(w for _, w in self.atoms)

    def prob(self, v) -> Fraction:
        v = to_value(v)
        vals = self.values
        k = bisect_left(vals, v)
        if k < len(vals) and vals[k] == v:
            return self.atoms[k][1]
        return ZERO

    def mean(self) -> Fraction:
        return sum((v * w for v, w in self.atoms), ZERO)

    def __len__(self):
        return len(self.atoms)

    def to_json(self) -> list[list[str]]:
        return [[fmt_value(v), fmt_value(w)] for v, w in self.atoms]


def make_finite_dist(pairs: Iterable[tuple], counts: bool = False) -> FiniteDist:
    """Build a FiniteDist from ``(value, weight)`` pairs.

    Duplicate values are merged by summing weights.  With ``counts=True`` the
    weights are raw counts and get renormalized; otherwise they must already
    sum to exactly 1.
    """
    merged: dict[Fraction, Fraction] = {}
    n = 0
    for v, w in pairs:
        n += 1
        v, w = to_value(v), to_value(w)
        if w <= 0:
            raise DistError(f"nonpositive weight {w} at value {v}")
        if v < 0:
            raise DistError(f"negative value {v}")
        merged[v] = merged.get(v, ZERO) + w
    if n == 0:
        raise DistError("empty distribution")
    total = sum(merged.values())
    if counts:
        merged = {v: w / total for v, w in merged.items()}
    elif total != 1:
        raise DistError(f"weights sum to {total}, not 1")
    return FiniteDist(tuple(sorted(merged.items())))


def point_mass(v) -> FiniteDist:
    return FiniteDist(((to_value(v), ONE),))


def uniform_over(values: Iterable) -> FiniteDist:
    vals = [to_value(v) for v in values]
    return make_finite_dist(((v, 1) for v in vals), counts=True)


class Cond(Enum):
    AT_LEAST = "at_least"
    BELOW = "below"
    AT_MOST = "at_most"


def condition(dist: FiniteDist, threshold, mode: Cond) -> FiniteDist | None:
    """Condition ``dist`` on ``V >= t``, ``V < t`` or ``V <= t``.

    Returns ``None`` (the EMPTY result) when the event has probability zero.
    """
    t = to_value(threshold)
    keep = {
        Cond.AT_LEAST: lambda v: v >= t,
        Cond.BELOW: lambda v: v < t,
        Cond.AT_MOST: lambda v: v <= t,
    }[mode]
    atoms = [(v, w) for v, w in dist.atoms if keep(v)]
    if not atoms:
        return None
    mass = sum(w for _, w in atoms)
    return FiniteDist(tuple((v, w / mass) for v, w in atoms))


def empirical(samples: Iterable) -> FiniteDist:
    """Uniform distribution over a multiset of values."""
    c = Counter(to_value(v) for v in samples)
    if not c:
        raise DistError("empty sample")
    n = sum(c.values())
    return FiniteDist(tuple((v, Fraction(k, n)) for v, k in sorted(c.items())))


@dataclass(frozen=True)
class ProductPrior:
    """Independent seller / buyer-1 / buyer-2 distributions plus the merged support.

    The support always contains 0 and 1.  Extra points passed as ``support``
    are kept as zero-probability grid points.
    """

    seller: FiniteDist
    buyer1: FiniteDist
    buyer2: FiniteDist
    support: tuple[Fraction, ...] = field(default=())

    def __post_init__(self):
        s = set(self.seller.values) | set(self.buyer1.values) | set(self.buyer2.values)
        s |= {ZERO, ONE} | {to_value(v) for v in self.support}
        object.__setattr__(self, "support", tuple(sorted(s)))

    @property
    def agents(self) -> tuple[FiniteDist, FiniteDist, FiniteDist]:
        return (self.seller, self.buyer1, self.buyer2)

    def to_json(self) -> dict:
        return {
            "seller": self.seller.to_json(),
            "buyer1": self.buyer1.to_json(),
            "buyer2": self.buyer2.to_json(),
        }


AGENTS = ("seller", "buyer1", "buyer2")


def prior_from_json(doc) -> ProductPrior:
    """Parse the prior JSON schema ``{"seller": [[v, w], ...], "buyer1": ..., "buyer2": ...}``.

    Errors name the offending agent.
    """
    if not isinstance(doc, dict):
        raise DistError("prior must be a JSON object")
    dists = []
    for agent in AGENTS:
        if agent not in doc:
            raise DistError(f"{agent}: missing")
        rows = doc[agent]
        if not isinstance(rows, list) or not all(isinstance(r, list) and len(r) == 2 for r in rows):
            raise DistError(f"{agent}: expected a list of [value, weight] pairs")
        try:
            dists.append(make_finite_dist(rows))
        except DistError as exc:
            raise DistError(f"{agent}: {exc}") from exc
    return ProductPrior(*dists)


def sample_size(epsilon, delta, factor=4) -> int:
    """Per-agent sample count ``ceil(factor / eps^2 * ln(4 / (eps * delta)))``."""
    eps, dlt = to_value(epsilon), to_value(delta)
    if not (0 < eps < 1):
        raise DistError(f"epsilon must be in (0, 1), got {eps}")
    if not (0 < dlt < Fraction(1, 2)):
        raise DistError(f"delta must be in (0, 1/2), got {dlt}")
    e, d = float(eps), float(dlt)
    return math.ceil(float(factor) / e**2 * math.log(4 / (e * d)))


def interval_discrepancy(reference: FiniteDist, sample: Sequence) -> Fraction:
    """Largest gap between reference mass and sample frequency over closed intervals.

    Over the merged sorted point set, an interval's mass difference is a
    contiguous run of per-point differences, so the maximum absolute run sum
    is ``max(prefix) - min(prefix)`` with the empty prefix included.
    """
    emp = empirical(sample)
    points = sorted(set(reference.values) | set(emp.values))
    prefix = ZERO
    hi = lo = ZERO
    for x in points:
        prefix += reference.prob(x) - emp.prob(x)
        hi = max(hi, prefix)
        lo = min(lo, prefix)
    return hi - lo


# --- samplers ---------------------------------------------------------------


class Sampler:
    """Source of value triples.  ``draw`` is exact, ``draw_float`` is for Monte Carlo."""

    correlated = False

    def draw(self, rng: np.random.Generator, n: int) -> tuple[list, list, list]:
        raise NotImplementedError

    def draw_float(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, ...]:
        return tuple(np.array([float(v) for v in col]) for col in self.draw(rng, n))


def _draw_finite(dist: FiniteDist, rng, n) -> np.ndarray:
    p = np.array([float(w) for w in dist.weights])
    return rng.choice(len(dist), size=n, p=p / p.sum())


@dataclass(frozen=True)
class FiniteSampler(Sampler):
    prior: ProductPrior

    def draw(self, rng, n):
        out = []
        for d in self.prior.agents:
            vals = d.values
            out.append([vals[k] for k in _draw_finite(d, rng, n)])
        return tuple(out)

    def draw_float(self, rng, n):
        out = []
        for d in self.prior.agents:
            vals = np.array([float(v) for v in d.values])
            out.append(vals[_draw_finite(d, rng, n)])
        return tuple(out)


@dataclass(frozen=True)
class UniformMix:
    """Finite mixture of uniform intervals ``[(weight, lo, hi), ...]``; one part is plain U[lo, hi]."""

    parts: tuple[tuple[Fraction, Fraction, Fraction], ...]

    def __post_init__(self):
        if not self.parts:
            raise DistError("mixture has no parts")
        for w, lo, hi in self.parts:
            if w <= 0 or lo < 0 or hi < lo:
                raise DistError(f"bad mixture part (w={w}, lo={lo}, hi={hi})")
        if sum(w for w, _, _ in self.parts) != 1:
            raise DistError("mixture weights must sum to 1")

    def draw_float(self, rng, n) -> np.ndarray:
        w = np.array([float(p[0]) for p in self.parts])
        lo = np.array([float(p[1]) for p in self.parts])
        hi = np.array([float(p[2]) for p in self.parts])
        k = rng.choice(len(self.parts), size=n, p=w / w.sum()) if len(self.parts) > 1 else np.zeros(n, int)
        return lo[k] + (hi[k] - lo[k]) * rng.random(n)

    def mean(self) -> Fraction:
        return sum((w * (lo + hi) / 2 for w, lo, hi in self.parts), ZERO)

    def to_json(self) -> dict:
        if len(self.parts) == 1:
            _, lo, hi = self.parts[0]
            return {"kind": "uniform", "lo": fmt_value(lo), "hi": fmt_value(hi)}
        return {
            "kind": "mixture",
            "parts": [{"w": fmt_value(w), "lo": fmt_value(lo), "hi": fmt_value(hi)} for w, lo, hi in self.parts],
        }


def uniform(lo=0, hi=1) -> UniformMix:
    return UniformMix(((ONE, to_value(lo), to_value(hi)),))


@dataclass(frozen=True)
class ContinuousSampler(Sampler):
    """Independent per-agent uniform-mixture marginals."""

    seller: UniformMix
    buyer1: UniformMix
    buyer2: UniformMix

    def draw_float(self, rng, n):
        return tuple(m.draw_float(rng, n) for m in (self.seller, self.buyer1, self.buyer2))

    def draw(self, rng, n):
        return tuple([Fraction(float(x)) for x in col] for col in self.draw_float(rng, n))


@dataclass(frozen=True)
class TripleSampler(Sampler):
    """Correlated sampler: a uniformly (or weighted) random row of a fixed triple list."""

    triples: tuple[tuple[Fraction, Fraction, Fraction], ...]
    weights: tuple[Fraction, ...] | None = None
    correlated = True

    def _rows(self, rng, n):
        if self.weights is None:
            return rng.integers(0, len(self.triples), size=n)
        p = np.array([float(w) for w in self.weights])
        return rng.choice(len(self.triples), size=n, p=p / p.sum())

    def draw(self, rng, n):
        rows = self._rows(rng, n)
        return tuple([self.triples[k][a] for k in rows] for a in range(3))

    @cached_property
    def _float_rows(self) -> np.ndarray:
        return np.array([[float(x) for x in t] for t in self.triples])

    def draw_float(self, rng, n):
        rows = self._rows(rng, n)
        arr = self._float_rows
        return tuple(arr[rows, a] for a in range(3))


def _mix_from_json(doc) -> UniformMix:
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "uniform":
        return uniform(doc.get("lo", 0), doc.get("hi", 1))
    if kind == "mixture":
        return UniformMix(tuple((to_value(p["w"]), to_value(p["lo"]), to_value(p["hi"])) for p in doc["parts"]))
    raise DistError(f"unknown sampler spec {doc!r}")


def sampler_from_json(doc) -> Sampler:
    """Parse a sampler spec.

    A single ``{"kind": "uniform"|"mixture", ...}`` spec applies to all three
    agents; ``{"seller": spec, "buyer1": spec, "buyer2": spec}`` sets them
    individually.  A prior document (lists of pairs) yields a FiniteSampler.
    """
    if isinstance(doc, dict) and "kind" in doc:
        m = _mix_from_json(doc)
        return ContinuousSampler(m, m, m)
    if isinstance(doc, dict) and all(a in doc for a in AGENTS):
        if all(isinstance(doc[a], list) for a in AGENTS):
            return FiniteSampler(prior_from_json(doc))
        return ContinuousSampler(*(_mix_from_json(doc[a]) for a in AGENTS))
    if isinstance(doc, dict) and "triples" in doc:
        from .oracle import triples_from_json

        ts = triples_from_json(doc)
        return TripleSampler(ts.triples, ts.weights)
    raise DistError(f"unknown sampler spec {doc!r}")


@dataclass(frozen=True)
class SampleSet:
    seller: tuple[Fraction, ...]
    buyer1: tuple[Fraction, ...]
    buyer2: tuple[Fraction, ...]
    n: int
    seed: int

    def empirical_prior(self) -> ProductPrior:
        return ProductPrior(empirical(self.seller), empirical(self.buyer1), empirical(self.buyer2))


def as_sampler(source) -> Sampler:
    if isinstance(source, Sampler):
        return source
    if isinstance(source, ProductPrior):
        return FiniteSampler(source)
    return sampler_from_json(source)


def draw_triples(source, n: int, seed: int) -> SampleSet:
    """Draw ``n`` values per agent, deterministically for a given seed."""
    if n < 1:
        raise DistError("n must be >= 1")
    sampler = as_sampler(source)
    cols = sampler.draw(np.random.default_rng(seed), n)
    return SampleSet(*(tuple(c) for c in cols), n=n, seed=seed)


def floor_index(support: Sequence[Fraction], v) -> int:
    """Index of the largest support point <= v (support must start at or below v)."""
    return bisect_right(support, v) - 1


def ceil_index(support: Sequence[Fraction], v) -> int:
    """Index of the smallest support point >= v."""
    return bisect_left(support, v)


def discretize(mix: UniformMix, n: int) -> FiniteDist:
    """Equal-weight grid of ``n`` points per mixture component, merged."""
    if n < 2:
        raise DistError("grid size must be >= 2")
    pairs = []
    for w, lo, hi in mix.parts:
        for k in range(n):
            pairs.append((lo + (hi - lo) * Fraction(k, n - 1), w / n))
    return make_finite_dist(pairs)
