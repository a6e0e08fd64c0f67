"""Seeded generators for random priors and price-function pairs used across tests."""

from fractions import Fraction

import numpy as np

from smallmarket.dist import ProductPrior, make_finite_dist
from smallmarket.mech import CompatPair, PriceFn


def random_prior(rng: np.random.Generator, m: int, denominator: int = 20) -> ProductPrior:
    """Product prior whose merged support (including 0 and 1) has exactly ``m`` points."""
    interior = sorted(rng.choice(np.arange(1, denominator), size=m - 2, replace=False))
    values = [Fraction(0)] + [Fraction(int(k), denominator) for k in interior] + [Fraction(1)]
    subsets = []
    for _ in range(3):
        size = int(rng.integers(1, m + 1))
        subsets.append(set(int(k) for k in rng.choice(m, size=size, replace=False)))
    covered = set().union(*subsets)
    subsets[0] |= {k for k in range(1, m - 1) if k not in covered}
    dists = []
    for sub in subsets:
        pairs = [(values[k], int(rng.integers(1, 6))) for k in sorted(sub)]
        dists.append(make_finite_dist(pairs, counts=True))
    prior = ProductPrior(*dists)
    assert len(prior.support) == m
    return prior


def _lower_bounds(f1, m):
    """Smallest allowed f2 index at each a: f2[a] >= b for every b with f1[b] < a."""
    out = []
    for a in range(m):
        lb = 0
        for b in range(m):
            if f1[b] < a:
                lb = max(lb, b)
        out.append(lb)
    return out


def random_compatible_pair(rng: np.random.Generator, support) -> CompatPair:
    m = len(support)
    f1 = [int(x) for x in rng.integers(0, m + 1, size=m)]
    lb = _lower_bounds(f1, m)
    f2 = [int(rng.integers(lb[a], m + 1)) for a in range(m)]
    return CompatPair(PriceFn(tuple(support), tuple(f1)), PriceFn(tuple(support), tuple(f2)))


def random_monotone_pair(rng: np.random.Generator, support) -> CompatPair:
    m = len(support)
    f1 = sorted(int(x) for x in rng.integers(0, m + 1, size=m))
    lb = _lower_bounds(f1, m)
    raw = sorted(int(x) for x in rng.integers(0, m + 1, size=m))
    f2, run = [], 0
    for a in range(m):
        run = max(run, lb[a])
        f2.append(max(raw[a], run))
    return CompatPair(PriceFn(tuple(support), tuple(f1)), PriceFn(tuple(support), tuple(f2)))
