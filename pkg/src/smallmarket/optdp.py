"""GFT-optimal simple mechanism for a finite product prior by dynamic programming.

Outside the box above the best prices ``(p1, p2)`` the optimal pair is flat
at those prices.  Inside the box the pair is a monotone staircase: each cell
``(i, j)`` either fixes ``f2(s_i) = s_j`` and moves right, or fixes
``f1(s_j) = s_i`` and moves up.  ``G[i][j]`` holds the best GFT collectable
on ``v1 >= s_i, v2 >= s_j`` given that the staircase passes through the cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .dist import ProductPrior
from .gft import GftStats, bilateral_table, expected_gft
from .mech import CompatPair, PriceFn
from .transform import best_index

RIGHT, UP = 1, 2

# keep the full G matrix only for boxes up to this many cells
KEEP_G_CELLS = 250_000


@dataclass(frozen=True)
class DpTables:
    support: tuple[Fraction, ...]
    p1_index: int
    p2_index: int
    pointers: tuple[bytes, ...]  # pointers[i - p1_index][j - p2_index]
    scale: int  # G values are stored as integers times 1/scale
    g_rows: tuple[tuple[int, ...], ...] | None
    dp_total: Fraction

    @property
    def m(self) -> int:
        return len(self.support)

    def pointer(self, i: int, j: int) -> int:
        return self.pointers[i - self.p1_index][j - self.p2_index]

    def g(self, i: int, j: int) -> Fraction:
        """G at support indices ``(i, j)``; indices equal to m are the zero boundary."""
        if i == self.m or j == self.m:
            return Fraction(0)
        if self.g_rows is None:
            raise ValueError("G matrix was not retained for this support size")
        return Fraction(self.g_rows[i - self.p1_index][j - self.p2_index], self.scale)


@dataclass(frozen=True)
class SolveResult:
    pair: CompatPair
    stats: GftStats
    tables: DpTables


def best_prices(prior: ProductPrior) -> tuple[Fraction, Fraction]:
    """Highest GFT-maximizing posted price for seller-buyer1 and seller-buyer2."""
    S = prior.support
    t1 = bilateral_table(S, prior.seller, prior.buyer1)
    t2 = bilateral_table(S, prior.seller, prior.buyer2)
    return S[best_index(t1, 0)], S[best_index(t2, 0)]


def _integer_scale(values) -> tuple[list[int], int]:
    den = 1
    for v in values:
        den = math.lcm(den, v.denominator)
    return [v.numerator * (den // v.denominator) for v in values], den


def fill_dp(prior: ProductPrior, p1, p2, keep_g: bool | None = None) -> DpTables:
    """Fill the DP box from ``(m, m)`` down to the best-price cell ``(p1, p2)``."""
    S = prior.support
    m = len(S)
    i1, j2 = S.index(p1), S.index(p2)
    P1 = [prior.buyer1.prob(s) for s in S]
    P2 = [prior.buyer2.prob(s) for s in S]
    A1 = bilateral_table(S, prior.seller, prior.buyer1)
    A2 = bilateral_table(S, prior.seller, prior.buyer2)

    # exact integer arithmetic: G1/G2 local terms are P * A products
    pi, dp = _integer_scale(P1 + P2)
    ai, da = _integer_scale(A1 + A2)
    P1i, P2i, A1i, A2i = pi[:m], pi[m:], ai[:m], ai[m:]
    scale = dp * da

    rows_i = m - i1
    cols_j = m - j2
    if keep_g is None:
        keep_g = rows_i * cols_j <= KEEP_G_CELLS
    below = [0] * (cols_j + 1)  # row i + 1, with the j = m boundary appended
    kept: list[tuple[int, ...]] = []
    pointers: list[bytes] = []
    for i in range(m - 1, i1 - 1, -1):
        row = [0] * (cols_j + 1)
        ptr = bytearray(cols_j)
        p1i, a1i = P1i[i], A1i[i]
        for jj in range(cols_j - 1, -1, -1):
            j = j2 + jj
            g1 = p1i * A2i[j] + below[jj]
            g2 = P2i[j] * a1i + row[jj + 1]
            if g1 >= g2:
                row[jj] = g1
                ptr[jj] = RIGHT
            else:
                row[jj] = g2
                ptr[jj] = UP
        pointers.append(bytes(ptr))
        if keep_g:
            kept.append(tuple(row[:cols_j]))
        below = row
    pointers.reverse()
    kept.reverse()

    # region outside the box: flat best prices
    below1 = sum((P1[k] for k in range(i1)), Fraction(0))
    below2 = sum((P2[k] for k in range(j2)), Fraction(0))
    total = below1 * A2[j2] + below2 * A1[i1] + Fraction(below[0], scale)
    return DpTables(S, i1, j2, tuple(pointers), scale, tuple(kept) if keep_g else None, total)


def extract_pair(tables: DpTables) -> CompatPair:
    """Walk the pointers from the best-price cell and read off the staircase.

    Below the box both functions are flat at the best prices.  Once one axis
    is exhausted the other function's remaining entries become NO_TRADE; the
    corner cell ``(m, m)`` sets both functions (the only allowed double tie).
    """
    m = tables.m
    i1, j2 = tables.p1_index, tables.p2_index
    f1 = [None] * m
    f2 = [None] * m
    for j in range(j2):
        f1[j] = i1
    for i in range(i1):
        f2[i] = j2
    i, j = i1, j2
    while i < m or j < m:
        if i == m:
            f1[j] = m
            j += 1
        elif j == m:
            f2[i] = m
            i += 1
        elif i == m - 1 and j == m - 1:
            f1[j] = i
            f2[i] = j
            i = j = m
        else:
            d = tables.pointer(i, j)
            if d == RIGHT:
                f2[i] = j
                i += 1
            elif d == UP:
                f1[j] = i
                j += 1
            else:
                raise ValueError(f"malformed pointer {d!r} at ({i}, {j})")
    S = tables.support
    return CompatPair(PriceFn(S, tuple(f1)), PriceFn(S, tuple(f2)))


def solve(prior: ProductPrior) -> SolveResult:
    """GFT-optimal simple mechanism for a finite product prior."""
    p1, p2 = best_prices(prior)
    tables = fill_dp(prior, p1, p2)
    pair = extract_pair(tables)
    return SolveResult(pair, expected_gft(pair, prior), tables)
