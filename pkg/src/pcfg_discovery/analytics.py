"""Exact parse-tree counting, coverage and expected-sample analytics.

Counts are Python integers (no overflow); coverage and probabilities are
doubles.  Tables are computed bottom-up by height, so deep horizons do not
hit the recursion limit.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .grammar import Pcfg


@dataclass(frozen=True)
class CountTable:
    """``exact[A][h]`` = trees rooted at A of height exactly h; ``upto`` is cumulative."""

    exact: dict[str, list[int]]
    upto: dict[str, list[int]]
    max_height: int

    def n(self, symbol: str, h: int) -> int:
        return self.exact[symbol][h] if h >= 0 else 0

    def N(self, symbol: str, h: int) -> int:
        return self.upto[symbol][h] if h >= 0 else 0


def count_table(g: Pcfg, max_height: int) -> CountTable:
    symbols = set(g.nonterminals) | set(g.terminals)
    exact = {s: [] for s in symbols}
    upto = {s: [] for s in symbols}
    for h in range(max_height + 1):
        for t in g.terminals:
            exact[t].append(1 if h == 0 else 0)
            upto[t].append(1)
        for a in g.nonterminals:
            if h == 0:
                n = 0
            else:
                n = 0
                for rule in g.rules_for(a):
                    below = 1
                    below2 = 1
                    for s in rule.rhs:
                        below *= upto[s][h - 1]
                        below2 *= upto[s][h - 2] if h >= 2 else 0
                    n += below - below2
            exact[a].append(n)
            upto[a].append((upto[a][h - 1] if h else 0) + n)
    return CountTable(exact, upto, max_height)


def count_trees(g: Pcfg, symbol: str, h: int) -> tuple[int, int]:
    """Return ``(n_G(symbol, h), N_G(symbol, h))``; probabilities are ignored."""
    if h < 0:
        raise ValueError("height must be nonnegative")
    table = count_table(g, h)
    return table.n(symbol, h), table.N(symbol, h)


def coverage_table(g: Pcfg, max_height: int) -> dict[str, list[float]]:
    """``table[A][h]`` = total probability of trees rooted at A with height <= h."""
    table: dict[str, list[float]] = {t: [1.0] * (max_height + 1) for t in g.terminals}
    for a in g.nonterminals:
        table[a] = [0.0]
    for h in range(1, max_height + 1):
        row = {}
        for a in g.nonterminals:
            total = 0.0
            for rule in g.rules_for(a):
                term = rule.probability
                for s in rule.rhs:
                    term *= table[s][h - 1]
                total += term
            row[a] = total
        for a, v in row.items():
            table[a].append(v)
    return table


def coverage(g: Pcfg, symbol: str, h: int) -> float:
    if h < 0:
        raise ValueError("height must be nonnegative")
    return coverage_table(g, h)[symbol][h]


def linear_closed_forms(n_vars: int, p: float, h: int) -> dict[str, float | int]:
    """Closed forms for the linear grammar ``E -> E + V [p] | V [1-p]``.

    Used as an independent oracle against :func:`count_trees` and
    :func:`coverage`.
    """
    if h < 2 or n_vars < 1 or not 0.0 < p < 1.0:
        raise ValueError("requires h >= 2, n_vars >= 1 and 0 < p < 1")
    n = n_vars ** (h - 1)
    N = h - 1 if n_vars == 1 else (n_vars**h - 1) // (n_vars - 1) - 1
    return {
        "n": n,
        "N": N,
        "Cov": 1.0 - p ** (h - 1),
        "height_pmf": p ** (h - 2) * (1.0 - p),
    }


def expected_samples_pcfg(p: float) -> float:
    """Mean of the geometric number of i.i.d. draws until a target of probability p appears."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    return 1.0 / p


@dataclass(frozen=True)
class ExpectedCount:
    value: Fraction
    log10: float

    def __float__(self):
        return float(self.value)


def expected_samples_cfg(g: Pcfg, h: int, table: CountTable | None = None) -> ExpectedCount:
    """Expected trees enumerated by a uniform deterministic generator.

    All trees below the target height are enumerated, then on average half of
    the trees of the target height: ``N_G(h-1) + n_G(h) / 2``.
    """
    if h < 1:
        raise ValueError("height must be >= 1")
    if table is None or table.max_height < h:
        table = count_table(g, h)
    value = Fraction(table.N(g.start, h - 1)) + Fraction(table.n(g.start, h), 2)
    if value == 0:
        log10 = -math.inf
    else:
        log10 = math.log10(value.numerator) - math.log10(value.denominator)
    return ExpectedCount(value, log10)


def exact_str(value: int | Fraction) -> str:
    """Decimal (or p/q) text of an arbitrarily large exact value."""
    limit = getattr(sys, "get_int_max_str_digits", None)
    if limit is None:
        return str(value)
    old = sys.get_int_max_str_digits()
    sys.set_int_max_str_digits(0)
    try:
        return str(value)
    finally:
        sys.set_int_max_str_digits(old)


def reconstruction_ratio(expected: Sequence, n: float) -> float:
    """Fraction of targets whose expected sample count is at most ``n``."""
    if len(expected) == 0:
        raise ValueError("expected must be non-empty")
    return sum(1 for e in expected if n >= e) / len(expected)


def _success_prob(p: float, n: int) -> float:
    if p >= 1.0:
        return 1.0 if n >= 1 else 0.0
    if p <= 0.0 or n <= 0:
        return 0.0
    return -math.expm1(n * math.log1p(-p))


def expected_success_rate(probs: Sequence[float], n: int) -> float:
    """Mean over targets of ``1 - (1 - p_i)^n``."""
    if len(probs) == 0:
        raise ValueError("probs must be non-empty")
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
    return math.fsum(_success_prob(p, n) for p in probs) / len(probs)


def ambiguity_corrected_rate(probs: Sequence[float], n: int, uniqueness_ratio: float) -> float:
    """Success rate with each probability inflated by ``1 / uniqueness_ratio``.

    Compensates for equivalent expressions that reach the same canonical form
    through different parse trees.
    """
    if not 0.0 < uniqueness_ratio <= 1.0:
        raise ValueError(f"uniqueness_ratio must be in (0, 1], got {uniqueness_ratio}")
    return expected_success_rate([min(p / uniqueness_ratio, 1.0) for p in probs], n)


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    if len(xs) < 2:
        raise ValueError("need at least two observations")
    rx = rankdata(xs)
    ry = rankdata(ys)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if denom == 0.0:
        return math.nan
    return float(np.clip(np.dot(rx, ry) / denom, -1.0, 1.0))
