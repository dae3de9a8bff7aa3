"""Random generation of parse trees from a PCFG.

Every sample draws from its own Philox stream keyed by
``(master_seed, sample_index, retry)``, so a batch is reproducible no matter
how it is split across workers.
"""
from __future__ import annotations

import bisect
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .grammar import Pcfg

DEFAULT_MAX_EXPANSIONS = 1000
_BLOCK = 32
_MASK64 = (1 << 64) - 1


class ExpansionBudgetExceeded(RuntimeError):
    """A derivation needed more nonterminal expansions than allowed."""


class TreeGrammarMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParseTree:
    label: str
    children: tuple["ParseTree", ...] = ()
    rule_index: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.rule_index is None

    def derivation(self) -> tuple[int, ...]:
        """Rule indices in preorder; identifies the tree within its grammar."""
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.rule_index is not None:
                out.append(node.rule_index)
                stack.extend(reversed(node.children))
        return tuple(out)

    def __eq__(self, other):
        if not isinstance(other, ParseTree):
            return NotImplemented
        return self.label == other.label and self.derivation() == other.derivation() and tree_yield(self) == tree_yield(other)

    def __hash__(self):
        return hash((self.label, self.derivation()))

    def pretty(self) -> str:
        lines = []
        stack = [(self, 0)]
        while stack:
            node, depth = stack.pop()
            lines.append("  " * depth + (node.label if node.children else repr(node.label)))
            stack.extend((c, depth + 1) for c in reversed(node.children))
        return "\n".join(lines)


def tree_height(t: ParseTree) -> int:
    """Edges on the longest root-to-leaf path; 0 for a bare terminal."""
    best = 0
    stack = [(t, 0)]
    while stack:
        node, depth = stack.pop()
        if node.children:
            stack.extend((c, depth + 1) for c in node.children)
        elif depth > best:
            best = depth
    return best


def tree_yield(t: ParseTree) -> list[str]:
    out = []
    stack = [t]
    while stack:
        node = stack.pop()
        if node.children:
            stack.extend(reversed(node.children))
        else:
            out.append(node.label)
    return out


def tree_log_probability(t: ParseTree, g: Pcfg) -> float:
    total = 0.0
    stack = [t]
    while stack:
        node = stack.pop()
        if node.rule_index is None:
            if node.children or node.label in g.nonterminals:
                raise TreeGrammarMismatch(f"leaf {node.label!r} is not a terminal")
            continue
        if not 0 <= node.rule_index < len(g.rules):
            raise TreeGrammarMismatch(f"rule index {node.rule_index} out of range")
        rule = g.rules[node.rule_index]
        if rule.lhs != node.label or rule.rhs != tuple(c.label for c in node.children):
            raise TreeGrammarMismatch(f"node {node.label!r} does not match rule {rule}")
        total += math.log(rule.probability)
        stack.extend(node.children)
    return total


def tree_probability(t: ParseTree, g: Pcfg) -> float:
    """Product of the probabilities of the rules used in ``t``."""
    return math.exp(tree_log_probability(t, g))


def tree_from_derivation(g: Pcfg, derivation: Sequence[int], root: str | None = None) -> ParseTree:
    """Rebuild the tree whose preorder rule sequence is ``derivation``."""
    root = g.start if root is None else root
    it = iter(derivation)

    # frames: [label, rule_index, rhs, next child position, built children]
    def open_frame(label):
        idx = next(it)
        rule = g.rules[idx]
        if rule.lhs != label:
            raise TreeGrammarMismatch(f"rule {rule} cannot expand {label!r}")
        return [label, idx, rule.rhs, 0, []]

    if root not in g.nonterminals:
        return ParseTree(root)
    stack = [open_frame(root)]
    while True:
        frame = stack[-1]
        label, idx, rhs, pos, built = frame
        if pos == len(rhs):
            node = ParseTree(label, tuple(built), idx)
            stack.pop()
            if not stack:
                return node
            stack[-1][4].append(node)
            continue
        sym = rhs[pos]
        frame[3] = pos + 1
        if sym in g.nonterminals:
            stack.append(open_frame(sym))
        else:
            built.append(ParseTree(sym))


@dataclass(frozen=True)
class SampleOutcome:
    tree: ParseTree
    sentence: tuple[str, ...]
    log_probability: float
    expansions_used: int
    derivation: tuple[int, ...]

    @property
    def probability(self) -> float:
        return math.exp(self.log_probability)

    @property
    def height(self) -> int:
        return tree_height(self.tree)


class _Tables:
    """Per-grammar lookup tables cached on first use."""

    _cache: dict[int, tuple[Pcfg, "_Tables"]] = {}

    def __init__(self, g: Pcfg):
        self.cum: dict[str, list[float]] = {}
        self.idx: dict[str, tuple[int, ...]] = {}
        for a in g.nonterminals:
            idx = g.rule_indices(a)
            acc = 0.0
            cum = []
            for i in idx:
                acc += g.rules[i].probability
                cum.append(acc)
            self.cum[a] = cum
            self.idx[a] = idx
        self.logp = [math.log(r.probability) for r in g.rules]
        self.rhs = [r.rhs[::-1] for r in g.rules]
        self.nonterminals = g.nonterminals

    @classmethod
    def of(cls, g: Pcfg) -> "_Tables":
        hit = cls._cache.get(id(g))
        if hit is not None and hit[0] is g:
            return hit[1]
        tables = cls(g)
        if len(cls._cache) > 64:
            cls._cache.clear()
        cls._cache[id(g)] = (g, tables)
        return tables


def generate_sample(
    g: Pcfg,
    root: str | None = None,
    rng: np.random.Generator | None = None,
    max_expansions: int = DEFAULT_MAX_EXPANSIONS,
) -> SampleOutcome:
    """Sample one parse tree rooted at ``root`` (default: the start symbol).

    Raises :class:`ExpansionBudgetExceeded` once more than ``max_expansions``
    nonterminals would be expanded; no partial tree is returned.
    """
    root = g.start if root is None else root
    if root not in g.nonterminals:
        raise ValueError(f"{root!r} is not a nonterminal")
    if max_expansions < 1:
        raise ValueError("max_expansions must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    tab = _Tables.of(g)
    nonterminals = tab.nonterminals
    derivation: list[int] = []
    sentence: list[str] = []
    logp = 0.0
    expansions = 0
    buf = rng.random(_BLOCK).tolist()
    pos = 0
    stack = [root]
    while stack:
        sym = stack.pop()
        if sym not in nonterminals:
            sentence.append(sym)
            continue
        expansions += 1
        if expansions > max_expansions:
            raise ExpansionBudgetExceeded(f"more than {max_expansions} expansions")
        if pos == _BLOCK:
            buf = rng.random(_BLOCK).tolist()
            pos = 0
        u = buf[pos]
        pos += 1
        cum = tab.cum[sym]
        k = bisect.bisect_right(cum, u * cum[-1])
        if k == len(cum):
            k -= 1
        i = tab.idx[sym][k]
        derivation.append(i)
        logp += tab.logp[i]
        stack.extend(tab.rhs[i])
    tree = tree_from_derivation(g, derivation, root)
    return SampleOutcome(tree, tuple(sentence), logp, expansions, tuple(derivation))


def substream(master_seed: int, index: int, retry: int = 0) -> np.random.Generator:
    """Independent Philox stream for one (seed, index, retry) triple."""
    key = master_seed & _MASK64
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, retry & _MASK64, index & _MASK64]))


def _sample_range(args) -> tuple[list[SampleOutcome], int]:
    g, start, stop, master_seed, max_expansions = args
    out = []
    discards = 0
    for i in range(start, stop):
        retry = 0
        while True:
            try:
                out.append(generate_sample(g, g.start, substream(master_seed, i, retry), max_expansions))
                break
            except ExpansionBudgetExceeded:
                discards += 1
                retry += 1
    return out, discards


def iter_samples(g: Pcfg, n: int, master_seed: int, max_expansions: int = DEFAULT_MAX_EXPANSIONS) -> Iterator[tuple[SampleOutcome, int]]:
    """Yield ``(outcome, discards_before_it)`` for sample indices ``0..n-1``."""
    for i in range(n):
        outs, discards = _sample_range((g, i, i + 1, master_seed, max_expansions))
        yield outs[0], discards


def sample_many(
    g: Pcfg,
    n: int,
    master_seed: int,
    max_expansions: int = DEFAULT_MAX_EXPANSIONS,
    n_jobs: int = 1,
) -> tuple[list[SampleOutcome], int]:
    """Draw ``n`` samples; returns the outcomes and the number of discarded attempts.

    Budget-exceeded attempts are retried on a fresh substream and do not
    consume a sample index.  Output does not depend on ``n_jobs``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n_jobs <= 1 or n < 2 * n_jobs:
        return _sample_range((g, 0, n, master_seed, max_expansions))
    bounds = np.linspace(0, n, n_jobs + 1).astype(int)
    chunks = [(g, int(a), int(b), master_seed, max_expansions) for a, b in zip(bounds, bounds[1:])]
    outcomes: list[SampleOutcome] = []
    discards = 0
    with ProcessPoolExecutor(n_jobs) as pool:
        for outs, d in pool.map(_sample_range, chunks):
            outcomes.extend(outs)
            discards += d
    return outcomes, discards
