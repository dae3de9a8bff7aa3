"""Probabilistic chart parsing: inside probabilities and k-best parses.

The chart is filled bottom-up over spans.  Rules longer than one symbol are
handled through dotted partial items, which amounts to an implicit
binarization; returned trees use the original rules only.
"""
from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field

from .grammar import CONSTANT, GrammarError, Pcfg
from .sampler import ParseTree, tree_height

DEFAULT_TOP_K = 4
_UNARY_MAX_PASSES = 200
_NUMBER = re.compile(r"(?<![A-Za-z_0-9.])(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


class TokenizeError(ValueError):
    def __init__(self, text: str, position: int):
        self.position = position
        super().__init__(f"cannot tokenize {text[position:position + 10]!r} at position {position}")


class NotInLanguage(ValueError):
    """The expression has no parse under the grammar."""


def _logsumexp(values) -> float:
    values = [v for v in values if v != -math.inf]
    if not values:
        return -math.inf
    top = max(values)
    return top + math.log(math.fsum(math.exp(v - top) for v in values))


def tokenize(text: str, g: Pcfg) -> list[str]:
    """Split ``text`` into grammar terminals by longest match, skipping whitespace."""
    vocab = sorted(g.terminals, key=len, reverse=True)
    out = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        for t in vocab:
            if text.startswith(t, i):
                out.append(t)
                i += len(t)
                break
        else:
            raise TokenizeError(text, i)
    return out


@dataclass
class ParseResult:
    trees: list[tuple[ParseTree, float]] = field(default_factory=list)
    log_inside: float = -math.inf

    @property
    def inside_probability(self) -> float:
        return math.exp(self.log_inside)

    @property
    def best(self) -> tuple[ParseTree, float] | None:
        return self.trees[0] if self.trees else None

    def __len__(self):
        return len(self.trees)


class _GrammarIndex:
    def __init__(self, g: Pcfg):
        self.logp = [math.log(r.probability) for r in g.rules]
        self.by_first: dict[str, list[int]] = defaultdict(list)
        self.unary: list[int] = []
        for i, r in enumerate(g.rules):
            if len(r.rhs) == 1 and r.rhs[0] in g.nonterminals:
                self.unary.append(i)
            else:
                self.by_first[r.rhs[0]].append(i)
        self.cyclic = self._has_cycle(g)
        if not self.cyclic:
            level = self._levels(g)
            self.unary.sort(key=lambda i: level[g.rules[i].lhs])

    def _edges(self, g):
        edges = defaultdict(set)
        for i in self.unary:
            edges[g.rules[i].lhs].add(g.rules[i].rhs[0])
        return edges

    def _levels(self, g):
        # longest unary chain below each symbol; rules are applied bottom-up
        edges = self._edges(g)
        level: dict[str, int] = {}
        for root in g.nonterminals:
            stack = [root]
            while stack:
                s = stack[-1]
                pending = [b for b in edges[s] if b not in level]
                if pending:
                    stack.extend(pending)
                    continue
                stack.pop()
                level[s] = 1 + max((level[b] for b in edges[s]), default=-1)
        return level

    def _has_cycle(self, g):
        edges = self._edges(g)
        state: dict[str, int] = {}
        for root in list(edges):
            if root in state:
                continue
            stack = [(root, iter(edges[root]))]
            state[root] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    state[node] = 2
                    stack.pop()
                elif state.get(nxt) == 1:
                    return True
                elif nxt not in state:
                    state[nxt] = 1
                    stack.append((nxt, iter(edges[nxt])))
        return False


def parse(g: Pcfg, tokens: list[str], top_k: int = DEFAULT_TOP_K) -> ParseResult:
    """Inside probability of ``tokens`` and its ``top_k`` most probable parses.

    Returns an empty result (probability 0) when the sequence is not in the
    language.
    """
    if top_k < 1:
        raise ValueError("top_k must be positive")
    n = len(tokens)
    if n == 0:
        raise ValueError("empty token sequence")
    ix = _GrammarIndex(g)
    rules = g.rules
    terminals = g.terminals
    # complete[(i, j)][A] -> (inside, kbest); kbest entries are (logp, ParseTree)
    complete: dict[tuple[int, int], dict[str, tuple[float, list]]] = {}
    # partial[(i, j)] -> list of (rule, dot, inside, kbest); kbest entries are (logp, children)
    partial: dict[tuple[int, int], list] = defaultdict(list)

    for length in range(1, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            grown: dict[tuple[int, int], list] = defaultdict(list)

            def feed(r, d, inside, kbest):
                grown[(r, d)].append((inside, kbest))

            if length == 1:
                tok = tokens[i]
                if tok in terminals:
                    leaf = ParseTree(tok)
                    for r in ix.by_first.get(tok, ()):
                        feed(r, 1, 0.0, [(0.0, (leaf,))])
            for m in range(i + 1, j):
                for r, d, p_in, p_best in partial.get((i, m), ()):
                    sym = rules[r].rhs[d]
                    if sym in terminals:
                        if j == m + 1 and tokens[m] == sym:
                            leaf = ParseTree(sym)
                            feed(r, d + 1, p_in, [(lp, ch + (leaf,)) for lp, ch in p_best])
                        continue
                    item = complete.get((m, j), {}).get(sym)
                    if item is None:
                        continue
                    c_in, c_best = item
                    combos = [(lp + lc, ch + (t,)) for lp, ch in p_best for lc, t in c_best]
                    combos.sort(key=lambda x: -x[0])
                    feed(r, d + 1, p_in + c_in, combos[:top_k])

            cell: dict[str, tuple[float, list]] = {}
            base_in: dict[str, list[float]] = defaultdict(list)
            base_best: dict[str, list] = defaultdict(list)
            for (r, d), parts in grown.items():
                inside = _logsumexp(p for p, _ in parts)
                kbest = sorted((x for _, kb in parts for x in kb), key=lambda x: -x[0])[:top_k]
                rule = rules[r]
                if d == len(rule.rhs):
                    lp = ix.logp[r]
                    base_in[rule.lhs].append(inside + lp)
                    base_best[rule.lhs].extend((lc + lp, ParseTree(rule.lhs, ch, r)) for lc, ch in kbest)
                else:
                    partial[(i, j)].append((r, d, inside, kbest))
            _unary_closure(g, ix, base_in, base_best, cell, top_k)
            if cell:
                complete[(i, j)] = cell
                for a, (c_in, c_best) in cell.items():
                    for r in ix.by_first.get(a, ()):
                        partial[(i, j)].append((r, 1, c_in, [(lc, (t,)) for lc, t in c_best]))

    root = complete.get((0, n), {}).get(g.start)
    if root is None:
        return ParseResult()
    inside, kbest = root
    return ParseResult([(t, _product_probability(g, t, lp)) for lp, t in kbest], inside)


def _product_probability(g: Pcfg, t: ParseTree, logp: float) -> float:
    # direct product keeps dyadic cases exact; fall back to the log value on underflow
    p = math.prod(g.rules[i].probability for i in t.derivation())
    return p if p > 0.0 else math.exp(logp)


def _unary_closure(g, ix, base_in, base_best, cell, top_k):
    """Close one chart cell under unary rules ``A -> B``."""
    rules = g.rules

    def rank(items):
        return sorted(items, key=lambda x: -x[0])[:top_k]

    if not ix.cyclic:
        ins = {a: list(v) for a, v in base_in.items()}
        best = {a: list(v) for a, v in base_best.items()}
        for r in ix.unary:
            b = rules[r].rhs[0]
            if b not in ins:
                continue
            a = rules[r].lhs
            lp = ix.logp[r]
            ins.setdefault(a, []).append(_logsumexp(ins[b]) + lp)
            best.setdefault(a, []).extend((lc + lp, ParseTree(a, (t,), r)) for lc, t in rank(best[b]))
        for a in ins:
            cell[a] = (_logsumexp(ins[a]), rank(best[a]))
        return

    # unary cycles: Jacobi iteration from the base until the values settle
    inside = {a: _logsumexp(v) for a, v in base_in.items()}
    best = {a: rank(v) for a, v in base_best.items()}
    for _ in range(_UNARY_MAX_PASSES):
        new_in = {a: list(v) for a, v in base_in.items()}
        new_best = {a: list(v) for a, v in base_best.items()}
        for r in ix.unary:
            b = rules[r].rhs[0]
            if b not in inside:
                continue
            a = rules[r].lhs
            lp = ix.logp[r]
            new_in.setdefault(a, []).append(inside[b] + lp)
            new_best.setdefault(a, []).extend((lc + lp, ParseTree(a, (t,), r)) for lc, t in best[b])
        nxt_in = {a: _logsumexp(v) for a, v in new_in.items()}
        nxt_best = {a: rank(v) for a, v in new_best.items()}
        stable = nxt_in.keys() == inside.keys() and all(
            abs(nxt_in[a] - inside[a]) <= 1e-15 * max(1.0, abs(inside[a])) for a in inside
        ) and all([x for x, _ in nxt_best[a]] == [x for x, _ in best[a]] for a in best)
        inside, best = nxt_in, nxt_best
        if stable:
            break
    for a in inside:
        cell[a] = (inside[a], best[a])


def literals_to_constant(text: str, g: Pcfg) -> str:
    """Replace numeric literals by the constant terminal when the grammar has one."""
    if CONSTANT not in g.terminals:
        return text
    return _NUMBER.sub(CONSTANT, text)


def target_probability(g: Pcfg, expression_text: str, top_k: int = 1) -> tuple[float, int]:
    """Probability and height of the most probable parse of ``expression_text``."""
    tokens = tokenize(literals_to_constant(expression_text, g), g)
    if not tokens:
        raise NotInLanguage(f"empty expression {expression_text!r}")
    result = parse(g, tokens, top_k)
    if not result.trees:
        raise NotInLanguage(f"{expression_text!r} is not in the grammar's language")
    tree, p = result.trees[0]
    return p, tree_height(tree)


__all__ = [
    "DEFAULT_TOP_K",
    "GrammarError",
    "NotInLanguage",
    "ParseResult",
    "TokenizeError",
    "literals_to_constant",
    "parse",
    "target_probability",
    "tokenize",
]
