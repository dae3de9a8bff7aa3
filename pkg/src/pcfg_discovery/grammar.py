"""Probabilistic context-free grammars: data model, text format and builders.

The text format holds one rule group per line::

    # comment
    start: E
    E -> E '+' V [0.5] | V [0.5]
    V -> 'x' [0.5] | 'y' [0.5]

Terminals are single-quoted, nonterminals are bare names, and every
alternative carries a bracketed probability.  ``normalize: true`` rescales
each group to sum to one instead of requiring exact sums.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

PROB_TOL = 1e-9
CONSTANT = "c"
FUNCTIONS = ("sin", "cos", "sqrt", "exp")
EXTENDED_FUNCTIONS = FUNCTIONS + ("tanh", "arcsin", "log")
BUILTIN_GRAMMARS = ("uniform_universal", "biased_universal", "linear", "extended_universal")


class GrammarError(ValueError):
    """Raised for malformed or invalid grammars."""


class GrammarSyntaxError(GrammarError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Rule:
    lhs: str
    rhs: tuple[str, ...]
    probability: float

    def __str__(self) -> str:
        return f"{self.lhs} -> {' '.join(self.rhs)} [{self.probability!r}]"


class Pcfg:
    """An immutable PCFG.

    Nonterminals are exactly the left-hand sides; every other right-hand-side
    symbol is a terminal.  Construction only checks local well-formedness
    (non-empty right-hand sides, probabilities in (0, 1]); global properties
    such as sum-to-one and productivity are reported by :func:`validate` and
    enforced by :meth:`checked`.
    """

    __slots__ = ("start", "rules", "nonterminals", "terminals", "_by_lhs")

    def __init__(self, rules: Iterable[Rule], start: str):
        rules = tuple(rules)
        if not rules:
            raise GrammarError("grammar has no rules")
        by_lhs: dict[str, list[int]] = {}
        for i, rule in enumerate(rules):
            if not rule.rhs:
                raise GrammarError(f"empty right-hand side for {rule.lhs!r} (epsilon rules are not supported)")
            if not (0.0 < rule.probability <= 1.0) or math.isnan(rule.probability):
                raise GrammarError(f"probability of {rule} outside (0, 1]")
            by_lhs.setdefault(rule.lhs, []).append(i)
        if start not in by_lhs:
            raise GrammarError(f"start symbol {start!r} has no rules")
        nonterminals = frozenset(by_lhs)
        terminals = frozenset(s for r in rules for s in r.rhs if s not in nonterminals)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "nonterminals", nonterminals)
        object.__setattr__(self, "terminals", terminals)
        object.__setattr__(self, "_by_lhs", {k: tuple(v) for k, v in by_lhs.items()})

    def __setattr__(self, name, value):
        raise AttributeError("Pcfg is immutable")

    def __reduce__(self):
        return (Pcfg, (self.rules, self.start))

    def rule_indices(self, lhs: str) -> tuple[int, ...]:
        return self._by_lhs.get(lhs, ())

    def rules_for(self, lhs: str) -> list[Rule]:
        return [self.rules[i] for i in self.rule_indices(lhs)]

    def is_terminal(self, symbol: str) -> bool:
        return symbol not in self.nonterminals

    def distribution(self, lhs: str) -> dict[tuple[str, ...], float]:
        return {r.rhs: r.probability for r in self.rules_for(lhs)}

    def checked(self) -> "Pcfg":
        """Return self, raising GrammarError if :func:`validate` finds violations."""
        report = validate(self, horizon=0)
        if report.violations:
            raise GrammarError("; ".join(report.violations))
        return self

    def with_probabilities(self, probs: Sequence[float]) -> "Pcfg":
        return Pcfg((Rule(r.lhs, r.rhs, p) for r, p in zip(self.rules, probs)), self.start)

    def __eq__(self, other):
        if not isinstance(other, Pcfg):
            return NotImplemented
        return self.start == other.start and self.rules == other.rules

    def __hash__(self):
        return hash((self.start, self.rules))

    def __repr__(self):
        return f"Pcfg(start={self.start!r}, rules={len(self.rules)})"

    def __str__(self):
        return render_grammar(self)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    horizon: int = 0
    coverage: list[float] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def coverage_at_horizon(self) -> float | None:
        return self.coverage[-1] if self.coverage else None


def _reachable(g: Pcfg) -> set[str]:
    seen = {g.start}
    stack = [g.start]
    while stack:
        a = stack.pop()
        for rule in g.rules_for(a):
            for s in rule.rhs:
                if s in g.nonterminals and s not in seen:
                    seen.add(s)
                    stack.append(s)
    return seen


def _productive(g: Pcfg) -> set[str]:
    productive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for rule in g.rules:
            if rule.lhs in productive:
                continue
            if all(s in productive or g.is_terminal(s) for s in rule.rhs):
                productive.add(rule.lhs)
                changed = True
    return productive


def validate(g: Pcfg, horizon: int = 40) -> ValidationReport:
    """Collect violations instead of raising.

    Checks per-nonterminal probability sums, reachability from the start
    symbol and productivity.  When ``horizon > 0`` and the grammar is
    structurally sound, coverage of the start symbol is tabulated for heights
    ``0..horizon`` and a violation is recorded if it ever decreases.
    """
    report = ValidationReport(horizon=horizon)
    for a in sorted(g.nonterminals):
        total = math.fsum(r.probability for r in g.rules_for(a))
        if abs(total - 1.0) > PROB_TOL:
            report.violations.append(f"probabilities of {a} sum to {total!r}, expected 1")
    unreachable = g.nonterminals - _reachable(g)
    if unreachable:
        report.violations.append(f"unreachable nonterminals: {', '.join(sorted(unreachable))}")
    unproductive = g.nonterminals - _productive(g)
    if unproductive:
        report.violations.append(f"unproductive nonterminals: {', '.join(sorted(unproductive))}")
    if horizon > 0 and not unproductive:
        from .analytics import coverage_table

        table = coverage_table(g, horizon)
        report.coverage = [table[g.start][h] for h in range(horizon + 1)]
        if any(b < a - 1e-12 for a, b in zip(report.coverage, report.coverage[1:])):
            report.violations.append("coverage of the start symbol decreases with height")
    return report


# -- text format -----------------------------------------------------------

_TOKEN = re.compile(
    r"""(?P<ws>[ \t\r]+)
      | (?P<comment>\#.*)
      | (?P<arrow>->)
      | (?P<bar>\|)
      | (?P<prob>\[[^\]]*\])
      | (?P<term>'(?:[^'\\]|\\.)*')
      | (?P<name>(?:(?!->)[^\s'|\[\]\#])+)
    """,
    re.VERBOSE,
)
_DIRECTIVE = re.compile(r"^\s*(start|normalize)\s*:\s*(\S+)\s*(?:#.*)?$")


def _lex_line(line: str, lineno: int):
    pos = 0
    out = []
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None:
            raise GrammarSyntaxError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        kind = m.lastgroup
        if kind == "comment":
            break
        if kind != "ws":
            out.append((kind, m.group(), pos + 1))
        pos = m.end()
    return out


def parse_grammar(text: str) -> Pcfg:
    """Parse the grammar text format into a validated :class:`Pcfg`."""
    start = None
    normalize = False
    groups: dict[str, list[tuple[list[tuple[str, bool]], float]]] = {}
    order: list[str] = []
    declared_terminals: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        d = _DIRECTIVE.match(line)
        if d:
            key, value = d.groups()
            if key == "start":
                start = value
            else:
                if value.lower() not in ("true", "false"):
                    raise GrammarSyntaxError(f"normalize expects true/false, got {value!r}", lineno, line.index(value) + 1)
                normalize = value.lower() == "true"
            continue
        tokens = _lex_line(line, lineno)
        if not tokens:
            continue
        if len(tokens) < 2 or tokens[0][0] != "name" or tokens[1][0] != "arrow":
            kind, text_, col = tokens[0] if tokens[0][0] != "name" or len(tokens) < 2 else tokens[1]
            raise GrammarSyntaxError(f"expected '<NT> ->', got {text_!r}", lineno, col)
        lhs = tokens[0][1]
        if lhs not in groups:
            groups[lhs] = []
            order.append(lhs)
        alt: list[tuple[str, bool]] = []
        prob = None
        for kind, tok, col in tokens[2:] + [("bar", "|", len(line) + 1)]:
            if kind == "bar":
                if not alt:
                    raise GrammarSyntaxError("empty alternative", lineno, col)
                if prob is None:
                    raise GrammarSyntaxError("alternative without probability", lineno, col)
                groups[lhs].append((alt, prob))
                alt, prob = [], None
            elif prob is not None:
                raise GrammarSyntaxError(f"symbol {tok!r} after probability", lineno, col)
            elif kind == "prob":
                try:
                    prob = float(tok[1:-1])
                except ValueError:
                    raise GrammarSyntaxError(f"bad probability {tok}", lineno, col) from None
                if not math.isfinite(prob) or prob <= 0:
                    raise GrammarSyntaxError(f"probability must be positive, got {tok}", lineno, col)
            elif kind == "term":
                sym = re.sub(r"\\(.)", r"\1", tok[1:-1])
                if not sym:
                    raise GrammarSyntaxError("empty terminal", lineno, col)
                declared_terminals.add(sym)
                alt.append((sym, True))
            elif kind == "name":
                alt.append((tok, False))
            else:
                raise GrammarSyntaxError(f"unexpected {tok!r}", lineno, col)
    if not groups:
        raise GrammarError("grammar has no rules")
    clash = declared_terminals & set(groups)
    if clash:
        raise GrammarError(f"symbols used as both terminal and nonterminal: {', '.join(sorted(clash))}")
    rules = []
    for lhs in order:
        alts = groups[lhs]
        total = math.fsum(p for _, p in alts)
        if normalize:
            alts = [(a, p / total) for a, p in alts]
        for alt, p in alts:
            for sym, quoted in alt:
                if not quoted and sym not in groups:
                    raise GrammarError(f"undeclared symbol {sym!r} in rule for {lhs}")
            rules.append(Rule(lhs, tuple(s for s, _ in alt), p))
    return Pcfg(rules, start if start is not None else order[0]).checked()


def _quote(sym: str) -> str:
    return "'" + sym.replace("\\", "\\\\").replace("'", "\\'") + "'"


def render_grammar(g: Pcfg) -> str:
    """Inverse of :func:`parse_grammar`; probabilities are written with ``repr``."""
    lines = [f"start: {g.start}"]
    seen = []
    for r in g.rules:
        if r.lhs not in seen:
            seen.append(r.lhs)
    for lhs in seen:
        alts = []
        for r in g.rules_for(lhs):
            syms = " ".join(s if s in g.nonterminals else _quote(s) for s in r.rhs)
            alts.append(f"{syms} [{r.probability!r}]")
        lines.append(f"{lhs} -> " + " | ".join(alts))
    return "\n".join(lines) + "\n"


def load_grammar(path) -> Pcfg:
    with open(path, encoding="utf-8") as fh:
        return parse_grammar(fh.read())


# -- builders ----------------------------------------------------------------

LINEAR_VARIABLES = tuple("xyz" + "abcdefghijklmnopqrstuvw")


def linear_grammar(n_vars: int, p: float, variable_probs: Sequence[float] | None = None) -> Pcfg:
    """``E -> E + V [p] | V [1-p]`` with ``V`` over ``n_vars`` variables.

    Variables are named x, y, z, a, b, ...; their probabilities are uniform
    unless ``variable_probs`` is given.
    """
    if not 1 <= n_vars <= 26:
        raise GrammarError(f"n_vars must be in 1..26, got {n_vars}")
    if not 0.0 < p < 1.0:
        raise GrammarError(f"p must be in (0, 1), got {p}")
    if variable_probs is None:
        variable_probs = [1.0 / n_vars] * n_vars
    if len(variable_probs) != n_vars:
        raise GrammarError("variable_probs length differs from n_vars")
    rules = [Rule("E", ("E", "+", "V"), p), Rule("E", ("V",), 1.0 - p)]
    rules += [Rule("V", (v,), q) for v, q in zip(LINEAR_VARIABLES, variable_probs)]
    return Pcfg(rules, "E").checked()


@dataclass(frozen=True)
class BiasRatios:
    """Odds multipliers for the universal grammar's rule groups.

    r_sum: ``+`` vs ``-``; r_mul: ``*`` vs ``/``; r_const: constant vs
    variable (so 0.25 favours variables); r_funct: the four functions
    together vs plain parentheses.
    A ratio of 1 keeps the baseline split of :class:`StructuralProbs`.
    """

    r_sum: float = 1.0
    r_mul: float = 1.0
    r_const: float = 1.0
    r_funct: float = 1.0

    def __post_init__(self):
        for name in ("r_sum", "r_mul", "r_const", "r_funct"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise GrammarError(f"{name} must be positive and finite, got {v}")


UNIFORM = BiasRatios()
BIASED = BiasRatios(r_sum=0.4, r_mul=1.5, r_const=0.25, r_funct=0.67)


@dataclass(frozen=True)
class StructuralProbs:
    p_recurse_E: float = 0.4
    p_recurse_F: float = 0.4
    p_R: float = 0.2
    p_V: float = 0.4
    p_c: float = 0.4
    p_paren: float = 0.6


def _split(mass: float, w_a: float, w_b: float, r: float) -> tuple[float, float]:
    # odds a:b = r * w_a/w_b, total = mass; exact baseline when r == 1
    scale = mass / (w_a * r + w_b)
    return w_a * r * scale, w_b * scale


def universal_grammar(
    variables: Sequence[str],
    ratios: BiasRatios = UNIFORM,
    structural: StructuralProbs = StructuralProbs(),
    functions: Sequence[str] = FUNCTIONS,
) -> Pcfg:
    """Universal arithmetic PCFG over nonterminals E, F, T, R, V.

    With the default structure and all ratios equal to one this is::

        E -> E '+' F [0.2] | E '-' F [0.2] | F [0.6]
        F -> F '*' T [0.2] | F '/' T [0.2] | T [0.6]
        T -> R [0.2] | V [0.4] | 'c' [0.4]
        R -> '(' E ')' [0.6] | 'sin' '(' E ')' [0.1] | ... | 'exp' '(' E ')' [0.1]
        V -> 'x' [0.5] | 'y' [0.5]

    ``functions`` replaces the four function symbols; the function mass is
    shared equally among them.
    """
    variables = list(variables)
    if not variables:
        raise GrammarError("at least one variable is required")
    if len(set(variables)) != len(variables):
        raise GrammarError("variable names must be distinct")
    functions = tuple(functions)
    if not functions or len(set(functions)) != len(functions):
        raise GrammarError("functions must be non-empty and distinct")
    reserved = {CONSTANT, "+", "-", "*", "/", "(", ")", *FUNCTIONS, *functions, "E", "F", "T", "R", "V"}
    for v in variables:
        if not v or v in reserved:
            raise GrammarError(f"invalid variable name {v!r}")
    s = structural
    if abs(s.p_R + s.p_V + s.p_c - 1.0) > PROB_TOL:
        raise GrammarError("p_R + p_V + p_c must equal 1")
    plus, minus = _split(s.p_recurse_E, 1.0, 1.0, ratios.r_sum)
    times, div = _split(s.p_recurse_F, 1.0, 1.0, ratios.r_mul)
    p_c, p_v = _split(s.p_V + s.p_c, s.p_c, s.p_V, ratios.r_const)
    funct, paren = _split(1.0, 1.0 - s.p_paren, s.p_paren, ratios.r_funct)
    f_each = funct / len(functions)
    probs = [plus, minus, 1.0 - s.p_recurse_E, times, div, 1.0 - s.p_recurse_F, s.p_R, p_v, p_c, paren, f_each]
    if any(not (0.0 < q < 1.0) for q in probs):
        raise GrammarError(f"infeasible ratio/probability combination: {probs}")
    rules = [
        Rule("E", ("E", "+", "F"), plus),
        Rule("E", ("E", "-", "F"), minus),
        Rule("E", ("F",), 1.0 - s.p_recurse_E),
        Rule("F", ("F", "*", "T"), times),
        Rule("F", ("F", "/", "T"), div),
        Rule("F", ("T",), 1.0 - s.p_recurse_F),
        Rule("T", ("R",), s.p_R),
        Rule("T", ("V",), p_v),
        Rule("T", (CONSTANT,), p_c),
        Rule("R", ("(", "E", ")"), paren),
    ]
    rules += [Rule("R", (f, "(", "E", ")"), f_each) for f in functions]
    q = 1.0 / len(variables)
    rules += [Rule("V", (v,), q) for v in variables]
    return Pcfg(rules, "E").checked()


def builtin_grammar(name: str, variables: Sequence[str], p: float = 0.5) -> Pcfg:
    """Resolve one of :data:`BUILTIN_GRAMMARS` for the given variables."""
    if name in ("uniform", "uniform_universal"):
        return universal_grammar(variables, UNIFORM)
    if name in ("biased", "biased_universal"):
        return universal_grammar(variables, BIASED)
    if name == "linear":
        g = linear_grammar(len(variables), p)
        mapping: Mapping[str, str] = dict(zip(LINEAR_VARIABLES, variables))
        return Pcfg((Rule(r.lhs, tuple(mapping.get(s, s) for s in r.rhs), r.probability) for r in g.rules), "E")
    if name in ("extended", "extended_universal"):
        return universal_grammar(variables, UNIFORM, functions=EXTENDED_FUNCTIONS)
    raise GrammarError(f"unknown builtin grammar {name!r}")
