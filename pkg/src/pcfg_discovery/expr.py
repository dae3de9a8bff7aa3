"""Arithmetic expressions: construction from parse trees, canonical forms,
numeric evaluation, infix parsing and complexity measures.

Canonical keys use minimal-parenthesis infix: parameters render as ``C0``,
``C1``, ... in left-to-right order, powers as ``x^2``, quotients as ``x/y``,
non-integer or negative literal factors in parentheses, e.g.
``exp((-1/2)*x^2)``.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .grammar import CONSTANT, Pcfg
from .sampler import ParseTree

FUNCTION_NAMES = ("sin", "cos", "sqrt", "exp", "tanh", "arcsin", "log")
NUMPY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "tanh": np.tanh,
    "arcsin": np.arcsin,
    "log": np.log,
}
_EXPAND_LIMIT = 64


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, position: int):
        super().__init__(f"at position {position}: {message}")
        self.position = position


class UnknownTerminal(ExpressionError):
    pass


# -- nodes -------------------------------------------------------------------


class Expr:
    """Base class; nodes are immutable and compare by their rendered key."""

    __slots__ = ("_key", "_shape", "_pidx", "has_var", "has_param")
    rank = 0

    def __init__(self, has_var: bool, has_param: bool):
        self._key = None
        self._shape = None
        self._pidx = None
        self.has_var = has_var
        self.has_param = has_param

    @property
    def key(self) -> str:
        if self._key is None:
            self._key = _render(self, False)
        return self._key

    @property
    def shape(self) -> str:
        """Key with parameter indices erased."""
        if self._shape is None:
            self._shape = _render(self, True)
        return self._shape

    @property
    def param_order(self) -> tuple[int, ...]:
        if self._pidx is None:
            self._pidx = tuple(_param_walk(self))
        return self._pidx

    def sort_key(self):
        return (self.rank, self.shape, self.param_order)

    def __eq__(self, other):
        return type(self) is type(other) and self.key == other.key

    def __hash__(self):
        return hash((type(self).__name__, self.key))

    def __repr__(self):
        return f"{type(self).__name__}<{self.key}>"

    def __str__(self):
        return self.key


class Lit(Expr):
    __slots__ = ("value",)
    rank = 0

    def __init__(self, value):
        super().__init__(False, False)
        if isinstance(value, int):
            value = Fraction(value)
        elif isinstance(value, float) and value.is_integer() and abs(value) < 2**53:
            value = Fraction(int(value))
        self.value = value


class Param(Expr):
    __slots__ = ("index",)
    rank = 1

    def __init__(self, index: int):
        super().__init__(False, True)
        self.index = index


class Var(Expr):
    __slots__ = ("name",)
    rank = 2

    def __init__(self, name: str):
        super().__init__(True, False)
        self.name = name


class Func(Expr):
    __slots__ = ("name", "arg")
    rank = 3

    def __init__(self, name: str, arg: Expr):
        if name not in NUMPY_FUNCS:
            raise ExpressionError(f"unknown function {name!r}")
        super().__init__(arg.has_var, arg.has_param)
        self.name = name
        self.arg = arg


class Product(Expr):
    """Children with integer exponents; ``x/y`` is ``Product((x, 1), (y, -1))``."""

    __slots__ = ("factors",)
    rank = 4

    def __init__(self, factors: Sequence[tuple[Expr, int]]):
        factors = tuple((b, int(k)) for b, k in factors)
        super().__init__(any(b.has_var for b, _ in factors), any(b.has_param for b, _ in factors))
        self.factors = factors


class Sum(Expr):
    """Children with integer coefficients; ``a - b`` is ``Sum((1, a), (-1, b))``."""

    __slots__ = ("terms",)
    rank = 5

    def __init__(self, terms: Sequence[tuple[int, Expr]]):
        terms = tuple((int(c), t) for c, t in terms)
        super().__init__(any(t.has_var for _, t in terms), any(t.has_param for _, t in terms))
        self.terms = terms


def add(a: Expr, b: Expr) -> Sum:
    return Sum(((1, a), (1, b)))


def sub(a: Expr, b: Expr) -> Sum:
    return Sum(((1, a), (-1, b)))


def mul(a: Expr, b: Expr) -> Product:
    return Product(((a, 1), (b, 1)))


def div(a: Expr, b: Expr) -> Product:
    return Product(((a, 1), (b, -1)))


def neg(a: Expr) -> Product:
    return Product(((Lit(-1), 1), (a, 1)))


def power(a: Expr, k: int) -> Product:
    return Product(((a, k),))


# -- rendering -----------------------------------------------------------------


def _lit_str(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return repr(float(v))


def _simple_lit(e: Expr) -> bool:
    if not isinstance(e, Lit):
        return False
    v = e.value
    if isinstance(v, Fraction):
        return v >= 0 and v.denominator == 1
    return v >= 0 and "e" not in repr(float(v))


def _child(e: Expr, anon: bool) -> str:
    return e.shape if anon else e.key


def _render(e: Expr, anon: bool) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Param):
        return "C" if anon else f"C{e.index}"
    if isinstance(e, Lit):
        return _lit_str(e.value)
    if isinstance(e, Func):
        return f"{e.name}({_child(e.arg, anon)})"
    if isinstance(e, Sum):
        parts = []
        for i, (c, t) in enumerate(e.terms):
            s = _child(t, anon)
            if isinstance(t, Sum) or (isinstance(t, Lit) and not _simple_lit(t)):
                s = f"({s})"
            if abs(c) != 1:
                s = f"{abs(c)}*{s}"
            if c < 0:
                parts.append("-" + s)
            else:
                parts.append(("+" if i else "") + s)
        return "".join(parts) if parts else "0"
    if isinstance(e, Product):
        num, den = [], []
        for b, k in e.factors:
            s = _child(b, anon)
            if isinstance(b, (Sum, Product)) or (isinstance(b, Lit) and not _simple_lit(b)):
                s = f"({s})"
            if abs(k) != 1:
                s = f"{s}^{abs(k)}"
            (num if k > 0 else den).append(s)
        if len(num) > 1 and num[0] == "(-1)":
            out = "-" + "*".join(num[1:])
        else:
            out = "*".join(num) if num else "1"
        for d in den:
            out += "/" + d
        return out
    raise TypeError(f"not an expression: {e!r}")


def _param_walk(e: Expr):
    # left-to-right in rendering order
    if isinstance(e, Param):
        yield e.index
    elif isinstance(e, Func):
        yield from e.arg.param_order
    elif isinstance(e, Sum):
        for _, t in e.terms:
            yield from t.param_order
    elif isinstance(e, Product):
        for b, k in e.factors:
            if k > 0:
                yield from b.param_order
        for b, k in e.factors:
            if k < 0:
                yield from b.param_order


def parameters(e: Expr) -> list[int]:
    """Distinct parameter indices in first-occurrence order."""
    seen: dict[int, None] = {}
    for i in e.param_order:
        seen.setdefault(i, None)
    return list(seen)


def variables(e: Expr) -> set[str]:
    out = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Func):
            stack.append(n.arg)
        elif isinstance(n, Sum):
            stack.extend(t for _, t in n.terms)
        elif isinstance(n, Product):
            stack.extend(b for b, _ in n.factors)
    return out


# -- parse trees -> expressions ------------------------------------------------

_NUMBER = re.compile(r"^(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_BINARY = {"+": add, "-": sub, "*": mul, "/": div}


def _atom(tok: str, counter) -> Expr:
    if tok == CONSTANT:
        return Param(next(counter))
    if _NUMBER.match(tok):
        return Lit(Fraction(tok))
    if _IDENT.match(tok) and tok not in NUMPY_FUNCS:
        return Var(tok)
    raise UnknownTerminal(f"no arithmetic meaning for terminal {tok!r}")


def tree_to_expression(t: ParseTree, g: Pcfg | None = None) -> Expr:
    """Build the AST directly from the tree structure.

    Recognised right-hand-side shapes: a single symbol, ``A op B`` for
    ``+ - * / ^``, ``( A )``, ``f ( A )`` and unary ``- A``.  Each ``c`` leaf
    becomes a fresh parameter, numbered left to right.
    """
    counter = itertools.count()

    def build(node: ParseTree) -> Expr:
        if not node.children:
            return _atom(node.label, counter)
        kids = node.children
        labels = [k.label for k in kids]
        leaf = [not k.children for k in kids]
        n = len(kids)
        if n == 1:
            return build(kids[0])
        if n == 3 and leaf[1] and labels[1] in _BINARY and not leaf[0] and not leaf[2]:
            return _BINARY[labels[1]](build(kids[0]), build(kids[2]))
        if n == 3 and leaf[1] and labels[1] == "^":
            base = build(kids[0])
            exponent = build(kids[2])
            return _make_power(base, exponent, 0)
        if n == 3 and leaf[0] and leaf[2] and labels[0] == "(" and labels[2] == ")":
            return build(kids[1])
        if n == 4 and leaf[0] and labels[0] in NUMPY_FUNCS and labels[1] == "(" and labels[3] == ")":
            return Func(labels[0], build(kids[2]))
        if n == 2 and leaf[0] and labels[0] == "-":
            return neg(build(kids[1]))
        raise UnknownTerminal(f"no arithmetic meaning for production {node.label} -> {' '.join(labels)}")

    return build(t)


# -- canonical form --------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalForm:
    expr: Expr
    key: str
    n_parameters: int

    def __eq__(self, other):
        return isinstance(other, CanonicalForm) and self.key == other.key

    def __hash__(self):
        return hash(self.key)


def _as_int(q):
    if isinstance(q, Fraction):
        return int(q) if q.denominator == 1 else None
    if float(q).is_integer() and abs(q) < 2**31:
        return int(q)
    return None


def _is_one(q) -> bool:
    return q == 1


class _Canonicalizer:
    def __init__(self, collapse: bool):
        self.collapse = collapse
        self.counter = itertools.count(1_000_000)

    def fresh(self) -> Param:
        return Param(next(self.counter))

    def run(self, e: Expr) -> Expr:
        if isinstance(e, (Var, Param, Lit)):
            return e
        if isinstance(e, Func):
            return self.func(e.name, self.run(e.arg))
        if isinstance(e, Sum):
            return self.sum([(c, self.run(t)) for c, t in e.terms])
        if isinstance(e, Product):
            return self.product([(self.run(b), k) for b, k in e.factors])
        raise TypeError(e)

    def func(self, name: str, a: Expr) -> Expr:
        if not a.has_var:
            if a.has_param and self.collapse:
                return self.fresh()
            if isinstance(a, Lit):
                with np.errstate(all="ignore"):
                    v = float(NUMPY_FUNCS[name](float(a.value)))
                if math.isfinite(v):
                    return Lit(v)
        return Func(name, a)

    def _split(self, t: Expr):
        """(scalar coefficient, monomial, parameter-scaled?) for a summand."""
        if isinstance(t, Product):
            q = Fraction(1)
            scaled = False
            rest = []
            for b, k in t.factors:
                if isinstance(b, Lit) and k == 1:
                    q = q * b.value
                elif isinstance(b, Param) and k == 1 and self.collapse and not scaled:
                    scaled = True
                else:
                    rest.append((b, k))
            if scaled and any(b.has_param for b, _ in rest):
                return Fraction(1), t, False
            if q != 1 or scaled:
                return q, _make_product(rest), scaled
        return Fraction(1), t, False

    def sum(self, items):
        flat = []
        for c, t in items:
            if isinstance(t, Sum):
                flat.extend((c * c2, t2) for c2, t2 in t.terms)
            else:
                flat.append((c, t))
        const = Fraction(0)
        const_param = False
        groups: dict[tuple, list] = {}
        for c, t in flat:
            if c == 0:
                continue
            if isinstance(t, Lit):
                const = const + c * t.value
                continue
            if not t.has_var and t.has_param and self.collapse:
                const_param = True
                continue
            q, mono, scaled = self._split(t)
            if isinstance(mono, Lit):
                const = const + c * q * mono.value
                continue
            gk = ("S" if scaled else "N", mono.key)
            if gk in groups:
                groups[gk][0] = groups[gk][0] + c * q
            else:
                groups[gk] = [c * q, mono]
        terms = []
        for (kind, mk), (q, mono) in groups.items():
            if kind == "N" and ("S", mk) in groups:
                continue
            if kind == "S":
                terms.append((1, _prepend(self.fresh(), mono)))
                continue
            if q == 0:
                continue
            qi = _as_int(q)
            if qi is not None:
                terms.append((qi, mono))
            else:
                sign = 1 if q > 0 else -1
                terms.append((sign, _prepend(Lit(abs(q)), mono)))
        if const_param:
            terms.append((1, self.fresh()))
        elif const != 0:
            terms.append((1 if const > 0 else -1, Lit(abs(const))))
        terms.sort(key=lambda ct: (ct[1].sort_key(), ct[0]))
        if not terms:
            return Lit(0)
        if len(terms) == 1:
            c, t = terms[0]
            return t if c == 1 else self.product([(Lit(c), 1), (t, 1)])
        return Sum(terms)

    def product(self, items):
        flat = []
        for b, k in items:
            if isinstance(b, Product):
                flat.extend((b2, k * k2) for b2, k2 in b.factors)
            else:
                flat.append((b, k))
        coef = Fraction(1)
        param = False
        groups: dict[str, list] = {}
        for b, k in flat:
            if k == 0:
                continue
            if isinstance(b, Lit):
                try:
                    coef = coef * b.value**k
                    continue
                except ZeroDivisionError:
                    pass
            elif not b.has_var and b.has_param and self.collapse:
                param = True
                continue
            if b.key in groups:
                groups[b.key][1] += k
            else:
                groups[b.key] = [b, k]
        if coef == 0:
            return Lit(0)
        factors = [(b, k) for b, k in groups.values() if k != 0]
        if param:
            return _prepend(self.fresh(), _make_product(sorted(factors, key=_factor_key)))
        expanded = self._expand(coef, factors)
        if expanded is not None:
            return expanded
        factors.sort(key=_factor_key)
        if not _is_one(coef):
            factors.insert(0, (Lit(coef), 1))
        return _make_product(factors)

    def _expand(self, coef, factors):
        if any(b.has_param for b, _ in factors):
            return None
        sums = [(b, k) for b, k in factors if isinstance(b, Sum) and k > 0]
        if not sums:
            return None
        size = 1
        for b, k in sums:
            size *= len(b.terms) ** k
        if size > _EXPAND_LIMIT:
            return None
        others = [(b, k) for b, k in factors if not (isinstance(b, Sum) and k > 0)]
        partial = [(Fraction(1), list(others))]
        for b, k in sums:
            for _ in range(k):
                partial = [(q * c, fs + [(t, 1)]) for q, fs in partial for c, t in b.terms]
        terms = [(1, self.product([(Lit(coef * q), 1)] + fs)) for q, fs in partial]
        return self.sum(terms)


def _factor_key(bk):
    b, k = bk
    return (b.sort_key(), k)


def _make_product(factors) -> Expr:
    factors = list(factors)
    if not factors:
        return Lit(1)
    if len(factors) == 1 and factors[0][1] == 1:
        return factors[0][0]
    return Product(factors)


def _prepend(head: Expr, body: Expr) -> Expr:
    # head is a Lit or Param, which sort before every other factor
    if isinstance(body, Lit) and body.value == 1:
        return head
    if isinstance(body, Product):
        return Product(((head, 1),) + body.factors)
    return Product(((head, 1), (body, 1)))


def _reindex(e: Expr, mapping: Mapping[int, int]) -> Expr:
    if not e.has_param:
        return e
    if isinstance(e, Param):
        return Param(mapping[e.index])
    if isinstance(e, Func):
        return Func(e.name, _reindex(e.arg, mapping))
    if isinstance(e, Sum):
        return Sum([(c, _reindex(t, mapping)) for c, t in e.terms])
    if isinstance(e, Product):
        return Product([(_reindex(b, mapping), k) for b, k in e.factors])
    return e


def renumber_parameters(e: Expr) -> Expr:
    """Renumber parameters 0, 1, ... in left-to-right first-occurrence order."""
    order = parameters(e)
    mapping = {old: new for new, old in enumerate(order)}
    if all(k == v for k, v in mapping.items()):
        return e
    return _reindex(e, mapping)


def canonicalize(e: Expr, max_rounds: int = 8) -> CanonicalForm:
    """Rewrite to a normal form usable as a deduplication key.

    Flattens nested sums and products, folds literals, merges like terms and
    repeated factors, distributes parameter-free products over sums, orders
    operands, collapses constant-only subtrees that contain a parameter into a
    single parameter (also absorbing numeric and sign coefficients of
    parameter-scaled terms), drops identities and renumbers parameters.
    Parameter collapse is skipped when a parameter index occurs more than once,
    since merging would then change the model.
    """
    order = e.param_order
    collapse = len(order) == len(set(order))
    current = e
    key = None
    for _ in range(max_rounds):
        current = renumber_parameters(_Canonicalizer(collapse).run(current))
        if current.key == key:
            break
        key = current.key
    return CanonicalForm(current, current.key, len(parameters(current)))


# -- evaluation -------------------------------------------------------------------


def compile_expression(e: Expr) -> Callable:
    """Compile to ``f(bindings, params)`` over numpy arrays or scalars.

    Parameters may be arrays shaped to broadcast against the variables, which
    lets a whole optimizer population be evaluated at once.
    """

    def comp(n: Expr):
        if isinstance(n, Var):
            name = n.name
            return lambda b, p: b[name]
        if isinstance(n, Param):
            i = n.index
            return lambda b, p: p[i]
        if isinstance(n, Lit):
            v = np.float64(n.value)
            return lambda b, p: v
        if isinstance(n, Func):
            f = NUMPY_FUNCS[n.name]
            a = comp(n.arg)
            return lambda b, p: f(a(b, p))
        if isinstance(n, Sum):
            parts = [(float(c), comp(t)) for c, t in n.terms]
            if all(c == 1.0 for c, _ in parts):
                fs = [f for _, f in parts]

                def s(b, p):
                    acc = fs[0](b, p)
                    for f in fs[1:]:
                        acc = acc + f(b, p)
                    return acc

                return s

            def s2(b, p):
                acc = 0.0
                for c, f in parts:
                    v = f(b, p)
                    acc = acc + (v if c == 1.0 else (-v if c == -1.0 else c * v))
                return acc

            return s2
        if isinstance(n, Product):
            parts = [(k, comp(b)) for b, k in n.factors]

            def m(b, p):
                acc = 1.0
                for k, f in parts:
                    v = f(b, p)
                    if k == 1:
                        acc = acc * v
                    elif k == -1:
                        acc = acc / v
                    elif k > 0:
                        acc = acc * v**k
                    else:
                        acc = acc / v ** (-k)
                return acc

            return m
        raise TypeError(n)

    inner = comp(e)

    def run(bindings, params=()):
        with np.errstate(all="ignore"):
            return inner(bindings, params)

    return run


def evaluate(e: Expr, bindings: Mapping[str, float], params: Sequence[float] = ()):
    """IEEE evaluation; domain violations give nan/inf instead of raising."""
    missing = variables(e) - set(bindings)
    if missing:
        raise ExpressionError(f"unbound variables: {', '.join(sorted(missing))}")
    n = len(parameters(e))
    if len(params) != n:
        raise ExpressionError(f"expected {n} parameters, got {len(params)}")
    idx = parameters(e)
    b = {k: np.asarray(v, dtype=float) if not np.isscalar(v) else np.float64(v) for k, v in bindings.items()}
    params = {i: np.float64(params[j]) for j, i in enumerate(idx)}
    out = compile_expression(e)(b, params)
    return float(out) if np.ndim(out) == 0 else out


# -- infix parsing ------------------------------------------------------------------

_LEX = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|(\*\*|[-+*/^()]))")


def _lex(text: str):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _LEX.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", bad)
        num, ident, op = m.groups()
        start = m.start(m.lastindex)
        if num is not None:
            out.append(("num", num, start))
        elif ident is not None:
            out.append(("id", ident, start))
        else:
            out.append(("op", "^" if op == "**" else op, start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def _make_power(base: Expr, exponent: Expr, position: int) -> Expr:
    if not isinstance(exponent, Lit):
        folded = _Canonicalizer(True).run(exponent)
        if not isinstance(folded, Lit):
            raise ExpressionSyntaxError("exponent must be a numeric constant", position)
        exponent = folded
    v = Fraction(exponent.value) if isinstance(exponent.value, float) else exponent.value
    if v.denominator == 1:
        return power(base, int(v))
    if v.denominator == 2 and v.numerator in (1, -1):
        return power(Func("sqrt", base), v.numerator)
    if v.denominator == 2:
        whole = (v.numerator - 1) // 2 if v > 0 else (v.numerator + 1) // 2
        return Product(((Func("sqrt", base), 1 if v > 0 else -1), (base, whole)))
    raise ExpressionSyntaxError(f"unsupported exponent {exponent.key}", position)


class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0
        self.counter = itertools.count()

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, v, pos = self.take()
        if v != value or kind == "end":
            raise ExpressionSyntaxError(f"expected {value!r}, got {v or 'end of input'!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {v!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        kind, v, pos = self.peek()
        if kind == "op" and v == "-":
            self.take()
            inner = self.unary()
            if isinstance(inner, Lit):
                return Lit(-inner.value)
            return neg(inner)
        if kind == "op" and v == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, v, pos = self.peek()
        if kind == "op" and v == "^":
            self.take()
            exponent = self.unary()
            return _make_power(base, exponent, pos)
        return base

    def atom(self) -> Expr:
        kind, v, pos = self.take()
        if kind == "num":
            return Lit(Fraction(v))
        if kind == "id":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if v not in NUMPY_FUNCS:
                    raise ExpressionSyntaxError(f"unknown function {v!r}", pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Func(v, arg)
            if v in NUMPY_FUNCS:
                raise ExpressionSyntaxError(f"function {v!r} needs an argument", pos)
            if v == CONSTANT:
                return Param(next(self.counter))
            return Var(v)
        if kind == "op" and v == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExpressionSyntaxError(f"unexpected {v or 'end of input'!r}", pos)


def parse_expression(text: str) -> Expr:
    """Parse infix arithmetic; ``^`` (or ``**``) binds tightest and is right-associative.

    The identifier ``c`` is a fresh parameter at each occurrence.
    """
    return _Parser(text).parse()


# -- complexity -----------------------------------------------------------------------

COMPLEXITY_MEASURES = ("string_length", "unique_variables", "operator_count")


def _operator_count(e: Expr) -> int:
    total = 0
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Func):
            total += 1
            stack.append(n.arg)
        elif isinstance(n, Sum):
            total += len(n.terms) - 1
            stack.extend(t for _, t in n.terms)
        elif isinstance(n, Product):
            total += len(n.factors) - 1 + sum(1 for _, k in n.factors if abs(k) != 1)
            stack.extend(b for b, _ in n.factors)
    return total


def complexity(e: Expr, measure: str) -> int:
    """``string_length`` counts alphanumerics of the canonical key; powers count as one operator."""
    if measure == "string_length":
        return sum(ch.isalnum() for ch in canonicalize(e).key)
    if measure == "unique_variables":
        return len(variables(e))
    if measure == "operator_count":
        return _operator_count(e)
    raise ValueError(f"unknown complexity measure {measure!r}; choose from {COMPLEXITY_MEASURES}")
