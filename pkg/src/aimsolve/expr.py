"""Rational expressions in x, E and named parameters, and model files.

Grammar, loosest first::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := ("-" | "+") unary | power
    power := atom ("^" exponent)?
    exponent := INT ("^" exponent)?       # right associative, folded
    atom  := NUMBER | NAME | "(" expr ")"

so ``-x^2`` is ``Neg(Pow(x, 2))``.  Exponents are nonnegative integer
literals.  There are no functions: enter constants such as sqrt(2) as
decimals.
"""

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import XSeries, series_recip
from .engine import CoefficientSet, ExactCoefficients
from .errors import (
    ExprError,
    LexError,
    ModelFileError,
    ParseError,
    SingularCoefficient,
    UnboundVariable,
)

MAX_EXPONENT = 64

_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_OPS = set("+-*/^()")


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op" or "end"
    text: str
    pos: int
    value: float = None


def _byte_offset(text, i):
    return len(text[:i].encode("utf-8"))


def tokenize(text):
    """Split ``text`` into tokens; positions are byte offsets."""
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        m = _NUMBER.match(text, i)
        if m:
            out.append(Token("num", m.group(), _byte_offset(text, i), float(m.group())))
            i = m.end()
            continue
        m = _NAME.match(text, i)
        if m:
            out.append(Token("name", m.group(), _byte_offset(text, i)))
            i = m.end()
            continue
        if ch in _OPS:
            out.append(Token("op", ch, _byte_offset(text, i)))
            i += 1
            continue
        raise LexError(f"illegal character {ch!r}", _byte_offset(text, i))
    return out


# ------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=None, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Sub:
    left: object
    right: object


@dataclass(frozen=True)
class Mul:
    left: object
    right: object


@dataclass(frozen=True)
class Div:
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


_BINARY = {"+": Add, "-": Sub, "*": Mul, "/": Div}


class _Parser:
    def __init__(self, tokens):
        self.toks = list(tokens)
        for t in self.toks:
            if not isinstance(t, Token):
                raise ParseError(f"not a token: {t!r}")
        end = self.toks[-1].pos + len(self.toks[-1].text) if self.toks else 0
        self.toks.append(Token("end", "", end))
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, *ops):
        t = self.peek()
        return t.kind == "op" and t.text in ops

    def expr(self):
        node = self.term()
        while self.at("+", "-"):
            op = self.take().text
            node = _BINARY[op](node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.at("*", "/"):
            op = self.take().text
            node = _BINARY[op](node, self.unary())
        return node

    def unary(self):
        if self.at("-"):
            self.take()
            return Neg(self.unary())
        if self.at("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.at("^"):
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self):
        t = self.take()
        if t.kind != "num" or t.value != int(t.value):
            raise ParseError("exponent must be a nonnegative integer literal", t.pos)
        k = int(t.value)
        if self.at("^"):
            self.take()
            k = k ** self.exponent()
        if k > MAX_EXPONENT:
            raise ParseError(f"exponent {k} exceeds {MAX_EXPONENT}", t.pos)
        return k

    def atom(self):
        t = self.take()
        if t.kind == "num":
            return Num(t.value)
        if t.kind == "name":
            return Var(t.text, t.pos)
        if t.kind == "op" and t.text == "(":
            node = self.expr()
            close = self.take()
            if not (close.kind == "op" and close.text == ")"):
                raise ParseError("expected ')'", close.pos)
            return node
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.pos)


def parse(tokens):
    """Build an AST from a token list (or from a string, tokenized first)."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    p = _Parser(tokens)
    node = p.expr()
    t = p.peek()
    if t.kind != "end":
        raise ParseError(f"unexpected trailing {t.text!r}", t.pos)
    return node


def free_names(ast):
    """Variable names used in ``ast``."""
    if isinstance(ast, Var):
        return {ast.name}
    if isinstance(ast, Num):
        return set()
    if isinstance(ast, (Neg, Pow)):
        return free_names(ast.operand if isinstance(ast, Neg) else ast.base)
    return free_names(ast.left) | free_names(ast.right)


def denominators(ast):
    """Every right operand of a division, outermost first."""
    if isinstance(ast, (Num, Var)):
        return []
    if isinstance(ast, Neg):
        return denominators(ast.operand)
    if isinstance(ast, Pow):
        return denominators(ast.base)
    own = [ast.right] if isinstance(ast, Div) else []
    return own + denominators(ast.left) + denominators(ast.right)


# ------------------------------------------------------------ evaluation


def _lookup(name, env, pos):
    try:
        return float(env[name])
    except KeyError:
        raise UnboundVariable(f"unbound variable {name!r}", pos) from None


def eval_series(ast, env, x0, order):
    """Taylor series of ``ast`` about ``x0``, with E kept symbolic.

    x maps to x0 + u and E to the degree-one energy polynomial; every other
    name must be bound in ``env``.  A denominator that vanishes or depends
    on E at x0 raises ``SingularCoefficient``.
    """
    env = dict(env or {})

    def go(node):
        if isinstance(node, Num):
            return XSeries.constant(node.value, order, x0)
        if isinstance(node, Var):
            if node.name == "x":
                return XSeries.variable(order, x0)
            if node.name == "E":
                return XSeries.energy(order, x0)
            return XSeries.constant(_lookup(node.name, env, node.pos), order, x0)
        if isinstance(node, Neg):
            return -go(node.operand)
        if isinstance(node, Pow):
            return _series_pow(go(node.base), node.exponent)
        left, right = go(node.left), go(node.right)
        if isinstance(node, Add):
            return left + right
        if isinstance(node, Sub):
            return left - right
        if isinstance(node, Mul):
            return left * right
        return left * series_recip(right)

    return go(ast)


def _series_pow(s, k):
    out = XSeries.constant(1.0, s.order, s.x0)
    base = s
    while k:
        if k & 1:
            out = out * base
        k >>= 1
        if k:
            base = base * base
    return out


def numeric(ast, env=None):
    """Plain callable f(x, E) evaluating ``ast`` elementwise."""
    env = dict(env or {})
    for name in free_names(ast) - {"x", "E"}:
        _lookup(name, env, None)

    def go(node, x, e):
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Var):
            if node.name == "x":
                return x
            if node.name == "E":
                return e
            return float(env[node.name])
        if isinstance(node, Neg):
            return -go(node.operand, x, e)
        if isinstance(node, Pow):
            return go(node.base, x, e) ** node.exponent
        a, b = go(node.left, x, e), go(node.right, x, e)
        if isinstance(node, Add):
            return a + b
        if isinstance(node, Sub):
            return a - b
        if isinstance(node, Mul):
            return a * b
        return a / b

    def f(x, E):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return go(ast, x, E) + np.zeros_like(x)

    return f


# ------------------------------------------------------------ model files


COEFFS = ("a0", "b0", "c0", "d0")
_PARAM = re.compile(r"param\s+([A-Za-z_][A-Za-z0-9_]*)\s*=(.*)$")
_ASSIGN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=(.*)$")
_RESERVED = {"x", "E", "param", *COEFFS, "x0"}


@dataclass
class ModelSpec:
    """A parsed model file: four coefficient ASTs, parameters, x0."""

    coeffs: dict
    params: dict
    x0: float = 0.0
    lines: dict = field(default_factory=dict)
    path: str = None

    def with_params(self, **values):
        unknown = set(values) - set(self.params)
        if unknown:
            raise ModelFileError(f"unknown parameter(s) {', '.join(sorted(unknown))}", self.path)
        params = {**self.params, **{k: float(v) for k, v in values.items()}}
        return ModelSpec(self.coeffs, params, self.x0, self.lines, self.path)

    def exact(self):
        fns = [numeric(self.coeffs[k], self.params) for k in COEFFS]
        dens = []
        for k in COEFFS:
            for d in denominators(self.coeffs[k]):
                if "E" not in free_names(d):
                    g = numeric(d, self.params)
                    dens.append(lambda x, g=g: g(x, 0.0))
        return ExactCoefficients(*fns, denominators=tuple(dens))

    def coefficients(self, order):
        """CoefficientSet of this model expanded at x0."""
        series = []
        for k in COEFFS:
            try:
                series.append(eval_series(self.coeffs[k], self.params, self.x0, order))
            except (SingularCoefficient, UnboundVariable) as err:
                kind = type(err).__name__
                raise ModelFileError(f"{k}: {kind}: {err}", self.path, self.lines.get(k)) from err
        label = Path(self.path).stem if self.path else "custom"
        return CoefficientSet(*series, self.x0, 1.0, self.exact(), label)


def _constant(text, params, path, line):
    try:
        ast = parse(text)
    except ExprError as err:
        raise ModelFileError(f"{type(err).__name__}: {err}", path, line) from err
    bad = free_names(ast) - set(params)
    if bad:
        raise ModelFileError(f"constant expression uses unknown name(s) {', '.join(sorted(bad))}", path, line)
    value = float(numeric(ast, params)(0.0, 0.0))
    if not math.isfinite(value):
        raise ModelFileError("constant expression is not finite", path, line)
    return value


def parse_model(text, path=None):
    """Parse model-file text.

    One definition per line: ``a0 = ...`` through ``d0 = ...``,
    ``param name = value`` and ``x0 = value``; ``#`` starts a comment.
    Parameter values and x0 may be constant expressions in earlier
    parameters.
    """
    coeffs, params, lines = {}, {}, {}
    x0 = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        m = _PARAM.match(body)
        if m:
            name, rhs = m.group(1), m.group(2)
            if name in _RESERVED:
                raise ModelFileError(f"{name!r} cannot be a parameter name", path, lineno)
            if name in params:
                raise ModelFileError(f"parameter {name!r} defined twice", path, lineno)
            params[name] = _constant(rhs, params, path, lineno)
            continue
        m = _ASSIGN.match(body)
        if not m:
            raise ModelFileError(f"cannot read line {body!r}", path, lineno)
        key, rhs = m.group(1), m.group(2)
        if key == "x0":
            if x0 is not None:
                raise ModelFileError("x0 defined twice", path, lineno)
            x0 = _constant(rhs, params, path, lineno)
            lines["x0"] = lineno
        elif key in COEFFS:
            if key in coeffs:
                raise ModelFileError(f"{key} defined twice", path, lineno)
            try:
                coeffs[key] = parse(rhs)
            except ExprError as err:
                raise ModelFileError(f"{key}: {type(err).__name__}: {err}", path, lineno) from err
            lines[key] = lineno
        else:
            raise ModelFileError(f"unknown definition {key!r}", path, lineno)
    missing = [k for k in COEFFS if k not in coeffs]
    if missing:
        raise ModelFileError(f"missing definition(s) for {', '.join(missing)}", path)
    for k in COEFFS:
        bad = free_names(coeffs[k]) - set(params) - {"x", "E"}
        if bad:
            raise ModelFileError(f"{k}: unbound variable(s) {', '.join(sorted(bad))}", path, lines[k])
    return ModelSpec(coeffs, params, 0.0 if x0 is None else x0, lines, path)


def load_model(path):
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as err:
        raise ModelFileError(f"cannot read model file: {err}", path) from err
    return parse_model(text, path)
