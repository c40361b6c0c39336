"""A small arithmetic language for model definitions.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right-associative, binds tighter than '-'
    primary := NUMBER | NAME | FUNC '(' args ')' | '(' expr ')'

so ``-Psi^2`` is ``-(Psi^2)`` and ``2^-1`` is ``0.5``.  Functions are
``exp log sqrt abs`` (one argument) and ``pow`` (two).

Evaluation is vectorised.  A nan produced by a node whose operands were not
nan (log of a negative number, 0/0, ...) raises :class:`EvaluationError`
pointing at that node; infinities are ordinary values.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

__all__ = [
    "Span",
    "Num",
    "Name",
    "Unary",
    "Binary",
    "Call",
    "Expression",
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "EvaluationError",
    "FUNCTIONS",
    "parse_expression",
    "to_source",
    "differentiate",
]

FUNCTIONS = {"exp": 1, "log": 1, "sqrt": 1, "abs": 1, "pow": 2}


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    line: int
    column: int

    def __str__(self):
        return f"line {self.line}, column {self.column}"


# tree nodes; spans never take part in equality


@dataclass(frozen=True)
class Num:
    value: float
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Name:
    id: str
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    span: Optional[Span] = field(default=None, compare=False, repr=False)


class ExpressionError(ValueError):
    def __init__(self, message, span: Optional[Span] = None):
        where = f" at {span}" if span is not None else ""
        super().__init__(f"{message}{where}")
        self.span = span
        self.line = span.line if span else None
        self.column = span.column if span else None


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionSyntaxError):
    pass


class ArityError(ExpressionSyntaxError):
    pass


class EvaluationError(ExpressionError, ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    text: str
    span: Span


def _tokenize(source: str):
    pos, line, line_start = 0, 1, 0
    out = []
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        span = Span(pos, pos, line, pos - line_start + 1)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {source[pos]!r}", span)
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            for k, ch in enumerate(text):
                if ch == "\n":
                    line += 1
                    line_start = pos + k + 1
        else:
            out.append(_Tok(kind, text, Span(pos, m.end(), span.line, span.column)))
        pos = m.end()
    out.append(_Tok("end", "", Span(pos, pos, line, pos - line_start + 1)))
    return out


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, source: str, allowed: frozenset):
        self.toks = _tokenize(source)
        self.i = 0
        self.allowed = allowed

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.tok
        if t.kind == "op" and t.text == text:
            return self.advance()
        got = "end of input" if t.kind == "end" else repr(t.text)
        raise ExpressionSyntaxError(f"expected {text!r}, got {got}", t.span)

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {self.tok.text!r}", self.tok.span)
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance()
            node = Binary(op.text, node, self.term(), op.span)
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance()
            node = Binary(op.text, node, self.unary(), op.span)
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            op = self.advance()
            return Unary("-", self.unary(), op.span)
        return self.power()

    def power(self):
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            op = self.advance()
            return Binary("^", base, self.unary(), op.span)
        return base

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text), t.span)
        if t.kind == "name":
            self.advance()
            if t.text in FUNCTIONS:
                return self.call(t)
            if t.text not in self.allowed:
                names = ", ".join(sorted(self.allowed)) or "(none)"
                raise UnknownIdentifierError(f"unknown identifier {t.text!r}; allowed names: {names}", t.span)
            return Name(t.text, t.span)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if t.kind == "end" else repr(t.text)
        raise ExpressionSyntaxError(f"expected a number, name or '(', got {got}", t.span)

    def call(self, name_tok):
        if not (self.tok.kind == "op" and self.tok.text == "("):
            raise ExpressionSyntaxError(f"function {name_tok.text!r} must be called", name_tok.span)
        self.advance()
        args = [self.expr()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        want = FUNCTIONS[name_tok.text]
        if len(args) != want:
            raise ArityError(f"{name_tok.text} takes {want} argument(s), got {len(args)}", name_tok.span)
        return Call(name_tok.text, tuple(args), name_tok.span)


# ---------------------------------------------------------------------------
# printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary) or (isinstance(node, Num) and node.value < 0):
        return 3
    return 5


def _num_text(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(node) -> str:
    """Minimal-parenthesis source text; parsing it gives back an equal tree."""
    if isinstance(node, Num):
        return _num_text(node.value)
    if isinstance(node, Name):
        return node.id
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Unary):
        inner = to_source(node.operand)
        return f"-({inner})" if _prec(node.operand) < 3 else f"-{inner}"

    def wrap(child, need):
        s = to_source(child)
        return f"({s})" if need else s

    p = _PREC[node.op]
    if node.op == "^":
        left = wrap(node.left, _prec(node.left) <= 4)
        right = wrap(node.right, _prec(node.right) < 3)
        return f"{left}^{right}"
    left = wrap(node.left, _prec(node.left) < p)
    right = wrap(node.right, _prec(node.right) <= p)
    return f"{left} {node.op} {right}"


# ---------------------------------------------------------------------------
# evaluation

_UNARY_FUNCS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs}
_BINOPS = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}


def _check(result, operands, node, what):
    result = np.asarray(result, dtype=float)
    new_nan = np.isnan(result)
    for o in operands:
        new_nan = new_nan & ~np.isnan(o)
    if np.any(new_nan):
        raise EvaluationError(f"{what} is undefined for the given arguments", node.span)
    return result


def _eval(node, env):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Name):
        return env[node.id]
    if isinstance(node, Unary):
        return np.negative(_eval(node.operand, env))
    if isinstance(node, Binary):
        a = np.asarray(_eval(node.left, env), dtype=float)
        b = np.asarray(_eval(node.right, env), dtype=float)
        return _check(_BINOPS[node.op](a, b), (a, b), node, f"'{node.op}'")
    if isinstance(node, Call):
        args = [np.asarray(_eval(a, env), dtype=float) for a in node.args]
        if node.func == "pow":
            res = np.power(*args)
        else:
            res = _UNARY_FUNCS[node.func](args[0])
        return _check(res, args, node, f"{node.func}()")
    raise TypeError(f"not an expression node: {node!r}")


def _free_names(node, acc):
    if isinstance(node, Name):
        acc.add(node.id)
    elif isinstance(node, Unary):
        _free_names(node.operand, acc)
    elif isinstance(node, Binary):
        _free_names(node.left, acc)
        _free_names(node.right, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _free_names(a, acc)
    return acc


# ---------------------------------------------------------------------------
# symbolic derivative (with light constant folding)


def _is(node, v):
    return isinstance(node, Num) and node.value == v


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return Binary("+", a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return Unary("-", b)
    return Binary("-", a, b)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return Num(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return Binary("*", a, b)


def _div(a, b):
    if _is(a, 0):
        return Num(0.0)
    if _is(b, 1):
        return a
    return Binary("/", a, b)


def differentiate(node, var: str):
    """d node / d var as a new tree."""
    d = lambda n: differentiate(n, var)  # noqa: E731
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Name):
        return Num(1.0 if node.id == var else 0.0)
    if isinstance(node, Unary):
        inner = d(node.operand)
        return Num(0.0) if _is(inner, 0) else Unary("-", inner)
    if isinstance(node, Call) and node.func == "pow":
        return differentiate(Binary("^", *node.args), var)
    if isinstance(node, Call):
        u = node.args[0]
        du = d(u)
        if _is(du, 0):
            return Num(0.0)
        outer = {
            "exp": lambda: node,
            "log": lambda: _div(Num(1.0), u),
            "sqrt": lambda: _div(Num(0.5), node),
            "abs": lambda: _div(u, node),
        }[node.func]()
        return _mul(outer, du)
    a, b = node.left, node.right
    da, db = d(a), d(b)
    if node.op == "+":
        return _add(da, db)
    if node.op == "-":
        return _sub(da, db)
    if node.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if node.op == "/":
        return _sub(_div(da, b), _div(_mul(a, db), Binary("^", b, Num(2.0))))
    # power
    if _is(db, 0):
        if _is(da, 0):
            return Num(0.0)
        if isinstance(b, Num):
            lowered = Binary("^", a, Num(b.value - 1.0)) if b.value != 1.0 else Num(1.0)
        else:
            lowered = Binary("^", a, Binary("-", b, Num(1.0)))
        return _mul(_mul(b, lowered), da)
    # general case a^b (b' log a + b a'/a)
    return _mul(node, _add(_mul(db, Call("log", (a,))), _div(_mul(b, da), a)))


# ---------------------------------------------------------------------------
# public wrapper


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with the names it may refer to."""

    tree: object
    allowed: frozenset = field(default_factory=frozenset, compare=False)
    source: str = field(default="", compare=False)

    @property
    def names(self) -> frozenset:
        return frozenset(_free_names(self.tree, set()))

    def __str__(self):
        return to_source(self.tree)

    def print(self) -> str:
        return to_source(self.tree)

    def evaluate(self, env: Mapping[str, object]):
        missing = self.names - set(env)
        if missing:
            raise EvaluationError(f"no value for {', '.join(sorted(missing))}")
        arrays = {k: np.asarray(v, dtype=float) for k, v in env.items()}
        with np.errstate(all="ignore"):
            out = _eval(self.tree, arrays)
        return np.asarray(out, dtype=float)

    def __call__(self, **env):
        return self.evaluate(env)

    def derivative(self, var: str) -> "Expression":
        return Expression(differentiate(self.tree, var), self.allowed)

    def bind(self, params: Mapping[str, float]) -> "Expression":
        """Replace parameter names by their numeric values."""
        return Expression(_substitute(self.tree, params), self.allowed - set(params))


def _substitute(node, params):
    if isinstance(node, Name) and node.id in params:
        return Num(float(params[node.id]), node.span)
    if isinstance(node, Unary):
        return Unary(node.op, _substitute(node.operand, params), node.span)
    if isinstance(node, Binary):
        return Binary(node.op, _substitute(node.left, params), _substitute(node.right, params), node.span)
    if isinstance(node, Call):
        return Call(node.func, tuple(_substitute(a, params) for a in node.args), node.span)
    return node


def parse_expression(source: str, variables: Iterable[str] = ("Psi", "r2"),
                     params: Optional[Mapping[str, float]] = None) -> Expression:
    """Parse ``source``; identifiers must be one of ``variables`` or a parameter name."""
    if not isinstance(source, str):
        raise TypeError("expression source must be a string")
    allowed = frozenset(variables) | frozenset(params or ())
    clash = allowed & set(FUNCTIONS)
    if clash:
        raise ValueError(f"names shadow functions: {sorted(clash)}")
    tree = _Parser(source, allowed).parse()
    return Expression(tree, allowed, source)

