"""A small expression language over state, control and time symbols.

Grammar (highest binding first)::

    primary := number | pi | x<i> | u<j> | t | func '(' expr ')' | '(' expr ')'
    power   := primary ['^' unary]            # right associative
    unary   := '-' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*

Expressions evaluate on floats or numpy arrays (batched), optionally carrying
forward-mode tangents: every value may come with a tangent array whose last
axis indexes the seed directions.
"""

from __future__ import annotations

import contextlib
import math
import re
import sys
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import QitrajError

MAX_DEPTH = 256
# Python frames used per tree level by the recursive parser and evaluator
_FRAMES_PER_LEVEL = 8

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "abs")


class ParseError(QitrajError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprSyntaxError(ParseError):
    pass


class UnknownIdentifierError(ParseError):
    pass


class VariableRangeError(ParseError):
    pass


class NumericDomainError(QitrajError, ArithmeticError):
    """Evaluation left the domain of an operation (log of non-positive, ...)."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (subexpression at offset {offset})")
        self.offset = offset


# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    kind: str  # 'x', 'u' or 't'
    index: int  # 1-based; 0 for t
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"
    pos: int = field(default=0, compare=False)


Node = Union[Num, Var, Neg, BinOp, Call]


# ------------------------------------------------------------------ parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)
_VAR = re.compile(r"([xu])(\d+)$")


class _Parser:
    def __init__(self, text, dims):
        self.text = text
        self.dims = dims
        self.tokens = self._tokenize(text)
        self.i = 0
        self.depth = 0

    def _offset(self, char_pos):
        return len(self.text[:char_pos].encode("utf-8"))

    def _tokenize(self, text):
        toks = []
        pos = 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}", self._offset(pos))
            kind = m.lastgroup
            start = m.start(kind)
            toks.append((kind, m.group(kind), self._offset(start)))
            pos = m.end()
        toks.append(("end", "", self._offset(len(text))))
        return toks

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            what = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", pos)

    def enter(self, pos):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            _, op, pos = self.take()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            _, op, pos = self.take()
            node = BinOp(op, node, self.unary(), pos)
        return node

    def unary(self):
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            self.enter(pos)
            node = Neg(self.unary(), pos)
            self.depth -= 1
            return node
        return self.power()

    def power(self):
        base = self.primary()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            self.enter(pos)
            node = BinOp("^", base, self.unary(), pos)
            self.depth -= 1
            return node
        return base

    def primary(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val), pos)
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                self.enter(pos)
                arg = self.expr()
                self.depth -= 1
                self.expect(")")
                return Call(val, arg, pos)
            if val == "pi":
                return Num(math.pi, pos)
            if val == "t":
                return Var("t", 0, pos)
            m = _VAR.match(val)
            if m is None:
                raise UnknownIdentifierError(f"unknown identifier {val!r}", pos)
            kind_, idx = m.group(1), int(m.group(2))
            limit = self.dims[0] if kind_ == "x" else self.dims[1]
            if not 1 <= idx <= limit:
                raise VariableRangeError(
                    f"variable {val} outside declared range {kind_}1..{kind_}{limit}", pos
                )
            return Var(kind_, idx, pos)
        if kind == "op" and val == "(":
            self.enter(pos)
            node = self.expr()
            self.depth -= 1
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", pos)


# -------------------------------------------------------------- evaluation


class _Env:
    __slots__ = ("x", "dx", "u", "du", "t", "dt")

    def __init__(self, x, dx, u, du, t, dt):
        self.x, self.dx, self.u, self.du, self.t, self.dt = x, dx, u, du, t, dt


def _fail(cond, message, pos):
    if np.any(cond):
        raise NumericDomainError(message, pos)


def _scale(dv, factor):
    if dv is None:
        return None
    return dv * np.asarray(factor)[..., None]


def _add(a, b, sign=1.0):
    if a is None:
        return b if b is None or sign > 0 else -b
    if b is None:
        return a
    return a + b if sign > 0 else a - b


def _eval(node, env):
    """Return ``(value, tangent)``; tangent is None when identically zero."""
    if isinstance(node, Num):
        return node.value, None
    if isinstance(node, Var):
        if node.kind == "t":
            return env.t, env.dt
        i = node.index - 1
        if node.kind == "x":
            return env.x[..., i], None if env.dx is None else env.dx[..., i, :]
        return env.u[..., i], None if env.du is None else env.du[..., i, :]
    if isinstance(node, Neg):
        v, dv = _eval(node.operand, env)
        return -v, None if dv is None else -dv
    if isinstance(node, BinOp):
        a, da = _eval(node.left, env)
        b, db = _eval(node.right, env)
        op = node.op
        if op == "+":
            return a + b, _add(da, db)
        if op == "-":
            return a - b, _add(da, db, -1.0)
        if op == "*":
            return a * b, _add(_scale(da, b), _scale(db, a))
        if op == "/":
            _fail(np.asarray(b) == 0, "division by zero", node.pos)
            q = a / b
            if da is None and db is None:
                return q, None
            return q, _scale(_add(da, _scale(db, q), -1.0), 1.0 / np.asarray(b))
        return _pow(a, da, b, db, node)
    if isinstance(node, Call):
        v, dv = _eval(node.arg, env)
        return _call(node, v, dv)
    raise TypeError(f"not an expression node: {node!r}")


def _pow(a, da, b, db, node):
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    integral = b_arr == np.round(b_arr)
    _fail((a_arr < 0) & ~integral, "negative base with non-integer exponent", node.pos)
    _fail((a_arr == 0) & (b_arr < 0), "zero raised to a negative power", node.pos)
    val = a_arr**b_arr
    if np.ndim(val) == 0:
        val = float(val)
    tangent = None
    if da is not None:
        # b * a**(b-1); the b == 0 case contributes nothing
        with np.errstate(divide="ignore", invalid="ignore"):
            coeff = np.where(b_arr == 0, 0.0, b_arr * a_arr ** (b_arr - 1.0))
        _fail(~np.isfinite(coeff), "power not differentiable at zero base", node.pos)
        tangent = _scale(da, coeff)
    if db is not None:
        _fail(a_arr <= 0, "variable exponent requires a positive base", node.pos)
        tangent = _add(tangent, _scale(db, val * np.log(a_arr)))
    return val, tangent


def _call(node, v, dv):
    f = node.func
    pos = node.pos
    if f == "sin":
        return np.sin(v), _scale(dv, np.cos(v))
    if f == "cos":
        return np.cos(v), _scale(dv, -np.sin(v))
    if f == "tan":
        c = np.cos(v)
        _fail(c == 0, "tan at a pole", pos)
        return np.tan(v), _scale(dv, 1.0 / (c * c))
    if f == "exp":
        e = np.exp(v)
        _fail(np.isinf(e), "exp overflow", pos)
        return e, _scale(dv, e)
    if f == "log":
        _fail(np.asarray(v) <= 0, "log of a non-positive value", pos)
        return np.log(v), _scale(dv, 1.0 / np.asarray(v))
    if f == "sqrt":
        _fail(np.asarray(v) < 0, "sqrt of a negative value", pos)
        s = np.sqrt(v)
        if dv is None:
            return s, None
        _fail(s == 0, "sqrt not differentiable at zero", pos)
        return s, _scale(dv, 0.5 / s)
    if f == "sinh":
        return np.sinh(v), _scale(dv, np.cosh(v))
    if f == "cosh":
        return np.cosh(v), _scale(dv, np.sinh(v))
    if f == "tanh":
        th = np.tanh(v)
        return th, _scale(dv, 1.0 - th * th)
    if f == "abs":
        return np.abs(v), _scale(dv, np.sign(v))
    raise TypeError(f"unknown function {f}")


# ------------------------------------------------------------- unparsing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def _wrap(node, minimum):
    s = _unparse(node)
    return s if _prec(node) >= minimum else f"({s})"


def unparse(node) -> str:
    """Render an AST as text that parses back to an equal tree."""
    if isinstance(node, Expression):
        node = node.root
    with _headroom():
        return _unparse(node)


def _unparse(node) -> str:
    if isinstance(node, Num):
        if node.value == math.pi:
            return "pi"
        v = float(node.value)
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    if isinstance(node, Var):
        return "t" if node.kind == "t" else f"{node.kind}{node.index}"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, 3)
    if isinstance(node, Call):
        return f"{node.func}({_unparse(node.arg)})"
    if node.op == "^":
        return f"{_wrap(node.left, 5)}^{_wrap(node.right, 3)}"
    p = _PREC[node.op]
    return f"{_wrap(node.left, p)} {node.op} {_wrap(node.right, p + 1)}"


def _children(node):
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return (node.arg,)
    return ()


def _walk(node):
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(_children(n)))


def _check_depth(root):
    """Raise if the tree is deeper than MAX_DEPTH; returns the depth."""
    deepest = 0
    stack = [(root, 1)]
    while stack:
        n, depth = stack.pop()
        if depth > MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", n.pos)
        deepest = max(deepest, depth)
        stack.extend((c, depth + 1) for c in _children(n))
    return deepest


@contextlib.contextmanager
def _headroom():
    """Temporarily allow enough recursion for a tree of MAX_DEPTH levels."""
    limit = sys.getrecursionlimit()
    need = 1000 + _FRAMES_PER_LEVEL * MAX_DEPTH
    if limit < need:
        sys.setrecursionlimit(need)
    try:
        yield
    finally:
        if limit < need:
            sys.setrecursionlimit(limit)


# ------------------------------------------------------------- public API


@dataclass(frozen=True)
class Expression:
    """A parsed expression bound to state/control dimensions ``(d, m)``."""

    root: Node
    dims: tuple
    text: str = field(default="", compare=False)
    depth: int = field(default=1, compare=False)

    @property
    def symbols(self) -> set:
        return {
            ("t" if n.kind == "t" else f"{n.kind}{n.index}") for n in _walk(self.root) if isinstance(n, Var)
        }

    @property
    def uses_control(self) -> bool:
        return any(isinstance(n, Var) and n.kind == "u" for n in _walk(self.root))

    @property
    def uses_time(self) -> bool:
        return any(isinstance(n, Var) and n.kind == "t" for n in _walk(self.root))

    @property
    def nonsmooth(self) -> bool:
        return any(isinstance(n, Call) and n.func == "abs" for n in _walk(self.root))

    @property
    def is_zero(self) -> bool:
        return isinstance(self.root, Num) and self.root.value == 0.0

    def evaluate(self, x, u, t, dx=None, du=None, dt=None):
        """Batched evaluation.

        ``x`` has shape ``(..., d)``, ``u`` ``(..., m)``, ``t`` broadcastable to
        ``(...)``.  Tangents ``dx``/``du`` append a seed axis: ``(..., d, s)``.
        Returns ``(value, tangent)`` where the value has shape ``(...)`` and the
        tangent ``(..., s)`` (or None when no tangent was supplied).
        """
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], np.shape(t))
        t = np.broadcast_to(np.asarray(t, dtype=float), batch)
        deep = _headroom() if self.depth > 32 else contextlib.nullcontext()
        with np.errstate(all="ignore"), deep:
            v, dv = _eval(self.root, _Env(x, dx, u, du, t, dt))
        v = np.broadcast_to(np.asarray(v, dtype=float), batch)
        if dv is not None or any(a is not None for a in (dx, du, dt)):
            seeds = next(a.shape[-1] for a in (dx, du, dt) if a is not None)
            dv = np.zeros(batch + (seeds,)) if dv is None else np.broadcast_to(dv, batch + (seeds,))
        return v, dv

    def __str__(self):
        return unparse(self.root)


def parse(text: str, dims) -> Expression:
    """Parse ``text`` against state/control dimensions ``dims = (d, m)``."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    dims = (int(dims[0]), int(dims[1]))
    with _headroom():
        root = _Parser(text, dims).parse()
    return Expression(root, dims, text, _check_depth(root))


def _vectors(e, x, u):
    d, m = e.dims
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.size != d or u.size != m:
        raise ValueError(f"expected state of size {d} and control of size {m}")
    return x, u


def eval_expr(e: Expression, x, u, t) -> float:
    """Evaluate at a single point; domain faults raise NumericDomainError."""
    x, u = _vectors(e, x, u)
    v, _ = e.evaluate(x, u, float(t))
    return float(v)


def eval_dual(e: Expression, x, u, t, seed):
    """Value and directional derivative along ``seed``.

    ``seed`` covers ``(x, u)`` (length ``d + m``) and may carry one extra
    trailing entry for ``t``.
    """
    x, u = _vectors(e, x, u)
    d, m = e.dims
    seed = np.asarray(seed, dtype=float).reshape(-1)
    if seed.size not in (d + m, d + m + 1):
        raise ValueError(f"seed must have length {d + m} (or {d + m + 1} including t)")
    dt = np.array([seed[d + m]]) if seed.size == d + m + 1 else None
    v, dv = e.evaluate(x, u, float(t), seed[:d, None], seed[d : d + m, None], dt)
    return float(v), float(dv[0])
