"""Symbolic expressions in n real variables.

Expressions are immutable trees built from constants, variables ``x1..xn``,
the arithmetic operators, integer powers and a fixed whitelist of unary
functions.  Everything Jacobian-related in the package (first and second
derivatives of the map, determinants, inverse-Jacobian entries) is derived
from these trees exactly; numbers only enter at evaluation time.

Grammar accepted by :func:`parse`::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' ['-'] INT)*          # right-associative
    atom    := NUMBER | 'pi' | VAR | FUNC '(' expr ')' | '(' expr ')'

Identifiers are ``[a-z][a-z0-9]*``; numbers ``[0-9]+(.[0-9]+)?([eE][+-]?[0-9]+)?``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArityError, DomainError, ExprSyntaxError

__all__ = [
    "Expr", "Const", "Var", "Add", "Sub", "Mul", "Div", "Neg", "IntPow", "Func",
    "FUNCTIONS", "parse", "derive", "simplify", "evaluate", "evaluate_many",
    "to_text", "max_var", "depth",
]

FUNCTIONS = ("sin", "cos", "tan", "sinh", "cosh", "tanh", "exp", "log",
             "sqrt", "asinh", "atan")

_NUMPY_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "sinh": np.sinh,
    "cosh": np.cosh, "tanh": np.tanh, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "asinh": np.arcsinh, "atan": np.arctan,
}


class Expr:
    """Base class; subclasses are frozen dataclasses."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Sub(self, _coerce(other))

    def __rsub__(self, other):
        return Sub(_coerce(other), self)

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("only integer exponents are supported")
        return IntPow(self, k)

    def __str__(self):
        return to_text(self)


def _coerce(value):
    if isinstance(value, Expr):
        return value
    return Const(float(value))


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    index: int

    def __repr__(self):
        return f"Var({self.index})"


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class IntPow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")


ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[a-z][a-z0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")")
_VAR_RE = re.compile(r"x([1-9][0-9]*)")


def _tokenize(text):
    tokens = []
    pos = 0
    end = len(text)
    while True:
        while pos < end and text[pos].isspace():
            pos += 1
        if pos >= end:
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(pos, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, arity):
        self.tokens = _tokenize(text)
        self.i = 0
        self.arity = arity

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind not in ("op",):
            raise ExprSyntaxError(pos, f"expected {value!r}, found {val or 'end of input'!r}")

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(pos, f"unexpected token {val!r}")
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.term()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.unary()
            left = Mul(left, right) if op == "*" else Div(left, right)
        return left

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        exponents = []
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            exponents.append(self.int_literal())
        if not exponents:
            return base
        k = exponents[-1]
        for e in reversed(exponents[:-1]):
            if k < 0:
                raise ExprSyntaxError(self.peek()[2], "negative exponent in a power tower")
            k = e ** k
        return IntPow(base, k)

    def int_literal(self):
        sign = 1
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            sign = -1
        kind, val, pos = self.take()
        if kind != "number" or not val.isdigit():
            raise ExprSyntaxError(pos, "exponent must be an integer literal")
        return sign * int(val)

    def atom(self):
        kind, val, pos = self.take()
        if kind == "number":
            return Const(float(val))
        if kind == "ident":
            if val == "pi":
                return Const(math.pi)
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            m = _VAR_RE.fullmatch(val)
            if m:
                idx = int(m.group(1))
                if idx > self.arity:
                    raise ArityError(
                        f"variable {val} at position {pos} exceeds arity {self.arity}")
                return Var(idx)
            raise ExprSyntaxError(pos, f"unknown identifier {val!r}")
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(pos, f"unexpected {val or 'end of input'!r}")


def parse(text: str, arity: int) -> Expr:
    """Parse infix text into an expression over ``x1..x<arity>``."""
    if arity < 1:
        raise ArityError(f"arity must be positive, got {arity}")
    return _Parser(text, arity).parse()


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e):
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC_NEG
    if isinstance(e, IntPow):
        return _PREC_POW
    return _PREC_ATOM


def _wrap(e, needs):
    s = to_text(e)
    return f"({s})" if needs else s


def to_text(e: Expr) -> str:
    """Render ``e`` in the parser's grammar with minimal parentheses."""
    if isinstance(e, Const):
        if not math.isfinite(e.value):
            raise ValueError(f"cannot print non-finite constant {e.value!r}")
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, (Add, Sub)):
        op = " + " if isinstance(e, Add) else " - "
        return (_wrap(e.left, _prec(e.left) < _PREC_ADD) + op
                + _wrap(e.right, _prec(e.right) <= _PREC_ADD or isinstance(e.right, Neg)))
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        return (_wrap(e.left, _prec(e.left) < _PREC_MUL) + op
                + _wrap(e.right, _prec(e.right) <= _PREC_NEG))
    if isinstance(e, Neg):
        return "-" + _wrap(e.operand, _prec(e.operand) < _PREC_NEG)
    if isinstance(e, IntPow):
        return _wrap(e.base, _prec(e.base) <= _PREC_POW) + f"^{e.exponent}"
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# evaluation

def _bad_point(env, mask):
    """Coordinates of the first True entry of ``mask``."""
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return tuple(float(np.asarray(c)) for c in env)
    k = int(np.argmax(mask.ravel()))
    out = []
    for c in env:
        c = np.broadcast_to(np.asarray(c, dtype=float), mask.shape)
        out.append(float(c.ravel()[k]))
    return tuple(out)


def _violation(e, env, bad, reason, value, strict):
    if strict:
        raise DomainError(e, _bad_point(env, bad), reason)
    return np.where(bad, np.nan, value)


def _ev(e, env, strict=True):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env[e.index - 1]
    if isinstance(e, Add):
        return _ev(e.left, env, strict) + _ev(e.right, env, strict)
    if isinstance(e, Sub):
        return _ev(e.left, env, strict) - _ev(e.right, env, strict)
    if isinstance(e, Mul):
        return _ev(e.left, env, strict) * _ev(e.right, env, strict)
    if isinstance(e, Div):
        num = _ev(e.left, env, strict)
        den = _ev(e.right, env, strict)
        bad = np.asarray(den) == 0
        if np.any(bad):
            safe = np.where(bad, 1.0, den)
            return _violation(e, env, bad, "division by zero", num / safe, strict)
        return num / den
    if isinstance(e, Neg):
        return -_ev(e.operand, env, strict)
    if isinstance(e, IntPow):
        base = _ev(e.base, env, strict)
        if e.exponent < 0:
            bad = np.asarray(base) == 0
            if np.any(bad):
                safe = np.where(bad, 1.0, base)
                return _violation(e, env, bad, "negative power of zero",
                                  1.0 / np.power(safe, -e.exponent), strict)
            return 1.0 / np.power(base, -e.exponent)
        return np.power(base, e.exponent)
    if isinstance(e, Func):
        arg = _ev(e.arg, env, strict)
        if e.name == "log":
            bad = np.asarray(arg) <= 0
            if np.any(bad):
                return _violation(e, env, bad, "log of non-positive value",
                                  np.log(np.where(bad, 1.0, arg)), strict)
        elif e.name == "sqrt":
            bad = np.asarray(arg) < 0
            if np.any(bad):
                return _violation(e, env, bad, "sqrt of negative value",
                                  np.sqrt(np.where(bad, 0.0, arg)), strict)
        return _NUMPY_FUNCS[e.name](arg)
    raise TypeError(f"not an expression: {e!r}")


def evaluate(e: Expr, point: Sequence[float]) -> float:
    """IEEE double value of ``e`` at a single point."""
    env = tuple(np.float64(v) for v in point)
    if max_var(e) > len(env):
        raise ArityError(f"expression uses x{max_var(e)} but point has {len(env)} entries")
    with np.errstate(over="ignore", invalid="ignore"):
        return float(_ev(e, env))


def evaluate_many(e: Expr, coords: Sequence[np.ndarray], strict: bool = True) -> np.ndarray:
    """Vectorised evaluation; ``coords[i]`` holds the values of ``x(i+1)``.

    All coordinate arrays must share one shape, which is also the shape of
    the result (constants are broadcast).  With ``strict=False`` domain
    violations yield NaN at the offending entries instead of raising.
    """
    env = tuple(np.asarray(c, dtype=float) for c in coords)
    if max_var(e) > len(env):
        raise ArityError(f"expression uses x{max_var(e)} but only {len(env)} coordinates given")
    shape = env[0].shape if env else ()
    with np.errstate(over="ignore", invalid="ignore"):
        out = _ev(e, env, strict)
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


# ---------------------------------------------------------------------------
# structure helpers

def max_var(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Const):
        return 0
    if isinstance(e, (Add, Sub, Mul, Div)):
        return max(max_var(e.left), max_var(e.right))
    if isinstance(e, Neg):
        return max_var(e.operand)
    if isinstance(e, IntPow):
        return max_var(e.base)
    if isinstance(e, Func):
        return max_var(e.arg)
    raise TypeError(f"not an expression: {e!r}")


def depth(e: Expr) -> int:
    if isinstance(e, (Const, Var)):
        return 1
    if isinstance(e, (Add, Sub, Mul, Div)):
        return 1 + max(depth(e.left), depth(e.right))
    if isinstance(e, Neg):
        return 1 + depth(e.operand)
    if isinstance(e, IntPow):
        return 1 + depth(e.base)
    return 1 + depth(e.arg)


# ---------------------------------------------------------------------------
# simplification

def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def _fold(e):
    """Replace a constant-only node by its value when that value is finite."""
    try:
        v = evaluate(e, ())
    except DomainError:
        return e
    if not math.isfinite(v):
        return e
    return Const(v)


def _add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Add(a, b))
    if isinstance(b, Neg):
        return _sub(a, b.operand)
    return Add(a, b)


def _sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Sub(a, b))
    if isinstance(b, Neg):
        return _add(a, b.operand)
    return Sub(a, b)


def _mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return _neg(b)
    if _is_const(b, -1.0):
        return _neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Mul(a, b))
    # sign changes are exact, so pulling them outward never alters a value
    if isinstance(a, Neg):
        return _neg(_mul(a.operand, b))
    if isinstance(b, Neg):
        return _neg(_mul(a, b.operand))
    return Mul(a, b)


def _div(a, b):
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Div(a, b))
    if isinstance(a, Neg):
        return _neg(_div(a.operand, b))
    if isinstance(b, Neg):
        return _neg(_div(a, b.operand))
    return Div(a, b)


def _neg(a):
    if isinstance(a, Neg):
        return a.operand
    if isinstance(a, Const):
        return Const(-a.value) if a.value != 0.0 else ZERO
    return Neg(a)


def _pow(b, k):
    if k == 0:
        return ONE
    if k == 1:
        return b
    if isinstance(b, Const):
        return _fold(IntPow(b, k))
    return IntPow(b, k)


def _func(name, arg):
    node = Func(name, arg)
    if isinstance(arg, Const):
        return _fold(node)
    return node


def simplify(e: Expr) -> Expr:
    """Constant folding plus the neutral/absorbing-element identities.

    There is no normal form: ``e - e`` stays as it is.  The result agrees
    with ``e`` wherever both evaluate.
    """
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Add):
        return _add(simplify(e.left), simplify(e.right))
    if isinstance(e, Sub):
        return _sub(simplify(e.left), simplify(e.right))
    if isinstance(e, Mul):
        return _mul(simplify(e.left), simplify(e.right))
    if isinstance(e, Div):
        return _div(simplify(e.left), simplify(e.right))
    if isinstance(e, Neg):
        return _neg(simplify(e.operand))
    if isinstance(e, IntPow):
        return _pow(simplify(e.base), e.exponent)
    if isinstance(e, Func):
        return _func(e.name, simplify(e.arg))
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# differentiation

def _d(e, var):
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == var else ZERO
    if isinstance(e, Add):
        return _add(_d(e.left, var), _d(e.right, var))
    if isinstance(e, Sub):
        return _sub(_d(e.left, var), _d(e.right, var))
    if isinstance(e, Neg):
        return _neg(_d(e.operand, var))
    if isinstance(e, Mul):
        a, b = e.left, e.right
        return _add(_mul(_d(a, var), b), _mul(a, _d(b, var)))
    if isinstance(e, Div):
        a, b = e.left, e.right
        da, db = _d(a, var), _d(b, var)
        if _is_const(db, 0.0):
            return _div(da, b)
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, 2))
    if isinstance(e, IntPow):
        db = _d(e.base, var)
        if _is_const(db, 0.0):
            return ZERO
        k = e.exponent
        return _mul(_mul(Const(float(k)), _pow(e.base, k - 1)), db)
    if isinstance(e, Func):
        da = _d(e.arg, var)
        if _is_const(da, 0.0):
            return ZERO
        return _mul(_outer_derivative(e.name, e.arg), da)
    raise TypeError(f"not an expression: {e!r}")


def _outer_derivative(name, a):
    if name == "sin":
        return Func("cos", a)
    if name == "cos":
        return _neg(Func("sin", a))
    if name == "tan":
        return _add(ONE, _pow(Func("tan", a), 2))
    if name == "sinh":
        return Func("cosh", a)
    if name == "cosh":
        return Func("sinh", a)
    if name == "tanh":
        return _sub(ONE, _pow(Func("tanh", a), 2))
    if name == "exp":
        return Func("exp", a)
    if name == "log":
        return _div(ONE, a)
    if name == "sqrt":
        return _div(ONE, _mul(Const(2.0), Func("sqrt", a)))
    if name == "asinh":
        return _div(ONE, Func("sqrt", _add(_pow(a, 2), ONE)))
    if name == "atan":
        return _div(ONE, _add(ONE, _pow(a, 2)))
    raise ValueError(f"unknown function {name!r}")


def derive(e: Expr, var: int, arity: int | None = None) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``x<var>``."""
    if var < 1 or (arity is not None and var > arity):
        raise ArityError(f"cannot differentiate with respect to x{var} (arity {arity})")
    return simplify(_d(e, var))
