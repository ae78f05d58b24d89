"""Warp-factor expression language.

Grammar (^ binds tighter than unary minus, right-associative):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? power
    power  := atom ('^' factor)?
    atom   := number | 'r' | 's' | 'pi' | 'e' | ident '(' expr ')' | '(' expr ')'

Two evaluators are provided: a plain hyper-dual one returning the value
jet of psi, and a log-domain one returning the jet of log(psi).  The log
evaluator pushes the logarithm through products, quotients, powers, exp,
sqrt, sinh and cosh, so warps such as r*exp(r^2*g + r) evaluate exactly
at radii where psi itself would overflow; other node kinds fall back to
the plain jet and convert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .hyperdual import UNARY_FUNCTIONS, HyperDual

__all__ = [
    "WarpSyntaxError",
    "WarpEvalError",
    "Num", "Var", "Const", "Neg", "BinOp", "Call", "Expr",
    "parse_warp", "serialize", "free_variables",
    "eval_expr", "eval_log_expr", "const_value",
]


class WarpSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


class WarpEvalError(ArithmeticError):
    def __init__(self, message: str, subexpr: str):
        super().__init__(f"{message} in '{subexpr}'")
        self.subexpr = subexpr


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # 'r' or 's'


@dataclass(frozen=True)
class Const:
    name: str  # 'pi' or 'e'


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*', '/', '^'
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Num, Var, Const, Neg, BinOp, Call]

_CONSTANTS = {"pi": math.pi, "e": math.e}


# ---------------------------------------------------------------------------
# lexing / parsing

@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'ident', 'op', 'end'
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == ".":
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tokens.append(_Token("num", text[i:j], i))
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], i))
            i = j
        elif ch in "+-*/^(),":
            tokens.append(_Token("op", ch, i))
            i += 1
        else:
            raise WarpSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        tok = self.peek()
        if tok.kind == "op" and tok.text == op:
            return self.advance()
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise WarpSyntaxError(f"expected {op!r}, found {what}", tok.pos)

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise WarpSyntaxError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return Neg(self.power())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name in ("r", "s"):
                return Var(name)
            if name in _CONSTANTS:
                return Const(name)
            if name in UNARY_FUNCTIONS:
                self.expect_op("(")
                args = [self.expr()]
                while self.peek().kind == "op" and self.peek().text == ",":
                    comma = self.advance()
                    args.append(self.expr())
                if len(args) != 1:
                    raise WarpSyntaxError(
                        f"{name} expects 1 argument, got {len(args)}", comma.pos)
                self.expect_op(")")
                return Call(name, args[0])
            raise WarpSyntaxError(f"unknown identifier {name!r}", tok.pos)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise WarpSyntaxError(f"expected expression, found {what}", tok.pos)


def parse_warp(text: str) -> Expr:
    """Parse a warp expression; raises WarpSyntaxError with a position."""
    if not text or not text.strip():
        raise WarpSyntaxError("empty expression", 0)
    return _Parser(_tokenize(text)).parse()


# ---------------------------------------------------------------------------
# serialization (round-trips through parse_warp to an equal tree)

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL,
                "/": _PREC_MUL, "^": _PREC_POW}[node.op]
    if isinstance(node, Neg):
        return _PREC_NEG
    return _PREC_ATOM


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def serialize(node: Expr) -> str:
    def wrap(child: Expr, min_prec: int) -> str:
        s = serialize(child)
        return f"({s})" if _prec(child) < min_prec else s

    if isinstance(node, Num):
        if node.value < 0:
            return f"(-{_fmt_number(-node.value)})"
        return _fmt_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Neg):
        inner = node.arg
        if _prec(inner) < _PREC_NEG or isinstance(inner, Neg):
            return f"-({serialize(inner)})"
        return f"-{serialize(inner)}"
    if isinstance(node, BinOp):
        if node.op == "^":
            return f"{wrap(node.lhs, _PREC_ATOM)}^{wrap(node.rhs, _PREC_NEG)}"
        p = _prec(node)
        return f"{wrap(node.lhs, p)}{node.op}{wrap(node.rhs, p + 1)}"
    if isinstance(node, Call):
        return f"{node.fn}({serialize(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Expr) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return free_variables(node.arg)
    if isinstance(node, BinOp):
        return free_variables(node.lhs) | free_variables(node.rhs)
    if isinstance(node, Call):
        return free_variables(node.arg)
    return set()


# ---------------------------------------------------------------------------
# evaluation

def const_value(node: Expr) -> Optional[float]:
    """Value of a closed subexpression (no r, s), or None."""
    if free_variables(node):
        return None
    hd = eval_expr(node, 0.0, 0.0)
    return float(hd.value)


def _any(x) -> bool:
    return bool(np.any(x))


def eval_expr(node: Expr, r, s) -> HyperDual:
    """Hyper-dual jet of the expression at (r, s); floats or arrays."""
    if isinstance(node, Num):
        return HyperDual.constant(node.value)
    if isinstance(node, Const):
        return HyperDual.constant(_CONSTANTS[node.name])
    if isinstance(node, Var):
        return HyperDual.variable_r(r) if node.name == "r" else HyperDual.variable_s(s)
    if isinstance(node, Neg):
        return -eval_expr(node.arg, r, s)
    if isinstance(node, Call):
        arg = eval_expr(node.arg, r, s)
        if node.fn == "log" and _any(arg.value <= 0.0):
            raise WarpEvalError("log of a non-positive value", serialize(node))
        if node.fn == "sqrt" and _any(arg.value < 0.0):
            raise WarpEvalError("square root of a negative value", serialize(node))
        return UNARY_FUNCTIONS[node.fn](arg)
    if isinstance(node, BinOp):
        if node.op == "+":
            return eval_expr(node.lhs, r, s) + eval_expr(node.rhs, r, s)
        if node.op == "-":
            return eval_expr(node.lhs, r, s) - eval_expr(node.rhs, r, s)
        if node.op == "*":
            return eval_expr(node.lhs, r, s) * eval_expr(node.rhs, r, s)
        if node.op == "/":
            den = eval_expr(node.rhs, r, s)
            if _any(den.value == 0.0):
                raise WarpEvalError("division by zero", serialize(node))
            return eval_expr(node.lhs, r, s) / den
        if node.op == "^":
            return _eval_pow(node, r, s)
    raise TypeError(f"not an expression node: {node!r}")


def _eval_pow(node: BinOp, r, s) -> HyperDual:
    base = eval_expr(node.lhs, r, s)
    expo_const = const_value(node.rhs)
    if expo_const is not None and float(expo_const).is_integer() and abs(expo_const) <= 1024:
        n = int(expo_const)
        if n < 0 and _any(base.value == 0.0):
            raise WarpEvalError("zero raised to a negative power", serialize(node))
        if n == 0:
            return HyperDual.constant(np.ones_like(np.asarray(base.value, dtype=float))
                                      if np.ndim(base.value) else 1.0)
        return base ** n
    if _any(base.value <= 0.0):
        raise WarpEvalError("non-integer power requires a positive base", serialize(node))
    expo = eval_expr(node.rhs, r, s)
    return UNARY_FUNCTIONS["exp"](expo * UNARY_FUNCTIONS["log"](base))


# --- log-domain jets -------------------------------------------------------

def _log_from_plain(node: Expr, r, s):
    y = eval_expr(node, r, s)
    v = y.value
    if _any(~np.isfinite(np.asarray(v, dtype=float))):
        raise WarpEvalError(
            "subexpression magnitude exceeds float range; express the warp "
            "through products and exp so it can be evaluated in log space",
            serialize(node))
    if _any(v == 0.0):
        raise WarpEvalError("warp factor vanishes", serialize(node))
    sign = np.sign(v)
    g1r, g1s = y.d_r / v, y.d_s / v
    jet = HyperDual(np.log(np.abs(v)), g1r, g1s,
                    y.d_rr / v - g1r * g1r,
                    y.d_rs / v - g1r * g1s,
                    y.d_ss / v - g1s * g1s)
    return sign, jet


def eval_log_expr(node: Expr, r, s):
    """(sign, jet of log|expr|) evaluated without forming huge magnitudes."""
    if isinstance(node, BinOp) and node.op == "*":
        s1, j1 = eval_log_expr(node.lhs, r, s)
        s2, j2 = eval_log_expr(node.rhs, r, s)
        return s1 * s2, j1 + j2
    if isinstance(node, BinOp) and node.op == "/":
        s1, j1 = eval_log_expr(node.lhs, r, s)
        s2, j2 = eval_log_expr(node.rhs, r, s)
        return s1 * s2, j1 - j2
    if isinstance(node, BinOp) and node.op == "^":
        sgn, jb = eval_log_expr(node.lhs, r, s)
        one = 0.0 * sgn + 1.0
        expo_const = const_value(node.rhs)
        if expo_const is not None and float(expo_const).is_integer():
            n = int(expo_const)
            return (sgn if n % 2 else one), jb * float(n)
        if _any(sgn <= 0.0):
            raise WarpEvalError("non-integer power requires a positive base",
                                serialize(node))
        if expo_const is not None:
            return one, jb * float(expo_const)
        return one, eval_expr(node.rhs, r, s) * jb
    if isinstance(node, Neg):
        sgn, j = eval_log_expr(node.arg, r, s)
        return -sgn, j
    if isinstance(node, Call) and node.fn == "exp":
        j = eval_expr(node.arg, r, s)
        one = np.ones_like(np.asarray(j.value, dtype=float)) if np.ndim(j.value) else 1.0
        return one, j
    if isinstance(node, Call) and node.fn == "sqrt":
        sgn, j = eval_log_expr(node.arg, r, s)
        if _any(sgn < 0.0):
            raise WarpEvalError("square root of a negative value", serialize(node))
        return sgn * 0.0 + 1.0, j * 0.5
    if isinstance(node, Call) and node.fn in ("sinh", "cosh"):
        u = eval_expr(node.arg, r, s)
        if node.fn == "sinh" and _any(u.value == 0.0):
            raise WarpEvalError("warp factor vanishes", serialize(node))
        w = np.abs(u.value)
        e2 = np.exp(-2.0 * w)
        t = np.tanh(u.value)
        if node.fn == "sinh":
            # log|sinh u| = |u| + log1p(-e^{-2|u|}) - log 2; d/du = coth u
            val = w + np.log1p(-e2) - math.log(2.0)
            sgn = np.sign(u.value)
            d1 = 1.0 / t
            d2 = -4.0 * e2 / (1.0 - e2) ** 2
        else:
            val = w + np.log1p(e2) - math.log(2.0)
            sgn = 0.0 * np.sign(u.value) + 1.0
            d1 = t
            d2 = 4.0 * e2 / (1.0 + e2) ** 2
        return sgn, u.apply(val, d1, d2)
    if isinstance(node, Num):
        if node.value == 0.0:
            raise WarpEvalError("warp factor vanishes", serialize(node))
        return float(np.sign(node.value)), HyperDual.constant(math.log(abs(node.value)))
    return _log_from_plain(node, r, s)
