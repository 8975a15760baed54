"""Small infix expression language for time/state dependent coefficients.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := number | name | name '(' args ')' | '(' expr ')'

``-x^2`` therefore parses as ``-(x^2)`` and ``2^-1`` is accepted.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "Expression",
    "parse",
    "evaluate",
    "differentiate",
    "FUNCTIONS",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.text = text


class ExprDomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, node: "Node | None" = None):
        where = f" in '{node}'" if node is not None else ""
        super().__init__(f"{message}{where}")
        self.node = node


# ---------------------------------------------------------------------------
# AST


class Node:
    __slots__ = ()
    precedence = 100

    def __str__(self) -> str:  # pragma: no cover - overridden
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Node):
    value: float
    precedence = 100

    def __str__(self) -> str:
        if self.value == math.pi:
            return "pi"
        text = repr(float(self.value))
        if text.endswith(".0"):
            text = text[:-2]
        return f"({text})" if self.value < 0 else text


@dataclass(frozen=True)
class Var(Node):
    name: str
    precedence = 100

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Neg(Node):
    arg: Node
    precedence = 3

    def __str__(self) -> str:
        return f"-{_wrap(self.arg, 3, strict=False)}"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    @property
    def precedence(self) -> int:  # type: ignore[override]
        return _BINARY_PREC[self.op]

    def __str__(self) -> str:
        p = self.precedence
        if self.op == "^":
            # right associative; a negated base must be parenthesised
            left = _wrap(self.left, p, strict=True)
            right = _wrap(self.right, 3, strict=False)
        else:
            left = _wrap(self.left, p, strict=False)
            right = _wrap(self.right, p, strict=True)
        return f"{left} {self.op} {right}" if p == 1 else f"{left}{self.op}{right}"


@dataclass(frozen=True)
class Call(Node):
    fn: str
    args: tuple[Node, ...]
    precedence = 100

    def __str__(self) -> str:
        return f"{self.fn}({', '.join(str(a) for a in self.args)})"


_BINARY_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _wrap(node: Node, prec: int, strict: bool) -> str:
    inner = node.precedence
    if isinstance(node, Const) and node.value < 0:
        return str(node)
    if inner < prec or (strict and inner == prec):
        return f"({node})"
    return str(node)


# function name -> (arity, scalar impl, numpy impl)
FUNCTIONS: dict[str, tuple[int, Callable, Callable]] = {
    "sin": (1, math.sin, np.sin),
    "cos": (1, math.cos, np.cos),
    "tan": (1, math.tan, np.tan),
    "exp": (1, math.exp, np.exp),
    "ln": (1, math.log, np.log),
    "sqrt": (1, math.sqrt, np.sqrt),
    "abs": (1, abs, np.abs),
    "tanh": (1, math.tanh, np.tanh),
    "atan": (1, math.atan, np.arctan),
}

CONSTANTS = {"pi": math.pi}

# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, env: Sequence[str]):
        self.text = text
        self.env = set(env)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind == "end":
            what = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", off, self.text)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", off, self.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(val, off)
            if val in self.env:
                return Var(val)
            if val in CONSTANTS:
                return Const(CONSTANTS[val])
            if val in FUNCTIONS:
                raise ExprSyntaxError(f"function {val!r} used without arguments", off, self.text)
            raise ExprSyntaxError(f"unknown identifier {val!r}", off, self.text)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", off, self.text)

    def call(self, name: str, off: int) -> Node:
        if name not in FUNCTIONS:
            raise ExprSyntaxError(f"unknown function {name!r}", off, self.text)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.take()
            args.append(self.expr())
        self.expect(")")
        arity = FUNCTIONS[name][0]
        if len(args) != arity:
            raise ExprSyntaxError(
                f"function {name!r} takes {arity} argument(s), got {len(args)}", off, self.text
            )
        return Call(name, tuple(args))


# ---------------------------------------------------------------------------
# Evaluation


def _eval_node(node: Node, b: Mapping[str, float]) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(b[node.name])
    if isinstance(node, Neg):
        return -_eval_node(node.arg, b)
    if isinstance(node, BinOp):
        x = _eval_node(node.left, b)
        y = _eval_node(node.right, b)
        op = node.op
        if op == "+":
            r = x + y
        elif op == "-":
            r = x - y
        elif op == "*":
            r = x * y
        elif op == "/":
            if y == 0.0:
                raise ExprDomainError("division by zero", node)
            r = x / y
        else:
            try:
                r = x**y
            except ZeroDivisionError:
                raise ExprDomainError("zero raised to a negative power", node) from None
            except OverflowError:
                raise ExprDomainError("overflow", node) from None
            if isinstance(r, complex):
                raise ExprDomainError("negative base with non-integer exponent", node)
    else:
        assert isinstance(node, Call)
        args = [_eval_node(a, b) for a in node.args]
        if node.fn == "ln" and args[0] <= 0.0:
            raise ExprDomainError("logarithm of a non-positive value", node)
        if node.fn == "sqrt" and args[0] < 0.0:
            raise ExprDomainError("square root of a negative value", node)
        try:
            r = FUNCTIONS[node.fn][1](*args)
        except (OverflowError, ValueError):
            raise ExprDomainError(f"{node.fn} out of domain", node) from None
    if not math.isfinite(r):
        raise ExprDomainError("non-finite result", node)
    return r


def _source(node: Node) -> str:
    """Python/numpy source for the vectorised evaluator."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"_v[{node.name!r}]"
    if isinstance(node, Neg):
        return f"(-{_source(node.arg)})"
    if isinstance(node, BinOp):
        op = "**" if node.op == "^" else node.op
        if op == "**":
            return f"_pow({_source(node.left)}, {_source(node.right)})"
        return f"({_source(node.left)} {op} {_source(node.right)})"
    assert isinstance(node, Call)
    return f"_f_{node.fn}({', '.join(_source(a) for a in node.args)})"


def _np_pow(x, y):
    return np.power(np.asarray(x, dtype=float), y)


_NP_NAMESPACE = {f"_f_{k}": v[2] for k, v in FUNCTIONS.items()}
_NP_NAMESPACE["_pow"] = _np_pow


class Expression:
    """Immutable parsed expression over a declared variable environment."""

    __slots__ = ("ast", "env", "_compiled")

    def __init__(self, ast: Node, env: Sequence[str]):
        self.ast = ast
        self.env = tuple(env)
        self._compiled = None

    def __repr__(self) -> str:
        return f"Expression({str(self)!r}, env={list(self.env)!r})"

    def __str__(self) -> str:
        return str(self.ast)

    @property
    def free_variables(self) -> frozenset[str]:
        return frozenset(_free(self.ast))

    @property
    def is_constant(self) -> bool:
        return not self.free_variables

    def __call__(self, **bindings: float) -> float:
        return evaluate(self, bindings)

    def vectorized(self) -> Callable[[Mapping[str, np.ndarray]], np.ndarray]:
        """Return a numpy evaluator ``f(bindings) -> array`` (broadcasting).

        Non-finite outputs raise :class:`ExprDomainError`; the offending node
        is located by re-evaluating the first bad point with the scalar path.
        """
        if self._compiled is None:
            code = compile(_source(self.ast), "<expr>", "eval")
            ns = dict(_NP_NAMESPACE)

            def run(_v, _code=code, _ns=ns):
                with np.errstate(all="ignore"):
                    return eval(_code, _ns, {"_v": _v})

            self._compiled = run
        run = self._compiled
        ast = self.ast

        def f(bindings: Mapping[str, np.ndarray]) -> np.ndarray:
            out = np.asarray(run(bindings), dtype=float)
            if not np.all(np.isfinite(out)):
                shape = np.broadcast_shapes(*(np.shape(v) for v in bindings.values()), out.shape)
                out_b = np.broadcast_to(out, shape)
                idx = np.unravel_index(np.flatnonzero(~np.isfinite(out_b))[0], shape)
                point = {k: float(np.broadcast_to(v, shape)[idx]) for k, v in bindings.items()}
                _eval_node(ast, point)  # raises with the node
                raise ExprDomainError("non-finite result", ast)
            return out

        return f


def _free(node: Node):
    if isinstance(node, Var):
        yield node.name
    elif isinstance(node, Neg):
        yield from _free(node.arg)
    elif isinstance(node, BinOp):
        yield from _free(node.left)
        yield from _free(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from _free(a)


def parse(text: str, env: Sequence[str] = ("t",)) -> Expression:
    """Parse ``text``; every identifier must be in ``env``, a function or ``pi``."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text if isinstance(text, str) else "")
    return Expression(_Parser(text, env).parse(), env)


def evaluate(e: Expression, bindings: Mapping[str, float]) -> float:
    missing = e.free_variables - set(bindings)
    if missing:
        raise ExprError(f"unbound variable(s): {', '.join(sorted(missing))}")
    return _eval_node(e.ast, bindings)


# ---------------------------------------------------------------------------
# Symbolic differentiation (with constant folding only, no general CAS)

ZERO = Const(0.0)
ONE = Const(1.0)


def _is(node: Node, value: float) -> bool:
    return isinstance(node, Const) and node.value == value


def _add(a: Node, b: Node) -> Node:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(b, Neg):
        return _sub(a, b.arg)
    return BinOp("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def _neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Node, b: Node) -> Node:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return _neg(b)
    if _is(b, -1.0):
        return _neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return BinOp("/", a, b)


def _pow(a: Node, b: Node) -> Node:
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def _d(node: Node, var: str) -> Node:
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return _neg(_d(node.arg, var))
    if isinstance(node, BinOp):
        u, v = node.left, node.right
        du, dv = _d(u, var), _d(v, var)
        if node.op == "+":
            return _add(du, dv)
        if node.op == "-":
            return _sub(du, dv)
        if node.op == "*":
            return _add(_mul(du, v), _mul(u, dv))
        if node.op == "/":
            return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, Const(2.0)))
        # power
        if var not in set(_free(v)):
            return _mul(_mul(v, _pow(u, _sub(v, ONE))), du)
        # u^v * (v' ln u + v u'/u)
        return _mul(node, _add(_mul(dv, Call("ln", (u,))), _div(_mul(v, du), u)))
    assert isinstance(node, Call)
    (u,) = node.args
    du = _d(u, var)
    if _is(du, 0.0):
        return ZERO
    fn = node.fn
    if fn == "sin":
        outer = Call("cos", (u,))
    elif fn == "cos":
        outer = _neg(Call("sin", (u,)))
    elif fn == "tan":
        outer = _add(ONE, _pow(Call("tan", (u,)), Const(2.0)))
    elif fn == "exp":
        outer = node
    elif fn == "ln":
        return _div(du, u)
    elif fn == "sqrt":
        return _div(du, _mul(Const(2.0), node))
    elif fn == "abs":
        outer = _div(u, node)
    elif fn == "tanh":
        outer = _sub(ONE, _pow(node, Const(2.0)))
    elif fn == "atan":
        return _div(du, _add(ONE, _pow(u, Const(2.0))))
    else:  # pragma: no cover - table and rules kept in sync
        raise ExprError(f"no derivative rule for {fn!r}")
    return _mul(outer, du)


def differentiate(e: Expression, var: str) -> Expression:
    if var not in e.env:
        raise ExprError(f"variable {var!r} is not declared in {list(e.env)!r}")
    return Expression(_d(e.ast, var), e.env)
