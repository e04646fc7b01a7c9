"""A tiny real-valued expression language in one variable ``t``.

Supported: numbers, ``t``, ``pi``, ``e``, the operators + - * / ** (and ^ as
a power), unary minus, and the functions exp, sin, cos, abs. Parsing goes
through :mod:`ast` with a whitelist; nothing is ever passed to ``eval``.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Callable

from .errors import SpecError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "sin": math.sin,
    "cos": math.cos,
    "abs": abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Expression:
    """A parsed expression; call it with a float value of ``t``."""

    source: str
    _fn: Callable[[float], float] = field(repr=False, compare=False)

    def __call__(self, t: float) -> float:
        try:
            return self._fn(float(t))
        except (ArithmeticError, ValueError):
            return math.nan

    def __str__(self) -> str:
        return self.source


def _compile(node: ast.AST, source: str) -> Callable[[float], float]:
    if isinstance(node, ast.Expression):
        return _compile(node.body, source)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda t: value
    if isinstance(node, ast.Name):
        if node.id == "t":
            return lambda t: t
        if node.id in _CONSTS:
            value = _CONSTS[node.id]
            return lambda t: value
        raise _error(source, node, f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _compile(node.left, source), _compile(node.right, source)
        return lambda t: op(left(t), right(t))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        inner = _compile(node.operand, source)
        return lambda t: op(inner(t))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        fn = _FUNCS.get(node.func.id)
        if fn is None:
            raise _error(source, node, f"unknown function {node.func.id!r}")
        if len(node.args) != 1:
            raise _error(source, node, f"{node.func.id} takes exactly one argument")
        arg = _compile(node.args[0], source)
        return lambda t: fn(arg(t))
    raise _error(source, node, f"unsupported syntax {type(node).__name__}")


def _error(source: str, node: ast.AST, msg: str) -> SpecError:
    col = getattr(node, "col_offset", 0) + 1
    return SpecError(f"expression {source!r}, column {col}: {msg}")


def parse_expression(source: str | int | float) -> Expression:
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        source = repr(float(source))
    if not isinstance(source, str):
        raise SpecError(f"expression must be a string or number; got {type(source).__name__}")
    text = source.replace("^", "**")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise SpecError(f"expression {source!r}, column {exc.offset or 0}: syntax error") from None
    return Expression(source, _compile(tree, source))
