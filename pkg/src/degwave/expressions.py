"""Closed-form expressions over a single variable.

Initial data, flux and coefficient functions are given as short strings such
as ``"2 + exp(-x**2)"`` or ``"bracket(x)**(-1)"``. The grammar is deliberately
small: numbers, the variable, ``+ - * / **``, ``exp`` and the Japanese
bracket ``bracket(z) = (1 + z**2)**(1/2)``. Parsing and symbolic
differentiation are delegated to sympy; anything outside the grammar is
rejected at parse time.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field
from tokenize import TokenError

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

_TRANSFORMS = standard_transformations + (convert_xor,)


class ExpressionError(ValueError):
    """Raised for expressions outside the supported grammar."""


def _bracket(z):
    return sp.sqrt(1 + z**2)


_OPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.BitXor, ast.UAdd, ast.USub)
_FUNCS = {"exp", "bracket"}


def _check_source(source: str, var: str) -> None:
    """Reject any syntax outside the grammar before sympy evaluates the text."""
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from exc
    names = {var, "e", "E", "pi"}
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Load) + _OPS):
            continue
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            continue
        if isinstance(node, ast.Name) and (node.id in names or node.id in _FUNCS):
            continue
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            continue
        raise ExpressionError(f"unsupported syntax {type(node).__name__} in {source!r}")


def _check_grammar(node: sp.Basic, var: sp.Symbol) -> None:
    if node.is_Number or node == var or node in (sp.E, sp.pi):
        return
    if node.is_Symbol:
        raise ExpressionError(f"unknown symbol {node!r}; only {var} is allowed")
    if isinstance(node, (sp.Add, sp.Mul, sp.Pow, sp.exp)):
        for arg in node.args:
            _check_grammar(arg, var)
        return
    raise ExpressionError(f"unsupported construct {type(node).__name__} in {node}")


@dataclass(frozen=True)
class Expression:
    """A parsed closed-form function of one variable.

    ``Expression.parse("bracket(x)**(-2)")`` builds the function; calling it on
    a numpy array evaluates it elementwise and ``derivative()`` returns a new
    ``Expression`` for the symbolic derivative.
    """

    source: str
    var: str = "x"
    _sym: sp.Expr = field(repr=False, compare=False, default=None)
    _fn: object = field(repr=False, compare=False, default=None)

    @classmethod
    def parse(cls, source, var: str = "x") -> "Expression":
        if isinstance(source, Expression):
            return source
        if isinstance(source, (int, float)):
            source = repr(float(source))
        symbol = sp.Symbol(var, real=True)
        _check_source(str(source), var)
        local = {var: symbol, "bracket": _bracket, "exp": sp.exp, "e": sp.E}
        try:
            sym = parse_expr(str(source), local_dict=local, transformations=_TRANSFORMS)
        except (SyntaxError, TypeError, TokenError) as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc}") from exc
        sym = sp.sympify(sym)
        _check_grammar(sym, symbol)
        return cls._from_sym(str(source), var, sym)

    @classmethod
    def _from_sym(cls, source: str, var: str, sym: sp.Expr) -> "Expression":
        symbol = sp.Symbol(var, real=True)
        fn = sp.lambdify(symbol, sym, modules="numpy")
        return cls(source=source, var=var, _sym=sym, _fn=fn)

    @property
    def sym(self) -> sp.Expr:
        return self._sym

    @property
    def is_constant(self) -> bool:
        return not self._sym.free_symbols

    def derivative(self, order: int = 1) -> "Expression":
        symbol = sp.Symbol(self.var, real=True)
        d = sp.diff(self._sym, symbol, order)
        return Expression._from_sym(f"d^{order}/d{self.var}^{order}[{self.source}]", self.var, d)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = self._fn(x)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()

    def __str__(self) -> str:
        return self.source
