"""Small vectorized expression language for predictors, eligibility and bounds.

Expressions are Python-syntax strings evaluated column-wise over numpy
arrays, for example ``"female == 1 and interrupt == 1"``,
``"min(65, age)"`` or ``"log1p(Y5 + Y6)"``. Only arithmetic, comparisons,
boolean connectives, membership in literal lists and a fixed set of
functions are accepted; anything else is rejected when parsed.

Spell templates use ``{h}``, ``{h-1}``, ``{h+1}`` placeholders, rendered with
:func:`render` before parsing.
"""

from __future__ import annotations

import ast
import re
from functools import lru_cache

import numpy as np

_TEMPLATE = re.compile(r"\{h([+-]\d+)?\}")


def render(template: str, h: int) -> str:
    """Substitute the spell index into ``{h}``-style placeholders."""
    return _TEMPLATE.sub(lambda m: str(h + int(m.group(1) or 0)), template)


def _elementwise(reducer):
    def fn(*args):
        out = np.asarray(args[0], float)
        for a in args[1:]:
            out = reducer(out, np.asarray(a, float))
        return out

    return fn


FUNCTIONS = {
    "min": _elementwise(np.minimum),
    "max": _elementwise(np.maximum),
    "abs": np.abs,
    "log": np.log,
    "log1p": np.log1p,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "where": np.where,
}
# evaluated by the caller, with identifier arguments passed as strings
RAW_FUNCTIONS = frozenset({"seqmean"})
CONSTANTS = {"inf": np.inf, "True": True, "False": False}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.true_divide,
    ast.Pow: np.power,
    ast.Mod: np.mod,
    ast.FloorDiv: np.floor_divide,
}
_CMPOPS = {
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
}


class ExpressionError(ValueError):
    pass


@lru_cache(maxsize=None)
def parse(text: str) -> "Expression":
    return Expression(text)


class Expression:
    """A parsed, validated expression.

    ``raw_functions`` names callables (for example ``seqmean``) that receive
    their arguments as identifier strings rather than evaluated arrays.
    """

    def __init__(self, text: str):
        self.text = str(text).strip()
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {self.text!r}: {exc.msg}") from None
        self._tree = tree.body
        self.names = set()
        self.calls = set()
        self._check(self._tree)

    def __repr__(self):
        return f"Expression({self.text!r})"

    @property
    def is_name(self) -> bool:
        return isinstance(self._tree, ast.Name) and self._tree.id not in CONSTANTS

    def _check(self, node):
        if isinstance(node, ast.Name):
            if node.id not in CONSTANTS:
                self.names.add(node.id)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float, str, bool)):
                raise ExpressionError(f"unsupported literal in {self.text!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"unsupported operator in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd, ast.Not)):
                raise ExpressionError(f"unsupported operator in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.BoolOp):
            for v in node.values:
                self._check(v)
        elif isinstance(node, ast.Compare):
            self._check(node.left)
            for op, comp in zip(node.ops, node.comparators):
                if isinstance(op, (ast.In, ast.NotIn)):
                    if not isinstance(comp, (ast.List, ast.Tuple)) or not all(
                        isinstance(e, ast.Constant) for e in comp.elts
                    ):
                        raise ExpressionError(f"'in' needs a literal list in {self.text!r}")
                elif type(op) in _CMPOPS:
                    self._check(comp)
                else:
                    raise ExpressionError(f"unsupported comparison in {self.text!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.keywords:
                raise ExpressionError(f"unsupported call in {self.text!r}")
            if node.func.id not in FUNCTIONS and node.func.id not in RAW_FUNCTIONS:
                raise ExpressionError(f"unknown function {node.func.id!r} in {self.text!r}")
            self.calls.add(node.func.id)
            for a in node.args:
                if isinstance(a, ast.Name) and node.func.id not in FUNCTIONS:
                    self.names.add("@" + node.func.id + ":" + a.id)
                else:
                    self._check(a)
        elif isinstance(node, ast.IfExp):
            raise ExpressionError(f"use where(cond, a, b) instead of if/else in {self.text!r}")
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def evaluate(self, env, n: int, raw_functions=None):
        """Evaluate over columns ``env`` (name -> array), returning ``n`` values."""
        raw_functions = raw_functions or {}
        out = _Evaluator(env, raw_functions, self.text).visit(self._tree)
        out = np.asarray(out)
        if out.ndim == 0:
            out = np.full(n, out.item())
        if out.shape != (n,):
            raise ExpressionError(f"expression {self.text!r} has shape {out.shape}, expected ({n},)")
        return out


class _Evaluator:
    def __init__(self, env, raw_functions, text):
        self.env = env
        self.raw = raw_functions
        self.text = text

    def visit(self, node):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            try:
                return self.env[node.id]
            except KeyError:
                raise ExpressionError(f"unknown column {node.id!r} in {self.text!r}") from None
        if isinstance(node, ast.BinOp):
            with np.errstate(divide="ignore", invalid="ignore"):
                return _BINOPS[type(node.op)](self._num(node.left), self._num(node.right))
        if isinstance(node, ast.UnaryOp):
            v = self.visit(node.operand)
            if isinstance(node.op, ast.Not):
                return np.logical_not(v)
            v = np.asarray(v, float)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BoolOp):
            fn = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
            out = self.visit(node.values[0])
            for v in node.values[1:]:
                out = fn(out, self.visit(v))
            return out
        if isinstance(node, ast.Compare):
            left = self.visit(node.left)
            result = True
            for op, comp in zip(node.ops, node.comparators):
                if isinstance(op, (ast.In, ast.NotIn)):
                    options = [e.value for e in comp.elts]
                    hit = np.isin(np.asarray(left), options)
                    result = np.logical_and(result, hit if isinstance(op, ast.In) else ~hit)
                    continue
                right = self.visit(comp)
                with np.errstate(invalid="ignore"):
                    result = np.logical_and(result, _CMPOPS[type(op)](left, right))
                left = right
            return result
        if isinstance(node, ast.Call):
            name = node.func.id
            if name in self.raw:
                args = [a.id if isinstance(a, ast.Name) else self.visit(a) for a in node.args]
                return self.raw[name](*args)
            if name not in FUNCTIONS:
                raise ExpressionError(f"unknown function {name!r} in {self.text!r}")
            with np.errstate(divide="ignore", invalid="ignore"):
                return FUNCTIONS[name](*[self.visit(a) for a in node.args])
        raise ExpressionError(f"cannot evaluate {self.text!r}")

    def _num(self, node):
        v = self.visit(node)
        return v if isinstance(v, (int, float, bool)) else np.asarray(v, float)
