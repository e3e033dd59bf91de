"""Small arithmetic expression language for user-defined maps and weights.

Expressions are single-variable formulas in ``x`` using ``+ - * / **``,
numeric literals, ``pi``, ``e`` and a handful of functions.  Parsing goes
through :mod:`ast` with a node whitelist; derivatives are computed in
forward mode by evaluating on dual numbers.
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ValidationError

_CONSTANTS = {"pi": math.pi, "e": math.e}


class Dual:
    """Value/derivative pair; arrays welcome in either slot."""

    __slots__ = ("v", "d")

    def __init__(self, v, d=0.0):
        self.v = v
        self.d = d

    def __add__(self, o):
        o = _lift(o)
        return Dual(self.v + o.v, self.d + o.d)

    __radd__ = __add__

    def __sub__(self, o):
        o = _lift(o)
        return Dual(self.v - o.v, self.d - o.d)

    def __rsub__(self, o):
        return _lift(o) - self

    def __mul__(self, o):
        o = _lift(o)
        return Dual(self.v * o.v, self.d * o.v + self.v * o.d)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = _lift(o)
        return Dual(self.v / o.v, (self.d * o.v - self.v * o.d) / (o.v * o.v))

    def __rtruediv__(self, o):
        return _lift(o) / self

    def __neg__(self):
        return Dual(-self.v, -self.d)

    def __pos__(self):
        return self

    def __pow__(self, o):
        o = _lift(o)
        if np.all(np.asarray(o.d) == 0):
            p = o.v
            return Dual(self.v**p, p * self.v ** (p - 1) * self.d)
        val = self.v**o.v
        return Dual(val, val * (o.d * np.log(self.v) + o.v * self.d / self.v))

    def __rpow__(self, o):
        return _lift(o) ** self


def _lift(o):
    return o if isinstance(o, Dual) else Dual(o, 0.0)


def _fn(f, df):
    def apply(u):
        if isinstance(u, Dual):
            return Dual(f(u.v), df(u.v) * u.d)
        return f(u)

    return apply


_FUNCTIONS = {
    "exp": _fn(np.exp, np.exp),
    "log": _fn(np.log, lambda v: 1.0 / v),
    "sqrt": _fn(np.sqrt, lambda v: 0.5 / np.sqrt(v)),
    "sin": _fn(np.sin, np.cos),
    "cos": _fn(np.cos, lambda v: -np.sin(v)),
    "abs": _fn(np.abs, np.sign),
}

_NAMESPACE = {
    **_CONSTANTS,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin, "cos": np.cos, "abs": np.abs,
}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


class Expression:
    """A parsed formula in ``x``; callable on floats or numpy arrays."""

    def __init__(self, source: str):
        self.source = str(source).strip().replace("^", "**")
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ValidationError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body
        self._code = compile(tree, "<expression>", "eval")

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ValidationError(f"operator {type(node.op).__name__} not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ValidationError(f"unary operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ValidationError(f"literal {node.value!r} not allowed")
        elif isinstance(node, ast.Name):
            if node.id != "x" and node.id not in _CONSTANTS:
                raise ValidationError(f"unknown name {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ValidationError(f"function not allowed in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ValidationError("functions take exactly one argument")
            self._check(node.args[0])
        else:
            raise ValidationError(f"syntax {type(node).__name__} not allowed in {self.source!r}")

    def _eval(self, node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return x if node.id == "x" else _CONSTANTS[node.id]
        return _FUNCTIONS[node.func.id](self._eval(node.args[0], x))

    @property
    def is_constant(self):
        return not any(isinstance(n, ast.Name) and n.id == "x" for n in ast.walk(self._tree))

    def __call__(self, x):
        # the AST whitelist above makes evaluating the compiled code safe
        out = eval(self._code, {"__builtins__": {}}, {**_NAMESPACE, "x": x})
        if np.ndim(x) and np.ndim(out) == 0:
            out = np.full(np.shape(x), out, dtype=float)
        return out

    def derivative(self, x):
        out = self._eval(self._tree, Dual(x, np.ones_like(x, dtype=float)))
        d = out.d if isinstance(out, Dual) else 0.0
        if np.ndim(x) and np.ndim(d) == 0:
            d = np.full(np.shape(x), d, dtype=float)
        return d

    def __repr__(self):
        return f"Expression({self.source!r})"


def number(value) -> float:
    """Coerce a config value (number or constant expression string) to float."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    ex = Expression(value)
    if not ex.is_constant:
        raise ValidationError(f"expected a constant, got {value!r}")
    return float(ex(0.0))
