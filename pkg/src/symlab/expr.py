"""Tiny arithmetic expression language for configuration files.

Grammar: numbers, named variables, ``+ - * /`` (and unary minus), parentheses,
calls to ``sin``, ``cos``, ``exp``, and the constants ``pi`` and ``e``.
Expressions are parsed with :mod:`ast` and evaluated vectorised over numpy arrays.
"""

from __future__ import annotations

import ast

import numpy as np


class ExprError(ValueError):
    """Expression outside the supported grammar."""


_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": np.pi, "e": np.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


class Expression:
    """Compiled expression; call with keyword arrays for its variables."""

    def __init__(self, source: str, variables=()):
        if not isinstance(source, str):
            source = repr(source)
        self.source = source
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExprError(f"cannot parse {source!r}: {exc.msg} (column {exc.offset})") from None
        self.variables = tuple(variables)
        self._tree = tree.body
        self._check(self._tree)

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExprError(f"unsupported literal {node.value!r} in {self.source!r}")
        elif isinstance(node, ast.Name):
            if node.id not in _CONSTS and node.id not in self.variables:
                raise ExprError(f"unknown name {node.id!r} in {self.source!r}; allowed variables: {', '.join(self.variables) or 'none'}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExprError(f"operator {type(node.op).__name__} not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ExprError(f"unary operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or len(node.args) != 1 or node.keywords:
                raise ExprError(f"only sin(.), cos(.), exp(.) calls are allowed in {self.source!r}")
            self._check(node.args[0])
        else:
            raise ExprError(f"construct {type(node).__name__} not allowed in {self.source!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return _CONSTS[node.id] if node.id in _CONSTS else env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        return _FUNCS[node.func.id](self._eval(node.args[0], env))

    def __call__(self, **env):
        missing = [v for v in self.variables if v not in env]
        if missing:
            raise ExprError(f"missing values for {missing}")
        with np.errstate(divide="raise", invalid="raise"):
            try:
                return self._eval(self._tree, {k: np.asarray(v, dtype=float) for k, v in env.items()})
            except FloatingPointError as exc:
                raise ExprError(f"{self.source!r}: {exc}") from None


def compile_expr(source, variables=()) -> Expression:
    return Expression(source, variables)


def point_function(source, d: int):
    """Callable on points ``(m, d)`` with variables ``x`` (1-D) or ``x, y`` (2-D)."""
    names = ("x",) if d == 1 else ("x", "y")
    e = Expression(source, names)

    def fn(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, d)
        out = e(**{k: pts[:, i] for i, k in enumerate(names)})
        return np.broadcast_to(out, (pts.shape[0],)).astype(float)

    return fn


def matrix_function(entries, d: int):
    """Callable on points returning ``(m, d, d)`` from a nested list of expressions."""
    rows = [[point_function(src, d) for src in row] for row in entries]
    if len(rows) != d or any(len(r) != d for r in rows):
        raise ExprError(f"metric entries must be a {d}x{d} list")

    def fn(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, d)
        return np.stack([np.stack([f(pts) for f in row], axis=-1) for row in rows], axis=-2)

    return fn


def direction_function(source, d: int):
    """Callable on unit directions: variable ``s`` in 1-D, ``theta`` (angle) in 2-D."""
    if d == 1:
        e = Expression(source, ("s",))
        return lambda s: np.broadcast_to(e(s=np.asarray(s).reshape(-1, 1)[:, 0]), (np.asarray(s).reshape(-1, 1).shape[0],)).astype(float)
    e = Expression(source, ("theta",))

    def fn(s):
        s = np.asarray(s, dtype=float).reshape(-1, 2)
        return np.broadcast_to(e(theta=np.arctan2(s[:, 1], s[:, 0])), (s.shape[0],)).astype(float)

    return fn
