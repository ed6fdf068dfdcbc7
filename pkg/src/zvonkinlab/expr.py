"""A small arithmetic grammar for coefficient expressions.

Supported: numbers, ``+ - * /``, powers ``**`` or ``^``, unary minus, parentheses,
the functions ``sin cos exp abs`` and ``indicator(v, lo, hi)`` (1 where
``lo <= v <= hi``, else 0), the variables ``t``, ``x`` (the first coordinate),
``x1``, ``x2`` and the constants ``pi``, ``e`` plus any caller-supplied names
(for example the horizon ``T``).  Anything else is rejected with the column
where it occurs.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
CONSTANTS = {"pi": np.pi, "e": np.e}
BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}


class ExpressionError(ValueError):
    """Parse or validation failure; ``position`` is a 1-based column in the original text."""

    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position} in {text!r}")
        self.text = text
        self.position = position


def _translate(text: str) -> tuple[str, list[int]]:
    """Replace ``^`` by ``**`` and keep a map from new to original columns."""
    out, where = [], []
    for i, ch in enumerate(text):
        if ch == "^":
            out.append("**")
            where.extend([i, i])
        else:
            out.append(ch)
            where.append(i)
    where.append(len(text))
    return "".join(out), where


@dataclass(frozen=True, eq=False)
class Expression:
    """Compiled expression; call as ``expr(t, x)`` with ``x`` of shape ``(..., d)``."""

    text: str
    tree: ast.AST
    names: frozenset
    constants: dict = field(default_factory=dict)

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        env = dict(CONSTANTS)
        env.update(self.constants)
        env["t"] = t
        env["x"] = x[..., 0]
        env["x1"] = x[..., 0]
        if x.shape[-1] > 1:
            env["x2"] = x[..., 1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = _eval(self.tree, env)
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape[:-1]).copy()


def parse(text: str, dim: int = 1, constants: dict | None = None) -> Expression:
    """Compile ``text`` into an :class:`Expression`.

    Raises
    ------
    ExpressionError
        On syntax errors, unknown identifiers or functions, wrong argument
        counts, or ``x2`` used in one dimension.
    """
    if not isinstance(text, str):
        text = repr(text)
    src, where = _translate(text)
    lead = len(src) - len(src.lstrip())
    where = where[lead:]
    try:
        tree = ast.parse(src.lstrip(), mode="eval")
    except SyntaxError as err:
        col = (err.offset or 1) - 1
        raise ExpressionError(f"syntax error ({err.msg})", text, where[min(col, len(where) - 1)] + 1) from None
    constants = dict(constants or {})
    allowed = {"t", "x", "x1"} | set(CONSTANTS) | set(constants)
    if dim >= 2:
        allowed.add("x2")
    names = set()

    def pos(node):
        return where[min(getattr(node, "col_offset", 0), len(where) - 1)] + 1

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError("only numeric literals are allowed", text, pos(node))
            return
        if isinstance(node, ast.Name):
            if node.id not in allowed:
                raise ExpressionError(f"unknown identifier {node.id!r}", text, pos(node))
            names.add(node.id)
            return
        if isinstance(node, ast.BinOp):
            if type(node.op) not in BINOPS:
                raise ExpressionError("unsupported operator", text, pos(node))
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError("unsupported unary operator", text, pos(node))
            check(node.operand)
            return
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name):
                raise ExpressionError("unsupported call", text, pos(node))
            fname = node.func.id
            if node.keywords:
                raise ExpressionError("keyword arguments are not supported", text, pos(node))
            if fname == "indicator":
                if len(node.args) != 3:
                    raise ExpressionError("indicator takes (value, lo, hi)", text, pos(node))
            elif fname in FUNCTIONS:
                if len(node.args) != 1:
                    raise ExpressionError(f"{fname} takes one argument", text, pos(node))
            else:
                raise ExpressionError(f"unknown function {fname!r}", text, pos(node))
            for a in node.args:
                check(a)
            return
        raise ExpressionError(f"unsupported syntax {type(node).__name__}", text, pos(node))

    check(tree)
    return Expression(text, tree, frozenset(names), constants)


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.BinOp):
        left, right = _eval(node.left, env), _eval(node.right, env)
        if isinstance(node.op, ast.Pow):
            left = np.asarray(left, dtype=float)
        return BINOPS[type(node.op)](left, right)
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    fname = node.func.id
    args = [_eval(a, env) for a in node.args]
    if fname == "indicator":
        v, lo, hi = args
        return ((v >= lo) & (v <= hi)).astype(float) if np.ndim(v) else float(lo <= v <= hi)
    return FUNCTIONS[fname](args[0])
