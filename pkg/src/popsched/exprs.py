"""Arithmetic rate expressions and boolean goal predicates over named variables.

Expressions arrive as infix strings in model files.  They are validated
against a whitelist of syntax nodes (so model files cannot execute arbitrary
code), canonicalized through ``ast.unparse``, and compiled to plain Python
functions of a state vector for fast repeated evaluation.
"""

from __future__ import annotations

import ast
import math
from functools import lru_cache
from typing import Callable, Mapping, Sequence


class ExpressionError(ValueError):
    """Malformed, unsafe, or out-of-vocabulary expression."""


_ARITH_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)
_ARITH_UNARY = (ast.USub, ast.UAdd)
_CMP_OPS = (ast.Eq, ast.NotEq, ast.Lt, ast.LtE, ast.Gt, ast.GtE)
_BOOL_OPS = (ast.And, ast.Or)


def _parse_tree(text: str) -> ast.Expression:
    try:
        return ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(
            f"syntax error in expression {text!r} at offset {exc.offset}: {exc.msg}"
        ) from None


def _check_arith(node: ast.AST, names: frozenset[str], text: str) -> None:
    if isinstance(node, ast.Expression):
        _check_arith(node.body, names, text)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _ARITH_BINOPS):
            raise ExpressionError(f"operator not allowed in {text!r} (use + - * /)")
        _check_arith(node.left, names, text)
        _check_arith(node.right, names, text)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _ARITH_UNARY):
            raise ExpressionError(f"operator not allowed in {text!r}")
        _check_arith(node.operand, names, text)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"non-numeric constant in {text!r}")
        if node.value < 0 or not math.isfinite(node.value):
            raise ExpressionError(f"constants must be finite and >= 0 in {text!r}")
    elif isinstance(node, ast.Name):
        if node.id not in names:
            raise ExpressionError(
                f"unknown name {node.id!r} in {text!r} (col {node.col_offset})"
            )
    else:
        raise ExpressionError(
            f"construct {type(node).__name__} not allowed in {text!r}"
        )


def _check_predicate(node: ast.AST, names: frozenset[str], text: str) -> None:
    if isinstance(node, ast.Expression):
        _check_predicate(node.body, names, text)
    elif isinstance(node, ast.BoolOp):
        if not isinstance(node.op, _BOOL_OPS):
            raise ExpressionError(f"operator not allowed in {text!r}")
        for value in node.values:
            _check_predicate(value, names, text)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
        _check_predicate(node.operand, names, text)
    elif isinstance(node, ast.Compare):
        for op in node.ops:
            if not isinstance(op, _CMP_OPS):
                raise ExpressionError(f"comparison not allowed in {text!r}")
        _check_arith(node.left, names, text)
        for comparator in node.comparators:
            _check_arith(comparator, names, text)
    else:
        raise ExpressionError(f"{text!r} is not a boolean predicate")


def parse_arith(text: str, names: Sequence[str]) -> str:
    """Validate an arithmetic expression and return its canonical rendering."""
    tree = _parse_tree(text)
    _check_arith(tree, frozenset(names), text)
    return ast.unparse(tree)


def parse_predicate(text: str, names: Sequence[str]) -> str:
    """Validate a boolean predicate (comparisons joined by and/or/not)."""
    tree = _parse_tree(text)
    _check_predicate(tree, frozenset(names), text)
    return ast.unparse(tree)


def _build_fn(source: str, variables: tuple[str, ...],
              constants: tuple[tuple[str, float], ...]) -> Callable:
    # Names become either positional lookups into the state vector or
    # bound constant defaults; the source was whitelisted at parse time.
    tree = _parse_tree(source)
    index = {name: i for i, name in enumerate(variables)}

    class _Rewrite(ast.NodeTransformer):
        def visit_Name(self, node: ast.Name) -> ast.AST:
            if node.id in index:
                return ast.Subscript(
                    value=ast.Name(id="_s", ctx=ast.Load()),
                    slice=ast.Constant(value=index[node.id]),
                    ctx=ast.Load(),
                )
            return node

    body = ast.fix_missing_locations(_Rewrite().visit(tree)).body
    args = [ast.arg(arg="_s")]
    defaults: list[ast.expr] = []
    for name, value in constants:
        args.append(ast.arg(arg=name))
        defaults.append(ast.Constant(value=value))
    fn = ast.Expression(
        body=ast.Lambda(
            args=ast.arguments(
                posonlyargs=[], args=args, vararg=None, kwonlyargs=[],
                kw_defaults=[], kwarg=None, defaults=defaults,
            ),
            body=body,
        )
    )
    code = compile(ast.fix_missing_locations(fn), "<popsched-expr>", "eval")
    return eval(code, {"__builtins__": {}})  # noqa: S307 - whitelisted AST


@lru_cache(maxsize=4096)
def compile_arith(source: str, variables: tuple[str, ...],
                  constants: tuple[tuple[str, float], ...]) -> Callable[[Sequence[float]], float]:
    """Compile a canonical arithmetic expression to a function of a state vector.

    ``constants`` binds parameter names to fixed values.  Cached by content,
    so equal models share compiled evaluators across processes-local calls.
    """
    return _build_fn(source, variables, constants)


@lru_cache(maxsize=4096)
def compile_predicate(source: str, variables: tuple[str, ...],
                      constants: tuple[tuple[str, float], ...] = ()) -> Callable[[Sequence[float]], bool]:
    fn = _build_fn(source, variables, constants)
    return lambda state: bool(fn(state))


def constant_items(constants: Mapping[str, float]) -> tuple[tuple[str, float], ...]:
    """Stable, hashable view of a constants mapping for the compile caches."""
    return tuple(sorted(constants.items()))
