"""Feature expressions: arithmetic over alias layers plus wildcard
aggregate calls, e.g. ``ndvi:(nir-red)/(nir+red)`` or ``clay:MEAN(clay*)``.

Grammar (left-associative, standard precedence; '*' is the only glob
wildcard):

    feature := name (':' | '=') expr
    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := NUMBER | IDENT | AGG '(' glob ')' | '(' expr ')' | '-' factor
    AGG     := MEAN | SUM | MIN | MAX

Division by zero and any non-finite intermediate yield nodata at that
pixel. Nodata propagates conjunctively through operators; aggregates
reduce over valid members only and are nodata when every member is.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DslError, GridMismatchError, UnknownAliasError
from .raster import Band, CONTINUOUS, FeatureStack

AGG_FUNCS = ("MEAN", "SUM", "MIN", "MAX")

_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_GLOB_RE = re.compile(r"[A-Za-z0-9_*]+")


# -- expression tree ---------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Agg:
    func: str
    pattern: str


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    expr: object
    text: str = ""

    def canonical(self) -> str:
        return f"{self.name}:{print_expr(self.expr)}"


def _prec(node) -> int:
    if isinstance(node, BinOp):
        return 1 if node.op in "+-" else 2
    if isinstance(node, Neg):
        return 3
    return 4


def print_expr(node) -> str:
    """Minimal-parentheses form that re-parses to the identical tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Ref):
        return node.name
    if isinstance(node, Agg):
        return f"{node.func}({node.pattern})"
    if isinstance(node, Neg):
        inner = print_expr(node.operand)
        if _prec(node.operand) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        lhs = print_expr(node.left)
        rhs = print_expr(node.right)
        if _prec(node.left) < _prec(node):
            lhs = f"({lhs})"
        # Right operand needs parens at equal precedence: '-' and '/' are
        # left-associative, so a-(b-c) must keep its parentheses.
        if _prec(node.right) <= _prec(node):
            rhs = f"({rhs})"
        return f"{lhs}{node.op}{rhs}"
    raise TypeError(f"not an expression node: {node!r}")


# -- parser -------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, base: int):
        self.text = text
        self.pos = 0
        self.base = base  # offset of text within the original feature string

    def error(self, message: str, at: int | None = None):
        offset = self.base + (self.pos if at is None else at)
        raise DslError(message, offset=offset)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def parse(self):
        node = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected trailing input {self.text[self.pos:]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() in ("*", "/"):
            op = self.text[self.pos]
            self.pos += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        ch = self.peek()
        if ch == "":
            self.error("unexpected end of expression")
        if ch == "(":
            self.pos += 1
            node = self.expr()
            self.take(")")
            return node
        if ch == "-":
            self.pos += 1
            return Neg(self.factor())
        if ch.isdigit() or ch == ".":
            m = _NUMBER_RE.match(self.text, self.pos)
            if not m:
                self.error("malformed number")
            self.pos = m.end()
            return Num(float(m.group()))
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            self.error(f"unexpected character {ch!r}")
        name = m.group()
        self.pos = m.end()
        if name.upper() in AGG_FUNCS and self.peek() == "(":
            func = name.upper()
            self.take("(")
            self.skip_ws()
            g = _GLOB_RE.match(self.text, self.pos)
            if not g:
                self.error(f"expected a glob pattern inside {func}(...)")
            pattern = g.group()
            self.pos = g.end()
            self.take(")")
            return Agg(func, pattern)
        return Ref(name)


def _glob_matches(pattern: str, names) -> list[str]:
    regex = re.compile(".*".join(re.escape(p) for p in pattern.split("*")) + r"\Z")
    return sorted(n for n in names if regex.fullmatch(n))


def _walk(node):
    yield node
    if isinstance(node, Neg):
        yield from _walk(node.operand)
    elif isinstance(node, BinOp):
        yield from _walk(node.left)
        yield from _walk(node.right)


def feature_name(text: str) -> str:
    """The name part of a feature string, without parsing the expression."""
    if not isinstance(text, str):
        raise DslError("feature must be a string", offset=0)
    for i, ch in enumerate(text):
        if ch in ":=":
            name = text[:i].strip()
            if not _IDENT_RE.fullmatch(name):
                raise DslError(f"bad feature name {name!r}", offset=0)
            return name
    raise DslError("feature needs a 'name:expression' separator (':' or '=')", offset=0)


def parse_feature(text: str, known_aliases) -> FeatureSpec:
    """Parse ``name:expr`` (or ``name=expr``) and resolve every alias
    reference and glob against ``known_aliases``."""
    if not isinstance(text, str):
        raise DslError("feature must be a string", offset=0)
    known = set(known_aliases)
    sep = None
    for i, ch in enumerate(text):
        if ch in ":=":
            sep = i
            break
    if sep is None:
        raise DslError("feature needs a 'name:expression' separator (':' or '=')", offset=0)
    name = text[:sep].strip()
    if not _IDENT_RE.fullmatch(name):
        raise DslError(f"bad feature name {name!r}: must match [A-Za-z][A-Za-z0-9_]*", offset=0)
    if name in known:
        raise DslError(f"feature name {name!r} collides with an alias name", offset=0)
    body = text[sep + 1 :]
    if not body.strip():
        raise DslError("empty feature expression", offset=sep + 1)
    tree = _Parser(body, sep + 1).parse()

    for node in _walk(tree):
        if isinstance(node, Ref) and node.name not in known:
            raise UnknownAliasError(f"unknown alias {node.name!r} in feature {name!r}")
        if isinstance(node, Agg) and not _glob_matches(node.pattern, known):
            raise DslError(f"glob {node.pattern!r} matches no alias")
    return FeatureSpec(name=name, expr=tree, text=text)


# -- evaluation ---------------------------------------------------------------


def _reduce_members(func: str, arrays: np.ndarray, masks: np.ndarray):
    """Per-pixel reduction over member axis 0, valid members only."""
    count = masks.sum(axis=0)
    any_valid = count > 0
    if func == "SUM":
        out = np.where(masks, arrays, 0.0).sum(axis=0)
    elif func == "MEAN":
        out = np.where(masks, arrays, 0.0).sum(axis=0) / np.maximum(count, 1)
    elif func == "MIN":
        out = np.where(masks, arrays, np.inf).min(axis=0)
    elif func == "MAX":
        out = np.where(masks, arrays, -np.inf).max(axis=0)
    else:
        raise ValueError(f"unknown aggregate {func}")
    return np.where(any_valid, out, 0.0), any_valid


def _eval(node, layers: dict, grid) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(node, Num):
        return np.full(grid.shape, node.value), np.ones(grid.shape, dtype=bool)
    if isinstance(node, Ref):
        band = layers[node.name]
        return band.values, band.mask
    if isinstance(node, Neg):
        v, m = _eval(node.operand, layers, grid)
        return -v, m
    if isinstance(node, Agg):
        names = _glob_matches(node.pattern, layers.keys())
        arrays = np.stack([layers[n].values for n in names])
        masks = np.stack([layers[n].mask for n in names])
        return _reduce_members(node.func, arrays, masks)
    if isinstance(node, BinOp):
        lv, lm = _eval(node.left, layers, grid)
        rv, rm = _eval(node.right, layers, grid)
        mask = lm & rm
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if node.op == "+":
                out = lv + rv
            elif node.op == "-":
                out = lv - rv
            elif node.op == "*":
                out = lv * rv
            else:
                out = lv / rv
                mask = mask & (rv != 0.0)
        mask = mask & np.isfinite(out)
        return np.where(mask, out, 0.0), mask
    raise TypeError(f"not an expression node: {node!r}")


def evaluate_feature(spec: FeatureSpec, layers: dict, grid=None) -> Band:
    """Evaluate a feature pixelwise over alias bands sharing one grid.

    ``grid`` is only needed for constant expressions that reference no alias.
    """
    for node in _walk(spec.expr):
        if isinstance(node, Ref) and node.name not in layers:
            raise UnknownAliasError(f"alias {node.name!r} not evaluated")
        if isinstance(node, Agg) and not _glob_matches(node.pattern, layers.keys()):
            raise DslError(f"glob {node.pattern!r} matches no evaluated alias")
    grids = {b.grid for b in layers.values()}
    if len(grids) > 1:
        raise GridMismatchError("alias layers are on different grids")
    if grids:
        grid = next(iter(grids))
    elif grid is None:
        raise UnknownAliasError("no alias layers given and no grid to evaluate on")
    values, mask = _eval(spec.expr, layers, grid)
    return Band(grid, np.where(mask, values, 0.0), mask, kind=CONTINUOUS, name=spec.name)


def build_feature_stack(specs, layers: dict) -> FeatureStack:
    """Evaluate features in order into a stack; names must be unique."""
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DslError(f"duplicate feature names: {names}")
    if not specs:
        raise DslError("at least one feature is required")
    bands = tuple(evaluate_feature(s, layers) for s in specs)
    return FeatureStack(bands[0].grid, bands)
