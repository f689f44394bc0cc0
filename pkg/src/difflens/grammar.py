"""Infix constraint grammar shared by IR documents and model replies.

The grammar covers boolean/comparison/arithmetic operators over argument
properties (`x.ndims`, `x.shape[-1]`, `x.dtype in [float32]`), bare variable
references, and calls to unknown functions (which become opaque-call nodes).
A bare identifier denotes the value of that variable. Documented in
docs/constraint-grammar.md.
"""

from __future__ import annotations

import re

from .constraints import (
    CMP_OPS,
    PROPERTY_NAMES,
    Arith,
    BoolOp,
    Call,
    Cmp,
    ConstraintExpr,
    InSet,
    Lit,
    Not,
    Prop,
    PropertyKind,
)
from .values import DType


class ConstraintSyntaxError(ValueError):
    """Text is not well-formed under the constraint grammar."""


class UndefinedPropertyError(ConstraintSyntaxError):
    """A property access names something outside the fixed vocabulary."""

    def __init__(self, name: str):
        super().__init__(f"undefined property {name!r}")
        self.name = name


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+\.\d*(e[+-]?\d+)?|\.\d+(e[+-]?\d+)?|\d+(e[+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|<|>|\+|-|\*|/|\(|\)|\[|\]|,|\.)
  | (?P<str>"(?:[^"\\]|\\.)*")
    """,
    re.VERBOSE | re.IGNORECASE,
)

_KEYWORDS = {"and", "or", "not", "in", "true", "false"}
_DTYPE_NAMES = {d.value for d in DType}
_BUILTIN_FUNCS = {"min", "max"}


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ConstraintSyntaxError(f"bad character {text[pos]!r} at offset {pos}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        tokens.append((m.lastgroup, m.group()))
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> tuple[str, str]:
        return self.tokens[self.pos]

    def next(self) -> tuple[str, str]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def accept(self, value: str) -> bool:
        if self.tokens[self.pos][1] == value and self.tokens[self.pos][0] != "str":
            self.pos += 1
            return True
        return False

    def expect(self, value: str):
        if not self.accept(value):
            kind, got = self.peek()
            raise ConstraintSyntaxError(f"expected {value!r}, got {got!r}")

    # precedence: or < and < not < cmp/in < additive < multiplicative < unary
    def parse(self) -> ConstraintExpr:
        expr = self.or_expr()
        if self.peek()[0] != "end":
            raise ConstraintSyntaxError(f"trailing input at {self.peek()[1]!r}")
        return expr

    def or_expr(self) -> ConstraintExpr:
        args = [self.and_expr()]
        while self.accept("or"):
            args.append(self.and_expr())
        return args[0] if len(args) == 1 else BoolOp("or", tuple(args))

    def and_expr(self) -> ConstraintExpr:
        args = [self.not_expr()]
        while self.accept("and"):
            args.append(self.not_expr())
        return args[0] if len(args) == 1 else BoolOp("and", tuple(args))

    def not_expr(self) -> ConstraintExpr:
        if self.accept("not"):
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> ConstraintExpr:
        lhs = self.additive()
        kind, value = self.peek()
        if kind == "op" and value in CMP_OPS:
            self.next()
            return Cmp(value, lhs, self.additive())
        if kind == "name" and value == "in":
            self.next()
            elems = self.literal_list()
            return InSet(lhs, elems)
        return lhs

    def additive(self) -> ConstraintExpr:
        expr = self.multiplicative()
        while True:
            if self.accept("+"):
                expr = Arith("+", (expr, self.multiplicative()))
            elif self.accept("-"):
                expr = Arith("-", (expr, self.multiplicative()))
            else:
                return expr

    def multiplicative(self) -> ConstraintExpr:
        expr = self.unary()
        while True:
            if self.accept("*"):
                expr = Arith("*", (expr, self.unary()))
            elif self.accept("/"):
                expr = Arith("/", (expr, self.unary()))
            else:
                return expr

    def unary(self) -> ConstraintExpr:
        if self.accept("-"):
            inner = self.unary()
            if isinstance(inner, Lit) and isinstance(inner.value, (int, float)):
                return Lit(-inner.value)
            return Arith("-", (Lit(0), inner))
        return self.postfix()

    def postfix(self) -> ConstraintExpr:
        kind, value = self.peek()
        if kind == "num":
            self.next()
            if re.fullmatch(r"\d+", value):
                return Lit(int(value))
            return Lit(float(value))
        if kind == "str":
            self.next()
            return Lit(_unescape(value))
        if value == "(":
            self.next()
            inner = self.or_expr()
            self.expect(")")
            return inner
        if value == "[":
            return self.bracket_list()
        if kind == "name":
            self.next()
            if value == "true":
                return Lit(True)
            if value == "false":
                return Lit(False)
            if value in _DTYPE_NAMES and self.peek()[1] not in (".", "("):
                return Lit(DType(value))
            if self.accept("("):
                args = []
                if not self.accept(")"):
                    args.append(self.or_expr())
                    while self.accept(","):
                        args.append(self.or_expr())
                    self.expect(")")
                if value in _BUILTIN_FUNCS:
                    if len(args) != 2:
                        raise ConstraintSyntaxError(f"{value} takes two arguments")
                    return Arith(value, tuple(args))
                return Call(value, tuple(args))
            if self.accept("."):
                return self.property_access(value)
            return Prop(value, PropertyKind.VALUE)
        raise ConstraintSyntaxError(f"unexpected token {value!r}")

    def property_access(self, arg: str) -> ConstraintExpr:
        kind, name = self.next()
        if kind != "name":
            raise ConstraintSyntaxError(f"expected property name after {arg!r}.")
        if name == "shape" and self.accept("["):
            tok_kind, tok = self.next()
            sign = 1
            if tok == "-":
                sign = -1
                tok_kind, tok = self.next()
            if tok_kind != "num" or not re.fullmatch(r"\d+", tok):
                raise ConstraintSyntaxError("shape index must be an integer")
            self.expect("]")
            return Prop(arg, PropertyKind.SHAPE_I, sign * int(tok))
        if name not in PROPERTY_NAMES:
            raise UndefinedPropertyError(name)
        return Prop(arg, PROPERTY_NAMES[name])

    def bracket_list(self) -> ConstraintExpr:
        self.expect("[")
        items: list[ConstraintExpr] = []
        if not self.accept("]"):
            items.append(self.or_expr())
            while self.accept(","):
                items.append(self.or_expr())
            self.expect("]")
        if all(isinstance(e, Lit) for e in items):
            return Lit(tuple(e.value for e in items))
        # mixed list (e.g. [t] in a sanity-check form); kept structural
        return Call("list", tuple(items))

    def literal_list(self) -> tuple:
        expr = self.bracket_list()
        if not isinstance(expr, Lit):
            raise ConstraintSyntaxError("membership sets must contain literals only")
        return tuple(expr.value)


def _unescape(raw: str) -> str:
    return raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")


def parse_constraint(text: str) -> ConstraintExpr:
    """Parse one infix constraint expression."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Rendering (prompts and reports)
# ---------------------------------------------------------------------------

_PRECEDENCE = {"or": 1, "and": 2, "not": 3, "cmp": 4, "+": 5, "-": 5, "*": 6, "/": 6}


def to_infix(expr: ConstraintExpr, _parent: int = 0) -> str:
    def wrap(text: str, level: int) -> str:
        return f"({text})" if level < _parent else text

    if isinstance(expr, Lit):
        return _render_literal(expr.value)
    if isinstance(expr, Prop):
        if expr.kind is PropertyKind.SHAPE_I:
            return f"{expr.arg}.shape[{expr.index}]"
        if expr.kind is PropertyKind.VALUE:
            return expr.arg
        return f"{expr.arg}.{expr.kind.value}"
    if isinstance(expr, Arith):
        if expr.op in ("min", "max"):
            return f"{expr.op}({to_infix(expr.args[0])}, {to_infix(expr.args[1])})"
        level = _PRECEDENCE[expr.op]
        parts = [to_infix(a, level) for a in expr.args]
        return wrap(f" {expr.op} ".join(parts), level)
    if isinstance(expr, Cmp):
        level = _PRECEDENCE["cmp"]
        return wrap(f"{to_infix(expr.lhs, level)} {expr.op} {to_infix(expr.rhs, level)}", level)
    if isinstance(expr, BoolOp):
        level = _PRECEDENCE[expr.op]
        return wrap(f" {expr.op} ".join(to_infix(a, level + 1) for a in expr.args), level)
    if isinstance(expr, Not):
        level = _PRECEDENCE["not"]
        return wrap(f"not {to_infix(expr.arg, level)}", level)
    if isinstance(expr, InSet):
        level = _PRECEDENCE["cmp"]
        elems = ", ".join(_render_literal(e) for e in expr.elems)
        return wrap(f"{to_infix(expr.item, level)} in [{elems}]", level)
    if isinstance(expr, Call):
        if expr.name.startswith("prop:") and len(expr.args) == 1:
            return f"{to_infix(expr.args[0], 99)}.{expr.name[5:]}"
        if expr.name == "list":
            return "[" + ", ".join(to_infix(a) for a in expr.args) + "]"
        return f"{expr.name}(" + ", ".join(to_infix(a) for a in expr.args) + ")"
    raise TypeError(f"not a ConstraintExpr: {expr!r}")


def _render_literal(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, DType):
        return v.value
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, tuple):
        return "[" + ", ".join(_render_literal(x) for x in v) + "]"
    return repr(v)
