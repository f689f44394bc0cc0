"""Argument specs, the constraint expression AST, and canonical normalization.

Expressions range over argument *properties* (dtype, ndims, shape, ...) and are
the common currency of static extraction, LLM inference, and the input solver.
Canonical normalization gives every expression a stable structural key, which
is what path-constraint deduplication hashes.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

from .values import DType, dtype_of


class ArgKind(enum.Enum):
    TENSOR = "tensor"
    INT = "int"
    FLOAT = "float"
    BOOL = "bool"
    STRING = "string"
    INT_LIST = "int-list"
    OPAQUE = "opaque"


@dataclass(frozen=True)
class ArgumentSpec:
    name: str
    kind: ArgKind
    default: object | None = None


@dataclass(frozen=True)
class ApiSpec:
    """Signature of an API under test."""

    name: str
    args: tuple[ArgumentSpec, ...]

    def __post_init__(self):
        names = [a.name for a in self.args]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate argument names in {self.name}")

    @property
    def arg_names(self) -> frozenset[str]:
        return frozenset(a.name for a in self.args)

    def arg(self, name: str) -> ArgumentSpec:
        for a in self.args:
            if a.name == name:
                return a
        raise KeyError(name)


class PropertyKind(enum.Enum):
    DTYPE = "dtype"
    NDIMS = "ndims"
    SHAPE = "shape"
    SHAPE_I = "shape[i]"  # indexed dimension; negative indices allowed
    NUM_ELEMENT = "num_element"
    VALUE = "value"
    VALUE_MIN = "value_min"
    VALUE_MAX = "value_max"


PROPERTY_NAMES = {k.value: k for k in PropertyKind if k is not PropertyKind.SHAPE_I}

# properties applicable to tensor arguments (all eight kinds)
TENSOR_PROPERTIES = tuple(PropertyKind)
# properties applicable to primitive arguments
PRIMITIVE_PROPERTIES = (PropertyKind.VALUE, PropertyKind.DTYPE)


# ---------------------------------------------------------------------------
# Expression AST
# ---------------------------------------------------------------------------

class ConstraintExpr:
    """Base class; all nodes are frozen dataclasses and safe to share."""

    __slots__ = ()


@dataclass(frozen=True)
class Lit(ConstraintExpr):
    value: object  # int | float | bool | str | DType | tuple[int, ...]

    def __post_init__(self):
        if isinstance(self.value, list):
            object.__setattr__(self, "value", tuple(self.value))


@dataclass(frozen=True)
class Prop(ConstraintExpr):
    """Reference to one property of one argument; `x.shape[i]` carries an index."""

    arg: str
    kind: PropertyKind
    index: int | None = None

    def __post_init__(self):
        if (self.kind is PropertyKind.SHAPE_I) != (self.index is not None):
            raise ValueError("index is required exactly for shape[i] properties")


ARITH_OPS = ("+", "-", "*", "/", "min", "max")
CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Arith(ConstraintExpr):
    op: str
    args: tuple[ConstraintExpr, ...]

    def __post_init__(self):
        if self.op not in ARITH_OPS:
            raise ValueError(f"bad arithmetic op {self.op!r}")
        if isinstance(self.args, list):
            object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) != 2:
            raise ValueError(f"{self.op} takes two operands")


@dataclass(frozen=True)
class Cmp(ConstraintExpr):
    op: str
    lhs: ConstraintExpr
    rhs: ConstraintExpr

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"bad comparison op {self.op!r}")


@dataclass(frozen=True)
class BoolOp(ConstraintExpr):
    op: str  # "and" | "or"
    args: tuple[ConstraintExpr, ...]

    def __post_init__(self):
        if self.op not in ("and", "or"):
            raise ValueError(f"bad boolean op {self.op!r}")
        if isinstance(self.args, list):
            object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("boolean op needs at least two operands")


@dataclass(frozen=True)
class Not(ConstraintExpr):
    arg: ConstraintExpr


@dataclass(frozen=True)
class InSet(ConstraintExpr):
    """Membership of a dtype (or value) in an enumerated literal set."""

    item: ConstraintExpr
    elems: tuple[object, ...]

    def __post_init__(self):
        if isinstance(self.elems, list):
            object.__setattr__(self, "elems", tuple(self.elems))


@dataclass(frozen=True)
class Call(ConstraintExpr):
    """Opaque call to an unresolved external function."""

    name: str
    args: tuple[ConstraintExpr, ...]

    def __post_init__(self):
        if isinstance(self.args, list):
            object.__setattr__(self, "args", tuple(self.args))


TRUE = Lit(True)
FALSE = Lit(False)


# ---------------------------------------------------------------------------
# Traversal helpers
# ---------------------------------------------------------------------------

def children(expr: ConstraintExpr) -> tuple[ConstraintExpr, ...]:
    if isinstance(expr, (Arith, BoolOp, Call)):
        return expr.args
    if isinstance(expr, Cmp):
        return (expr.lhs, expr.rhs)
    if isinstance(expr, Not):
        return (expr.arg,)
    if isinstance(expr, InSet):
        return (expr.item,)
    return ()


def walk(expr: ConstraintExpr):
    yield expr
    for c in children(expr):
        yield from walk(c)


def prop_refs(expr: ConstraintExpr) -> list[Prop]:
    return [n for n in walk(expr) if isinstance(n, Prop)]


def referenced_args(expr: ConstraintExpr) -> set[str]:
    return {p.arg for p in prop_refs(expr)}


def has_opaque_call(expr: ConstraintExpr) -> bool:
    return any(isinstance(n, Call) for n in walk(expr))


# ---------------------------------------------------------------------------
# Textual serialization: prefix S-expression form (reports and fixtures)
# ---------------------------------------------------------------------------

def _lit_sexpr(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, DType):
        return v.value
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, tuple):
        return "(list " + " ".join(_lit_sexpr(x) for x in v) + ")" if v else "(list)"
    raise ValueError(f"cannot serialize literal {v!r}")


def to_sexpr(expr: ConstraintExpr) -> str:
    if isinstance(expr, Lit):
        return _lit_sexpr(expr.value)
    if isinstance(expr, Prop):
        if expr.kind is PropertyKind.SHAPE_I:
            return f"(prop {expr.arg} shape {expr.index})"
        return f"(prop {expr.arg} {expr.kind.value})"
    if isinstance(expr, Arith):
        return f"({expr.op} " + " ".join(to_sexpr(a) for a in expr.args) + ")"
    if isinstance(expr, Cmp):
        return f"({expr.op} {to_sexpr(expr.lhs)} {to_sexpr(expr.rhs)})"
    if isinstance(expr, BoolOp):
        return f"({expr.op} " + " ".join(to_sexpr(a) for a in expr.args) + ")"
    if isinstance(expr, Not):
        return f"(not {to_sexpr(expr.arg)})"
    if isinstance(expr, InSet):
        return f"(in {to_sexpr(expr.item)} (set " + " ".join(_lit_sexpr(e) for e in expr.elems) + "))"
    if isinstance(expr, Call):
        return f"(call {expr.name}" + "".join(" " + to_sexpr(a) for a in expr.args) + ")"
    raise TypeError(f"not a ConstraintExpr: {expr!r}")


def _tokenize_sexpr(text: str) -> list[str]:
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == '"':
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j + 1])
                    j += 2
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise ValueError("unterminated string literal")
            tokens.append('"' + "".join(buf))
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def _parse_atom(tok: str) -> object:
    if tok.startswith('"'):
        return tok[1:]
    if tok == "true":
        return True
    if tok == "false":
        return False
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        pass
    try:
        return dtype_of(tok)
    except ValueError:
        pass
    return tok  # bare symbol (argument / function name)


def parse_sexpr(text: str) -> ConstraintExpr:
    """Parse the prefix serialization back into an expression."""
    tokens = _tokenize_sexpr(text)
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of expression")
        tok = tokens[pos]
        pos += 1
        if tok != "(":
            atom = _parse_atom(tok)
            if isinstance(atom, str) and not tok.startswith('"'):
                raise ValueError(f"bare symbol {tok!r} outside a form")
            return Lit(atom)
        head = tokens[pos]
        pos += 1
        if head == "prop":
            arg = tokens[pos]; pos += 1
            kind_name = tokens[pos]; pos += 1
            index = None
            if tokens[pos] != ")":
                index = int(tokens[pos]); pos += 1
            expect(")")
            if kind_name == "shape" and index is not None:
                return Prop(arg, PropertyKind.SHAPE_I, index)
            if kind_name not in PROPERTY_NAMES:
                raise ValueError(f"unknown property {kind_name!r}")
            return Prop(arg, PROPERTY_NAMES[kind_name])
        if head == "list":
            items = []
            while tokens[pos] != ")":
                items.append(_parse_atom(tokens[pos])); pos += 1
            expect(")")
            return Lit(tuple(items))
        if head == "set":
            raise ValueError("(set ...) is only valid inside (in ...)")
        if head == "in":
            item = read()
            if tokens[pos] != "(" or tokens[pos + 1] != "set":
                raise ValueError("(in ...) requires a (set ...) of literals")
            pos += 2
            elems = []
            while tokens[pos] != ")":
                elems.append(_parse_atom(tokens[pos])); pos += 1
            expect(")")
            expect(")")
            return InSet(item, tuple(elems))
        if head == "not":
            inner = read()
            expect(")")
            return Not(inner)
        if head == "call":
            name = tokens[pos]; pos += 1
            args = []
            while tokens[pos] != ")":
                args.append(read())
            expect(")")
            return Call(name, tuple(args))
        args = []
        while tokens[pos] != ")":
            args.append(read())
        expect(")")
        if head in CMP_OPS:
            if len(args) != 2:
                raise ValueError(f"{head} takes two operands")
            return Cmp(head, args[0], args[1])
        if head in ARITH_OPS:
            return Arith(head, tuple(args))
        if head in ("and", "or"):
            return BoolOp(head, tuple(args))
        raise ValueError(f"unknown form {head!r}")

    def expect(tok: str):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            raise ValueError(f"expected {tok!r}")
        pos += 1

    expr = read()
    if pos != len(tokens):
        raise ValueError("trailing tokens after expression")
    return expr


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _structural_key(expr: ConstraintExpr) -> str:
    return to_sexpr(expr)


def _fold_div(a: object, b: object) -> object | None:
    if b == 0:
        return None
    if isinstance(a, bool) or isinstance(b, bool):
        return None
    if isinstance(a, int) and isinstance(b, int):
        return a // b
    # exact rational arithmetic keeps folding deterministic for floats
    return float(Fraction(a) / Fraction(b))


_FOLDS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _fold_div,
    "min": min,
    "max": max,
}

_CMP_FUNCS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}

_COMMUTATIVE = {"+", "*", "min", "max", "and", "or", "==", "!="}


def _is_num(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def normalize(expr: ConstraintExpr) -> ConstraintExpr:
    """Canonical form: folded constants, sorted commutative operands, no
    double negation. Idempotent by construction."""
    if isinstance(expr, (Lit, Prop)):
        return expr
    if isinstance(expr, Not):
        inner = normalize(expr.arg)
        if isinstance(inner, Not):
            return inner.arg  # already normalized
        if isinstance(inner, Lit) and isinstance(inner.value, bool):
            return Lit(not inner.value)
        return Not(inner)
    if isinstance(expr, Arith):
        args = tuple(normalize(a) for a in expr.args)
        if all(isinstance(a, Lit) and _is_num(a.value) for a in args):
            folded = _FOLDS[expr.op](args[0].value, args[1].value)
            if folded is not None:
                return Lit(folded)
        if expr.op in _COMMUTATIVE:
            args = tuple(sorted(args, key=_structural_key))
        return Arith(expr.op, args)
    if isinstance(expr, Cmp):
        lhs, rhs = normalize(expr.lhs), normalize(expr.rhs)
        if isinstance(lhs, Lit) and isinstance(rhs, Lit):
            try:
                return Lit(bool(_CMP_FUNCS[expr.op](lhs.value, rhs.value)))
            except TypeError:
                pass
        if expr.op in _COMMUTATIVE:
            lhs, rhs = sorted((lhs, rhs), key=_structural_key)
        return Cmp(expr.op, lhs, rhs)
    if isinstance(expr, BoolOp):
        flat: list[ConstraintExpr] = []
        for a in expr.args:
            a = normalize(a)
            if isinstance(a, BoolOp) and a.op == expr.op:
                flat.extend(a.args)
            else:
                flat.append(a)
        # constant absorption: `and` drops true / short-circuits on false
        identity, absorber = (True, False) if expr.op == "and" else (False, True)
        kept = []
        for a in flat:
            if isinstance(a, Lit) and isinstance(a.value, bool):
                if a.value == absorber:
                    return Lit(absorber)
                continue
            kept.append(a)
        if not kept:
            return Lit(identity)
        seen: dict[str, ConstraintExpr] = {}
        for a in kept:
            seen.setdefault(_structural_key(a), a)
        uniq = sorted(seen.values(), key=_structural_key)
        if len(uniq) == 1:
            return uniq[0]
        return BoolOp(expr.op, tuple(uniq))
    if isinstance(expr, InSet):
        item = normalize(expr.item)
        elems = tuple(sorted(set(expr.elems), key=_lit_sexpr))
        if isinstance(item, Lit):
            return Lit(item.value in elems)
        return InSet(item, elems)
    if isinstance(expr, Call):
        return Call(expr.name, tuple(normalize(a) for a in expr.args))
    raise TypeError(f"not a ConstraintExpr: {expr!r}")


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

class Solvability(enum.Enum):
    SOLVABLE = "solvable"
    UNSOLVABLE = "unsolvable"
    INPUT_IRRELEVANT = "input-irrelevant"


def classify(expr: ConstraintExpr, inputs: frozenset[str] | set[str]) -> Solvability:
    """Unsolvable if any opaque call remains; irrelevant if no property
    reference resolves to an API input; solvable otherwise."""
    if has_opaque_call(expr):
        return Solvability.UNSOLVABLE
    if not any(p.arg in inputs for p in prop_refs(expr)):
        return Solvability.INPUT_IRRELEVANT
    return Solvability.SOLVABLE


# ---------------------------------------------------------------------------
# Input constraints and path constraints
# ---------------------------------------------------------------------------

class Provenance(enum.Enum):
    STATIC = "static"
    INFERRED = "inferred"
    NATURAL = "natural"
    PROPERTY_VALUE = "property-value"
    ERROR_FEEDBACK = "error-feedback"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class InputConstraint:
    """A solvable constraint over API inputs, tagged with where it came from."""

    expr: ConstraintExpr
    provenance: Provenance
    source: tuple[str, int] | None = None  # (path id, statement index)

    def __post_init__(self):
        if has_opaque_call(self.expr):
            raise ValueError("input constraints must not contain opaque calls")

    def key(self) -> str:
        cached = getattr(self, "_key_cache", None)
        if cached is None:
            cached = to_sexpr(normalize(self.expr))
            object.__setattr__(self, "_key_cache", cached)
        return cached


def constraint_set_hash(constraints) -> str:
    """Order-insensitive digest of a set of constraints."""
    keys = sorted({c.key() for c in constraints})
    h = hashlib.sha256()
    for k in keys:
        h.update(k.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


@dataclass
class PathConstraint:
    """Deduplicated conjunction of input constraints for one execution path.

    The constraint set is immutable; `selection_count` is campaign bookkeeping
    and excluded from identity.
    """

    constraints: tuple[InputConstraint, ...]
    origin: str = "api"  # api | counterpart
    path_id: str = ""
    canonical_hash: str = field(default="")
    selection_count: int = 0

    def __post_init__(self):
        if isinstance(self.constraints, list):
            self.constraints = tuple(self.constraints)
        if not self.canonical_hash:
            self.canonical_hash = constraint_set_hash(self.constraints)

    def __eq__(self, other) -> bool:
        return isinstance(other, PathConstraint) and self.canonical_hash == other.canonical_hash

    def __hash__(self) -> int:
        return hash(self.canonical_hash)

    def exprs(self) -> tuple[ConstraintExpr, ...]:
        return tuple(c.expr for c in self.constraints)
