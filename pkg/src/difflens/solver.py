"""Property-model search over bounded domains.

Shapes are bounded (rank <= 5, dimension sizes <= 64) and dtypes are a small
enum, so models are found by interval/equality propagation followed by seeded
randomized search, and every returned model is verified by substituting it
back into the constraint set. Unsatisfiable or slow queries yield None within
a per-query deadline.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

from .constraints import (
    ApiSpec,
    ArgKind,
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
from .values import DType, TENSOR_DTYPES

RANK_BOUND = 5
DIM_BOUND = 64
INT_VALUE_BOUND = 100
DEFAULT_DEADLINE = 2.0
MAX_TRIES = 400

# sampling prefers small dimensions; the full domain stays reachable
_PREFERRED_DIMS = (1, 2, 3, 5)
_PREFERRED_INTS = tuple(range(-8, 9))


@dataclass
class TensorModel:
    dtype: DType
    shape: tuple[int, ...]
    value: float | int | None = None
    value_min: float | int | None = None
    value_max: float | int | None = None

    @property
    def ndims(self) -> int:
        return len(self.shape)

    @property
    def num_element(self) -> int:
        return math.prod(self.shape)


@dataclass
class PrimitiveModel:
    value: object


AbstractInput = dict[str, "TensorModel | PrimitiveModel"]


class EvalFailure(Exception):
    """The expression is undefined under this model (treated as false)."""


# ---------------------------------------------------------------------------
# Model evaluation
# ---------------------------------------------------------------------------

def _prop_value(model: AbstractInput, p: Prop):
    entry = model.get(p.arg)
    if entry is None:
        raise EvalFailure(f"no model entry for {p.arg}")
    if isinstance(entry, PrimitiveModel):
        if p.kind is PropertyKind.VALUE:
            return entry.value
        if p.kind is PropertyKind.DTYPE:
            from .values import value_dtype

            return value_dtype(entry.value)  # type: ignore[arg-type]
        raise EvalFailure(f"{p.kind.value} is undefined for primitive {p.arg}")
    if p.kind is PropertyKind.DTYPE:
        return entry.dtype
    if p.kind is PropertyKind.NDIMS:
        return entry.ndims
    if p.kind is PropertyKind.SHAPE:
        return entry.shape
    if p.kind is PropertyKind.SHAPE_I:
        idx = p.index if p.index is not None else 0
        if not -entry.ndims <= idx < entry.ndims:
            raise EvalFailure(f"shape index {idx} out of range for rank {entry.ndims}")
        return entry.shape[idx]
    if p.kind is PropertyKind.NUM_ELEMENT:
        return entry.num_element
    if p.kind is PropertyKind.VALUE:
        if entry.value is None:
            raise EvalFailure(f"{p.arg}.value is unpinned")
        return entry.value
    if p.kind is PropertyKind.VALUE_MIN:
        if entry.value_min is None:
            raise EvalFailure(f"{p.arg}.value_min is unpinned")
        return entry.value_min
    if p.kind is PropertyKind.VALUE_MAX:
        if entry.value_max is None:
            raise EvalFailure(f"{p.arg}.value_max is unpinned")
        return entry.value_max
    raise EvalFailure(f"unknown property {p.kind}")


def eval_expr(expr: ConstraintExpr, model: AbstractInput):
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Prop):
        return _prop_value(model, expr)
    if isinstance(expr, Arith):
        a = eval_expr(expr.args[0], model)
        b = eval_expr(expr.args[1], model)
        try:
            if expr.op == "+":
                return a + b
            if expr.op == "-":
                return a - b
            if expr.op == "*":
                return a * b
            if expr.op == "/":
                if b == 0:
                    raise EvalFailure("division by zero")
                if isinstance(a, int) and isinstance(b, int):
                    return a // b
                return a / b
            if expr.op == "min":
                return min(a, b)
            return max(a, b)
        except TypeError as exc:
            raise EvalFailure(str(exc)) from exc
    if isinstance(expr, Cmp):
        a = eval_expr(expr.lhs, model)
        b = eval_expr(expr.rhs, model)
        try:
            if expr.op == "==":
                return _values_equal(a, b)
            if expr.op == "!=":
                return not _values_equal(a, b)
            if expr.op == "<":
                return a < b
            if expr.op == "<=":
                return a <= b
            if expr.op == ">":
                return a > b
            return a >= b
        except TypeError as exc:
            raise EvalFailure(str(exc)) from exc
    if isinstance(expr, BoolOp):
        if expr.op == "and":
            return all(eval_predicate(a, model) for a in expr.args)
        return any(eval_predicate(a, model) for a in expr.args)
    if isinstance(expr, Not):
        return not eval_predicate(expr.arg, model)
    if isinstance(expr, InSet):
        item = eval_expr(expr.item, model)
        if isinstance(item, DType):
            return item in expr.elems or item.value in expr.elems
        return item in expr.elems
    if isinstance(expr, Call):
        raise EvalFailure(f"opaque call {expr.name} is not evaluable")
    raise TypeError(f"not a ConstraintExpr: {expr!r}")


def _values_equal(a, b) -> bool:
    if isinstance(a, DType) or isinstance(b, DType):
        an = a.value if isinstance(a, DType) else a
        bn = b.value if isinstance(b, DType) else b
        return an == bn
    if isinstance(a, tuple) or isinstance(b, tuple):
        return a == b
    return a == b


def eval_predicate(expr: ConstraintExpr, model: AbstractInput) -> bool:
    """Truth of a constraint under a model; undefined evaluations are false."""
    try:
        return bool(eval_expr(expr, model))
    except EvalFailure:
        return False


def model_satisfies(exprs, model: AbstractInput) -> bool:
    return all(eval_predicate(e, model) for e in exprs)


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

@dataclass
class _IntDomain:
    lo: int
    hi: int
    pinned: int | None = None
    excluded: set[int] = field(default_factory=set)
    magic: set[int] = field(default_factory=set)

    def narrow(self, op: str, bound: int) -> bool:
        if op == "==":
            if self.pinned is not None and self.pinned != bound:
                return False
            self.pinned = bound
        elif op == "!=":
            self.excluded.add(bound)
        elif op == "<":
            self.hi = min(self.hi, bound - 1)
        elif op == "<=":
            self.hi = min(self.hi, bound)
        elif op == ">":
            self.lo = max(self.lo, bound + 1)
        elif op == ">=":
            self.lo = max(self.lo, bound)
        return self.consistent()

    def consistent(self) -> bool:
        if self.pinned is not None:
            return self.lo <= self.pinned <= self.hi and self.pinned not in self.excluded
        return self.lo <= self.hi

    def _allowed(self, v: int) -> bool:
        return self.lo <= v <= self.hi and v not in self.excluded

    def sample(self, rng: random.Random) -> int:
        if self.pinned is not None:
            return self.pinned
        # boundary constants mentioned by the constraints get extra weight
        magic = sorted(v for v in self.magic if self._allowed(v))
        if magic and rng.random() < 0.4:
            return rng.choice(magic)
        preferred = [v for v in _PREFERRED_INTS if self._allowed(v)]
        if preferred and rng.random() < 0.9:
            return rng.choice(preferred)
        for _ in range(16):
            v = rng.randint(self.lo, self.hi)
            if v not in self.excluded:
                return v
        candidates = [v for v in range(self.lo, self.hi + 1) if v not in self.excluded]
        if not candidates:
            raise EvalFailure("empty integer domain")
        return rng.choice(candidates)


def _flatten_conjunction(exprs) -> list[ConstraintExpr]:
    flat: list[ConstraintExpr] = []
    stack = list(exprs)
    while stack:
        e = stack.pop(0)
        if isinstance(e, BoolOp) and e.op == "and":
            stack = list(e.args) + stack
        else:
            flat.append(e)
    return flat


_NEGATED = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
_FLIPPED = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}


def _atom_parts(expr: ConstraintExpr):
    """(prop, op, literal) for directly-propagatable comparison atoms;
    negations are folded into the operator."""
    if isinstance(expr, Not):
        inner = _atom_parts(expr.arg)
        if inner is None:
            return None
        p, op, bound = inner
        return p, _NEGATED[op], bound
    if not isinstance(expr, Cmp):
        return None
    if isinstance(expr.lhs, Prop) and isinstance(expr.rhs, Lit):
        return expr.lhs, expr.op, expr.rhs.value
    if isinstance(expr.rhs, Prop) and isinstance(expr.lhs, Lit):
        return expr.rhs, _FLIPPED[expr.op], expr.lhs.value
    return None


def _prop_pair(expr: ConstraintExpr):
    """(prop, prop) for positive equality atoms between two properties."""
    if isinstance(expr, Cmp) and expr.op == "==" \
            and isinstance(expr.lhs, Prop) and isinstance(expr.rhs, Prop):
        return expr.lhs, expr.rhs
    return None


class _Search:
    def __init__(self, api: ApiSpec, exprs, rng: random.Random):
        self.api = api
        self.exprs = _flatten_conjunction(exprs)
        self.rng = rng
        self.dtype_domain: dict[str, list[DType]] = {}
        self.ndims: dict[str, _IntDomain] = {}
        self.dims: dict[tuple[str, int], _IntDomain] = {}
        self.shape_pin: dict[str, tuple[int, ...]] = {}
        self.numel: dict[str, _IntDomain] = {}
        self.int_value: dict[str, _IntDomain] = {}
        self.float_pin: dict[str, float] = {}
        self.bool_pin: dict[str, bool] = {}
        self.needs_value_var: set[tuple[str, PropertyKind]] = set()
        self.shape_alias: dict[str, str] = {}  # arg -> earlier arg with equal shape
        self.feasible = True
        for spec in api.args:
            if spec.kind is ArgKind.TENSOR:
                self.dtype_domain[spec.name] = list(TENSOR_DTYPES)
                self.ndims[spec.name] = _IntDomain(0, RANK_BOUND)
                for i in range(RANK_BOUND):
                    self.dims[(spec.name, i)] = _IntDomain(0, DIM_BOUND)
                self.numel[spec.name] = _IntDomain(0, DIM_BOUND ** 2)
            elif spec.kind is ArgKind.INT:
                self.int_value[spec.name] = _IntDomain(-INT_VALUE_BOUND, INT_VALUE_BOUND)
        self._collect_value_vars()
        self._collect_magic()
        self._propagate()

    def _collect_magic(self):
        """Integer literals compared against a property anywhere in the
        constraints become preferred sample values for that property."""
        from .constraints import walk

        self.magic: dict[tuple[str, PropertyKind, int | None], set[int]] = {}
        for e in self.exprs:
            for node in walk(e):
                if not isinstance(node, Cmp):
                    continue
                for p, lit in ((node.lhs, node.rhs), (node.rhs, node.lhs)):
                    if isinstance(p, Prop) and isinstance(lit, Lit) \
                            and isinstance(lit.value, int) and not isinstance(lit.value, bool):
                        key = (p.arg, p.kind, p.index)
                        bucket = self.magic.setdefault(key, set())
                        bucket.update((lit.value, lit.value - 1, lit.value + 1))

    def _collect_value_vars(self):
        from .constraints import prop_refs

        for e in self.exprs:
            for p in prop_refs(e):
                try:
                    spec = self.api.arg(p.arg)
                except KeyError:
                    continue
                if spec.kind is ArgKind.TENSOR and p.kind in (
                    PropertyKind.VALUE, PropertyKind.VALUE_MIN, PropertyKind.VALUE_MAX
                ):
                    self.needs_value_var.add((p.arg, p.kind))

    def _propagate(self):
        # route collected magic constants to their domains
        for (arg, kind, index), values in self.magic.items():
            domain: _IntDomain | None = None
            if kind is PropertyKind.NDIMS and arg in self.ndims:
                domain = self.ndims[arg]
            elif kind is PropertyKind.SHAPE_I and index is not None and 0 <= index < RANK_BOUND \
                    and (arg, index) in self.dims:
                domain = self.dims[(arg, index)]
            elif kind is PropertyKind.VALUE and arg in self.int_value:
                domain = self.int_value[arg]
            if domain is not None:
                domain.magic.update(values)
        for e in self.exprs:
            pair = _prop_pair(e)
            if pair is not None:
                a, b = pair
                if a.kind is PropertyKind.SHAPE and b.kind is PropertyKind.SHAPE \
                        and a.arg in self.ndims and b.arg in self.ndims and a.arg != b.arg:
                    order = [s.name for s in self.api.args]
                    first, second = sorted((a.arg, b.arg), key=order.index)
                    self.shape_alias[second] = first
                continue
            if isinstance(e, InSet) and isinstance(e.item, Prop) \
                    and e.item.kind is PropertyKind.DTYPE and e.item.arg in self.dtype_domain:
                allowed = {x.value if isinstance(x, DType) else x for x in e.elems}
                self.dtype_domain[e.item.arg] = [
                    d for d in self.dtype_domain[e.item.arg] if d.value in allowed
                ]
                if not self.dtype_domain[e.item.arg]:
                    self.feasible = False
                    return
                continue
            parts = _atom_parts(e)
            if parts is None:
                continue
            p, op, bound = parts
            try:
                spec = self.api.arg(p.arg)
            except KeyError:
                continue
            if p.kind is PropertyKind.DTYPE and spec.kind is ArgKind.TENSOR:
                if op == "==":
                    want = bound.value if isinstance(bound, DType) else bound
                    self.dtype_domain[p.arg] = [d for d in self.dtype_domain[p.arg] if d.value == want]
                elif op == "!=":
                    drop = bound.value if isinstance(bound, DType) else bound
                    self.dtype_domain[p.arg] = [d for d in self.dtype_domain[p.arg] if d.value != drop]
                if not self.dtype_domain[p.arg]:
                    self.feasible = False
                    return
                continue
            if p.kind is PropertyKind.SHAPE and spec.kind is ArgKind.TENSOR and op == "==" \
                    and isinstance(bound, tuple):
                pin = tuple(int(x) for x in bound)
                prior = self.shape_pin.get(p.arg)
                if prior is not None and prior != pin:
                    self.feasible = False
                    return
                self.shape_pin[p.arg] = pin
                continue
            if not isinstance(bound, (int, float)) or isinstance(bound, bool):
                if p.kind is PropertyKind.VALUE and spec.kind is ArgKind.BOOL and op == "==":
                    self.bool_pin[p.arg] = bool(bound)
                continue
            domain = self._int_domain_for(p, spec)
            if domain is not None:
                if not _narrow_numeric(domain, op, bound):
                    self.feasible = False
                    return
                continue
            if p.kind is PropertyKind.VALUE and spec.kind is ArgKind.FLOAT and op == "==":
                self.float_pin[p.arg] = float(bound)

    def _int_domain_for(self, p: Prop, spec) -> _IntDomain | None:
        if spec.kind is ArgKind.TENSOR:
            if p.kind is PropertyKind.NDIMS:
                return self.ndims[p.arg]
            if p.kind is PropertyKind.SHAPE_I and p.index is not None and p.index >= 0:
                return self.dims[(p.arg, p.index)] if p.index < RANK_BOUND else None
            if p.kind is PropertyKind.NUM_ELEMENT:
                return self.numel[p.arg]
            return None
        if spec.kind is ArgKind.INT and p.kind is PropertyKind.VALUE:
            return self.int_value[p.arg]
        return None

    # -- sampling ---------------------------------------------------------

    def _sample_shape(self, name: str, sampled: dict[str, tuple[int, ...]]) -> tuple[int, ...]:
        root = name
        hops = 0
        while root in self.shape_alias and hops < len(self.shape_alias) + 1:
            root = self.shape_alias[root]
            hops += 1
        if root != name and root in sampled:
            return sampled[root]
        if name in self.shape_pin:
            return self.shape_pin[name]
        if root in self.shape_pin:
            return self.shape_pin[root]
        rng = self.rng
        ndims_domain = self.ndims[name]
        numel = self.numel[name]
        rank = ndims_domain.sample(rng)
        if numel.pinned is not None:
            target = numel.pinned
            factors = _random_factorization(target, rank, rng)
            if factors is not None:
                return factors
        dims = []
        for i in range(rank):
            d = self.dims[(name, i)]
            preferred = [v for v in _PREFERRED_DIMS if d.lo <= v <= d.hi and v not in d.excluded]
            if d.pinned is not None:
                dims.append(d.pinned)
            elif preferred and rng.random() < 0.95:
                dims.append(rng.choice(preferred))
            else:
                dims.append(d.sample(rng))
        return tuple(dims)

    def sample(self) -> AbstractInput:
        rng = self.rng
        model: AbstractInput = {}
        sampled_shapes: dict[str, tuple[int, ...]] = {}
        for spec in self.api.args:
            if spec.kind is ArgKind.TENSOR:
                dtype = rng.choice(self.dtype_domain[spec.name])
                shape = self._sample_shape(spec.name, sampled_shapes)
                sampled_shapes[spec.name] = shape
                entry = TensorModel(dtype, shape)
                for arg_kind in (PropertyKind.VALUE, PropertyKind.VALUE_MIN, PropertyKind.VALUE_MAX):
                    if (spec.name, arg_kind) in self.needs_value_var:
                        v = self._sample_value_var(spec.name, arg_kind, dtype, rng)
                        if arg_kind is PropertyKind.VALUE:
                            entry.value = v
                        elif arg_kind is PropertyKind.VALUE_MIN:
                            entry.value_min = v
                        else:
                            entry.value_max = v
                if entry.value_min is not None and entry.value_max is not None \
                        and entry.value_min > entry.value_max:
                    entry.value_min, entry.value_max = entry.value_max, entry.value_min
                model[spec.name] = entry
            elif spec.kind is ArgKind.INT:
                model[spec.name] = PrimitiveModel(self.int_value[spec.name].sample(rng))
            elif spec.kind is ArgKind.FLOAT:
                if spec.name in self.float_pin:
                    model[spec.name] = PrimitiveModel(self.float_pin[spec.name])
                else:
                    model[spec.name] = PrimitiveModel(round(rng.uniform(-4.0, 4.0), 4))
            elif spec.kind is ArgKind.BOOL:
                if spec.name in self.bool_pin:
                    model[spec.name] = PrimitiveModel(self.bool_pin[spec.name])
                else:
                    model[spec.name] = PrimitiveModel(rng.random() < 0.5)
            elif spec.kind is ArgKind.STRING:
                model[spec.name] = PrimitiveModel(spec.default if spec.default is not None else "")
            elif spec.kind is ArgKind.INT_LIST:
                default = spec.default if isinstance(spec.default, tuple) else ()
                model[spec.name] = PrimitiveModel(default)
            else:
                model[spec.name] = PrimitiveModel(spec.default)
        return model

    def _sample_value_var(self, name: str, kind: PropertyKind, dtype: DType, rng: random.Random):
        lo = 0.0 if dtype in (DType.UINT32, DType.BOOL) else -8.0
        hi = 8.0
        for e in self.exprs:
            parts = _atom_parts(e)
            if not (parts and parts[0].arg == name and parts[0].kind is kind):
                continue
            _, op, bound = parts
            if not isinstance(bound, (int, float)) or isinstance(bound, bool):
                continue
            if op == "==":
                return bound
            if op in ("<", "<="):
                hi = min(hi, float(bound) - (1.0 if op == "<" else 0.0))
            elif op in (">", ">="):
                lo = max(lo, float(bound) + (1.0 if op == ">" else 0.0))
        if lo > hi:
            lo = hi
        if dtype in (DType.FLOAT16, DType.FLOAT32, DType.FLOAT64, DType.COMPLEX64):
            return round(rng.uniform(lo, hi), 3)
        return rng.randint(int(lo), int(hi))


def _narrow_numeric(domain: _IntDomain, op: str, bound) -> bool:
    """Narrow an integer domain with a possibly-float bound."""
    if isinstance(bound, int):
        return domain.narrow(op, bound)
    if op == "==":
        return domain.narrow(op, int(bound)) if bound.is_integer() else False
    if op == "!=":
        return domain.narrow(op, int(bound)) if bound.is_integer() else True
    if op in ("<", "<="):
        return domain.narrow("<=", math.floor(bound) if not bound.is_integer() else
                             (int(bound) - (1 if op == "<" else 0)))
    return domain.narrow(">=", math.ceil(bound) if not bound.is_integer() else
                         (int(bound) + (1 if op == ">" else 0)))


def _random_factorization(target: int, rank: int, rng: random.Random) -> tuple[int, ...] | None:
    """Random shape of length `rank` whose element product equals `target`."""
    if rank == 0:
        return () if target == 1 else None
    if target == 0:
        dims = [rng.choice(_PREFERRED_DIMS) for _ in range(rank)]
        dims[rng.randrange(rank)] = 0
        return tuple(dims)
    dims = []
    remaining = target
    for i in range(rank - 1):
        divisors = [d for d in range(1, min(remaining, DIM_BOUND) + 1) if remaining % d == 0]
        if not divisors:
            return None
        pick = rng.choice(divisors)
        dims.append(pick)
        remaining //= pick
    if remaining > DIM_BOUND:
        return None
    dims.append(remaining)
    rng.shuffle(dims)
    return tuple(dims)


def solve(
    exprs,
    api: ApiSpec,
    rng: random.Random,
    rejected_tuples: frozenset = frozenset(),
    tuple_of=None,
    deadline: float = DEFAULT_DEADLINE,
    max_tries: int = MAX_TRIES,
) -> AbstractInput | None:
    """Find a property model satisfying every expression, or None.

    `rejected_tuples`/`tuple_of` short-circuit duplicate-input rejection so the
    negated-conjunction constraints need not be evaluated per candidate.
    """
    exprs = list(exprs)
    search = _Search(api, exprs, rng)
    if not search.feasible:
        return None
    t0 = time.monotonic()
    for _ in range(max_tries):
        if time.monotonic() - t0 > deadline:
            return None
        try:
            model = search.sample()
        except EvalFailure:
            return None
        if tuple_of is not None and tuple_of(model) in rejected_tuples:
            continue
        if model_satisfies(exprs, model):
            return model
    return None
