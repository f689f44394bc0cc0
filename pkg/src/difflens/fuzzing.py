"""Constraint-guided differential fuzzing.

Each iteration selects a path constraint by roulette wheel (fitness 1/(c+1)),
augments it with natural, property-value (p=0.3), error-feedback, and
duplicate constraints, solves for a property model, instantiates concrete
argument values (float tensors pick up NaN/Inf special values with p=0.05),
executes both implementations, and classifies the result.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import (
    ApiSpec,
    ArgKind,
    BoolOp,
    Cmp,
    ConstraintExpr,
    InputConstraint,
    InSet,
    Lit,
    Not,
    PathConstraint,
    Prop,
    PropertyKind,
    Provenance,
    constraint_set_hash,
    normalize,
)
from .harness import ExecutionOutcome, Harness, TransportError
from .solver import (
    AbstractInput,
    PrimitiveModel,
    RANK_BOUND,
    TensorModel,
    model_satisfies,
    solve,
)
from .synthesis import FILTERED_EXCEPTIONS, compare
from .validation import ValidationSet
from .values import (
    ConcreteInput,
    DType,
    FLOAT_DTYPES,
    TENSOR_DTYPES,
    TensorValue,
    encode_input,
    numpy_dtype,
)

PROPERTY_VALUE_PROBABILITY = 0.3
SPECIAL_VALUE_PROBABILITY = 0.05
INT_VALUE_BOUND = 100


# ---------------------------------------------------------------------------
# Path selection (roulette wheel over fitness 1/(c+1))
# ---------------------------------------------------------------------------

class SelectionState:
    def __init__(self, pool: list[PathConstraint]):
        if not pool:
            raise ValueError("campaign needs at least one path constraint")
        self.pool = list(pool)

    def probabilities(self) -> list[float]:
        scores = [1.0 / (pc.selection_count + 1) for pc in self.pool]
        total = sum(scores)
        return [s / total for s in scores]

    def select(self, rng: random.Random) -> PathConstraint:
        probs = self.probabilities()
        draw = rng.random()
        cumulative = 0.0
        for pc, p in zip(self.pool, probs):
            cumulative += p
            if draw <= cumulative:
                pc.selection_count += 1
                return pc
        pc = self.pool[-1]
        pc.selection_count += 1
        return pc

    def total_selections(self) -> int:
        return sum(pc.selection_count for pc in self.pool)


def select_path(state: SelectionState, rng: random.Random) -> PathConstraint:
    return state.select(rng)


# ---------------------------------------------------------------------------
# Constraint families
# ---------------------------------------------------------------------------

def natural_constraints(api: ApiSpec) -> list[InputConstraint]:
    """Value-space bounds for every argument property.

    Per-dimension non-negativity and the `num_element == product(shape)`
    identity are additionally enforced structurally by the model sampler and
    the tensor type; the expression forms here are the rank-independent ones.
    """
    out: list[InputConstraint] = []

    def add(expr: ConstraintExpr):
        out.append(InputConstraint(normalize(expr), Provenance.NATURAL))

    for spec in api.args:
        if spec.kind is ArgKind.TENSOR:
            nd = Prop(spec.name, PropertyKind.NDIMS)
            add(Cmp(">=", nd, Lit(0)))
            add(Cmp("<=", nd, Lit(RANK_BOUND)))
            add(Cmp(">=", Prop(spec.name, PropertyKind.NUM_ELEMENT), Lit(0)))
            add(InSet(Prop(spec.name, PropertyKind.DTYPE), tuple(TENSOR_DTYPES)))
        elif spec.kind is ArgKind.INT:
            v = Prop(spec.name, PropertyKind.VALUE)
            add(Cmp(">=", v, Lit(-INT_VALUE_BOUND)))
            add(Cmp("<=", v, Lit(INT_VALUE_BOUND)))
        elif spec.kind is ArgKind.FLOAT:
            v = Prop(spec.name, PropertyKind.VALUE)
            add(Cmp(">=", v, Lit(-float(INT_VALUE_BOUND))))
            add(Cmp("<=", v, Lit(float(INT_VALUE_BOUND))))
    return out


def property_value_candidates(api: ApiSpec, validation: ValidationSet) -> list[InputConstraint]:
    """Constraints pinning properties that are constant across all validation
    inputs (each gets used with low probability during augmentation)."""
    if not validation.inputs:
        return []
    candidates: list[InputConstraint] = []
    for spec in api.args:
        values = [x.args.get(spec.name) for x in validation.inputs]
        if any(v is None for v in values):
            continue
        if spec.kind is ArgKind.TENSOR:
            if not all(isinstance(v, TensorValue) for v in values):
                continue
            for prop, getter in (
                (PropertyKind.DTYPE, lambda t: t.dtype),
                (PropertyKind.NDIMS, lambda t: t.ndims),
                (PropertyKind.SHAPE, lambda t: t.shape),
                (PropertyKind.NUM_ELEMENT, lambda t: t.num_element),
            ):
                seen = {getter(v) for v in values}
                if len(seen) == 1:
                    pinned = next(iter(seen))
                    candidates.append(InputConstraint(
                        normalize(Cmp("==", Prop(spec.name, prop), Lit(pinned))),
                        Provenance.PROPERTY_VALUE))
        elif spec.kind in (ArgKind.INT, ArgKind.FLOAT, ArgKind.BOOL):
            seen = set(values)
            if len(seen) == 1:
                candidates.append(InputConstraint(
                    normalize(Cmp("==", Prop(spec.name, PropertyKind.VALUE), Lit(values[0]))),
                    Provenance.PROPERTY_VALUE))
    return candidates


_DIMENSION_PATTERN = re.compile(
    r"Dimension out of range \(expected to be in range of \[(-?\d+), (-?\d+)\], but got (-?\d+)\)"
)


def parse_error_feedback(
    message: str,
    x: ConcreteInput | None,
    api: ApiSpec,
    extra_patterns: list[tuple[re.Pattern, str]] | None = None,
) -> list[InputConstraint]:
    """Map an error message to constraints via the pattern registry.

    The bundled pattern reads the dimension-range template and bounds the
    ndims of each tensor argument whose rank matched the reported value.
    """
    out: list[InputConstraint] = []
    m = _DIMENSION_PATTERN.search(message)
    if m:
        lo, hi, got = (int(g) for g in m.groups())
        for spec in api.args:
            if spec.kind is not ArgKind.TENSOR:
                continue
            value = x.args.get(spec.name) if x is not None else None
            if x is not None and not (isinstance(value, TensorValue) and value.ndims == got):
                continue
            nd = Prop(spec.name, PropertyKind.NDIMS)
            expr = BoolOp("and", (Cmp(">=", nd, Lit(lo)), Cmp("<=", nd, Lit(hi))))
            out.append(InputConstraint(normalize(expr), Provenance.ERROR_FEEDBACK))
    for pattern, template in extra_patterns or []:
        m = pattern.search(message)
        if not m:
            continue
        text = template
        for i, group in enumerate(m.groups(), start=1):
            text = text.replace(f"#{i}", group)
        from .grammar import ConstraintSyntaxError, parse_constraint

        try:
            out.append(InputConstraint(normalize(parse_constraint(text)),
                                       Provenance.ERROR_FEEDBACK))
        except ConstraintSyntaxError:
            continue
    return out


def property_tuple(x: ConcreteInput, api: ApiSpec) -> tuple:
    """The duplicate-detection key: (ndims, shape, dtype) per tensor argument
    and the value of every primitive argument, in signature order."""
    parts: list = []
    for spec in api.args:
        v = x.args.get(spec.name)
        if isinstance(v, TensorValue):
            parts.append((spec.name, v.ndims, v.shape, v.dtype.value))
        else:
            parts.append((spec.name, v))
    return tuple(parts)


def model_property_tuple(model: AbstractInput, api: ApiSpec) -> tuple:
    parts: list = []
    for spec in api.args:
        entry = model.get(spec.name)
        if isinstance(entry, TensorModel):
            parts.append((spec.name, entry.ndims, entry.shape, entry.dtype.value))
        elif isinstance(entry, PrimitiveModel):
            parts.append((spec.name, entry.value))
        else:
            parts.append((spec.name, None))
    return tuple(parts)


def duplicate_constraint(tup: tuple, api: ApiSpec) -> InputConstraint:
    eqs: list[ConstraintExpr] = []
    for part in tup:
        name = part[0]
        spec = api.arg(name)
        if spec.kind is ArgKind.TENSOR and len(part) == 4:
            _, ndims, shape, dtype = part
            eqs.append(Cmp("==", Prop(name, PropertyKind.NDIMS), Lit(ndims)))
            eqs.append(Cmp("==", Prop(name, PropertyKind.SHAPE), Lit(tuple(shape))))
            eqs.append(Cmp("==", Prop(name, PropertyKind.DTYPE), Lit(DType(dtype))))
        else:
            value = part[1]
            if isinstance(value, (bool, int, float, str, tuple)) and not (
                isinstance(value, float) and math.isnan(value)
            ):
                eqs.append(Cmp("==", Prop(name, PropertyKind.VALUE), Lit(value)))
    if not eqs:
        expr: ConstraintExpr = Lit(False)
    elif len(eqs) == 1:
        expr = Not(eqs[0])
    else:
        expr = Not(BoolOp("and", tuple(eqs)))
    return InputConstraint(normalize(expr), Provenance.DUPLICATE)


@dataclass
class AugmentedConstraint:
    base: PathConstraint
    added: tuple[InputConstraint, ...]

    def constraints(self) -> tuple[InputConstraint, ...]:
        return self.base.constraints + self.added

    def exprs(self) -> list[ConstraintExpr]:
        return [c.expr for c in self.constraints()]

    def digest(self) -> str:
        return constraint_set_hash(self.constraints())


@dataclass
class CampaignState:
    """Mutable per-API fuzzing state shared across iterations."""

    api: ApiSpec
    naturals: list[InputConstraint]
    property_values: list[InputConstraint]
    error_feedback: list[InputConstraint] = field(default_factory=list)
    duplicates: list[InputConstraint] = field(default_factory=list)
    seen_tuples: set = field(default_factory=set)
    seen_feedback: set = field(default_factory=set)

    def record_input(self, x: ConcreteInput):
        tup = property_tuple(x, self.api)
        if tup in self.seen_tuples:
            raise AssertionError(f"duplicate property tuple generated: {tup}")
        self.seen_tuples.add(tup)
        self.duplicates.append(duplicate_constraint(tup, self.api))

    def record_feedback(self, constraints: list[InputConstraint]):
        for c in constraints:
            key = c.key()
            if key not in self.seen_feedback:
                self.seen_feedback.add(key)
                self.error_feedback.append(c)


def augment(pc: PathConstraint, state: CampaignState, rng: random.Random) -> AugmentedConstraint:
    added: list[InputConstraint] = list(state.naturals)
    for candidate in state.property_values:
        if rng.random() < PROPERTY_VALUE_PROBABILITY:
            added.append(candidate)
    added.extend(state.error_feedback)
    added.extend(state.duplicates)
    return AugmentedConstraint(pc, tuple(added))


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------

def instantiate(model: AbstractInput, rng: random.Random, api: ApiSpec) -> ConcreteInput:
    """Materialize concrete values for a property model. Float tensors receive
    NaN/Inf special values with probability 0.05 per tensor."""
    args: dict = {}
    for spec in api.args:
        entry = model.get(spec.name)
        if isinstance(entry, TensorModel):
            args[spec.name] = _materialize_tensor(entry, rng)
        elif isinstance(entry, PrimitiveModel):
            args[spec.name] = entry.value
        else:
            args[spec.name] = spec.default
    return ConcreteInput(args, provenance="solver")


def _materialize_tensor(entry: TensorModel, rng: random.Random) -> TensorValue:
    np_rng = np.random.default_rng(rng.getrandbits(64))
    dtype = entry.dtype
    shape = entry.shape
    n = math.prod(shape)
    lo = entry.value_min
    hi = entry.value_max
    if entry.value is not None:
        flat = np.full(n, entry.value)
    elif dtype is DType.BOOL:
        flat = np_rng.integers(0, 2, size=n)
    elif dtype in (DType.INT32, DType.INT64, DType.UINT32):
        low = int(lo) if lo is not None else (0 if dtype is DType.UINT32 else -8)
        low = max(low, 0) if dtype is DType.UINT32 else low
        high = max(int(hi) if hi is not None else max(low, 8), low)
        flat = np_rng.integers(low, high + 1, size=n)
    elif dtype is DType.COMPLEX64:
        flat = np_rng.uniform(-4, 4, size=n) + 1j * np_rng.uniform(-4, 4, size=n)
    else:
        low = float(lo) if lo is not None else -4.0
        high = float(hi) if hi is not None else max(low, 4.0)
        flat = np_rng.uniform(low, high, size=n)
    arr = np.asarray(flat).astype(numpy_dtype(dtype)).reshape(shape)
    # realize constrained extremes exactly so guidance matches execution
    if n > 0 and entry.value is None and dtype is not DType.BOOL:
        flat_view = arr.reshape(-1)
        if lo is not None:
            flat_view[0] = lo
        if hi is not None:
            flat_view[n - 1] = hi
        if lo is not None and hi is not None and n == 1:
            flat_view[0] = hi
    if dtype in FLOAT_DTYPES and n > 0 and rng.random() < SPECIAL_VALUE_PROBABILITY:
        count = rng.randint(1, min(3, n))
        positions = [rng.randrange(n) for _ in range(count)]
        flat_view = arr.reshape(-1)
        for pos in positions:
            flat_view[pos] = rng.choice((math.nan, math.inf, -math.inf))
    return TensorValue.from_numpy(arr)


# ---------------------------------------------------------------------------
# One fuzzing step and the campaign loop
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    iteration: int
    path_id: str
    digest: str
    verdict: str  # incorrect-result | incorrectly-rejected | crash | consistent | filtered | unsat
    detail: str = ""
    input_doc: dict | None = None
    f_outcome: dict | None = None
    g_outcome: dict | None = None

    def to_json(self) -> str:
        doc = {
            "iteration": self.iteration,
            "path": self.path_id,
            "constraints": self.digest,
            "verdict": self.verdict,
        }
        if self.detail:
            doc["detail"] = self.detail
        if self.input_doc is not None:
            doc["input"] = self.input_doc
        if self.f_outcome is not None:
            doc["api"] = self.f_outcome
        if self.g_outcome is not None:
            doc["counterpart"] = self.g_outcome
        return json.dumps(doc, sort_keys=True)


def _call_with_retry(invoke):
    """One retry for transport failures, then the iteration is skipped."""
    try:
        return invoke()
    except TransportError:
        return invoke()


def classify_verdict(out_f: ExecutionOutcome, out_g: ExecutionOutcome, eps: float) -> tuple[str, str]:
    if out_f.status in ("crash", "timeout"):
        return "crash", out_f.descriptor
    f_raised = out_f.status == "exception"
    g_ok = out_g.status == "ok"
    if f_raised and g_ok:
        if out_f.exc_class in FILTERED_EXCEPTIONS:
            return "filtered", f"{out_f.exc_class} filtered"
        return "incorrectly-rejected", f"{out_f.exc_class}: {out_f.message}"
    if not f_raised and not g_ok:
        # counterpart-side failure is not a bug in the API under test
        return "filtered", f"counterpart {out_g.status}"
    if f_raised and not g_ok:
        return "consistent", "both rejected"
    kind, dev = compare(out_f, out_g, eps)
    if kind == "inconsistent":
        return "incorrect-result", f"max deviation {dev}"
    return "consistent", ""


def step(
    api: ApiSpec,
    counterpart_program: str,
    ac: AugmentedConstraint,
    harness: Harness,
    state: CampaignState,
    rng: random.Random,
    api_target: str,
    counterpart_target: str,
    eps: float,
    iteration: int,
    extra_patterns=None,
) -> StepRecord:
    # duplicate constraints are enforced by exact tuple rejection during the
    # search; the full augmented set is still hard-asserted on the model
    search_exprs = [c.expr for c in ac.constraints()
                    if c.provenance is not Provenance.DUPLICATE]
    model = solve(
        search_exprs,
        api,
        rng,
        rejected_tuples=state.seen_tuples,
        tuple_of=lambda m: model_property_tuple(m, api),
    )
    if model is None:
        return StepRecord(iteration, ac.base.path_id, ac.digest(), "unsat")
    if not model_satisfies(ac.exprs(), model):  # hard assertion: zero tolerance
        raise AssertionError("solver produced a model violating its constraints")
    x = instantiate(model, rng, api)
    state.record_input(x)

    try:
        out_f = _call_with_retry(lambda: harness.call(api_target, api.name, x))
        out_g = _call_with_retry(
            lambda: harness.eval_program(counterpart_target, counterpart_program, x))
    except TransportError as exc:
        return StepRecord(iteration, ac.base.path_id, ac.digest(), "skipped",
                          f"transport: {exc}", input_doc=encode_input(x))

    if out_f.status == "exception":
        state.record_feedback(parse_error_feedback(out_f.message, x, api, extra_patterns))

    verdict, detail = classify_verdict(out_f, out_g, eps)
    return StepRecord(
        iteration,
        ac.base.path_id,
        ac.digest(),
        verdict,
        detail,
        input_doc=encode_input(x),
        f_outcome=out_f.to_doc(),
        g_outcome=out_g.to_doc(),
    )


@dataclass
class CampaignResult:
    api: str
    records: list[StepRecord]
    verdict_counts: dict[str, int]

    def summary_doc(self) -> dict:
        return {"api": self.api, "iterations": len(self.records),
                "verdicts": dict(sorted(self.verdict_counts.items()))}


def run_campaign(
    api: ApiSpec,
    pool: list[PathConstraint],
    counterpart_program: str,
    validation: ValidationSet,
    harness: Harness,
    rng: random.Random,
    iterations: int,
    api_target: str = "toy-buggy",
    counterpart_target: str = "toy-ref",
    eps: float = 0.1,
    transcript_path: str | Path | None = None,
    extra_patterns=None,
    deadline: float | None = None,
) -> CampaignResult:
    """Run one per-API fuzzing campaign and optionally stream the transcript
    as newline-delimited JSON records."""
    import time

    state = CampaignState(
        api=api,
        naturals=natural_constraints(api),
        property_values=property_value_candidates(api, validation),
    )
    selection = SelectionState(pool)
    records: list[StepRecord] = []
    counts: dict[str, int] = {}
    sink = open(transcript_path, "w") if transcript_path else None
    started = time.monotonic()
    try:
        for iteration in range(1, iterations + 1):
            if deadline is not None and time.monotonic() - started > deadline:
                break
            pc = selection.select(rng)
            ac = augment(pc, state, rng)
            record = step(api, counterpart_program, ac, harness, state, rng,
                          api_target, counterpart_target, eps, iteration,
                          extra_patterns)
            records.append(record)
            counts[record.verdict] = counts.get(record.verdict, 0) + 1
            if sink:
                sink.write(record.to_json() + "\n")
        assert selection.total_selections() == len(records)
    finally:
        if sink:
            sink.close()
    return CampaignResult(api.name, records, counts)
