"""Per-path input-constraint extraction from function IR.

Conditions come from branch statements and the four sanity-check forms; data
flow from API inputs is tracked along each path so conditions over locals can
be rewritten over inputs. Conditions that end up containing external calls are
handed to the gateway for constraint inference, gated by three validity
checks; statements whose inference fails are skipped, never the whole path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .constraints import (
    ApiSpec,
    ArgKind,
    ArgumentSpec,
    Call,
    ConstraintExpr,
    InputConstraint,
    InSet,
    Lit,
    Not,
    PathConstraint,
    Prop,
    PropertyKind,
    Provenance,
    Solvability,
    TENSOR_PROPERTIES,
    classify,
    has_opaque_call,
    normalize,
    referenced_args,
    to_sexpr,
    walk,
)
from .gateway import CompletionRequest, Gateway, GatewayError, Tag
from .grammar import (
    ConstraintSyntaxError,
    UndefinedPropertyError,
    parse_constraint,
    to_infix,
)
from .ir import (
    Assign,
    CallStmt,
    CheckKind,
    ExecutionPath,
    FunctionIR,
    If,
    Loop,
    SanityCheck,
    Stmt,
    enumerate_paths,
)

log = logging.getLogger(__name__)

MAX_INFERENCE_ATTEMPTS = 3


# ---------------------------------------------------------------------------
# Condition extraction (sanity-check rules + branch conditions)
# ---------------------------------------------------------------------------

def extract_condition(stmt: Stmt) -> ConstraintExpr | None:
    """Condition carried by a sanity check or an If statement.

    assert(a) -> a; torch_check(a) -> a; op_requires(a1, a2, a3) -> a2;
    args_to_matching_eager([a1], a2, [a3]) -> `a1.dtype in [a3]`.
    """
    if isinstance(stmt, If):
        return stmt.cond
    if not isinstance(stmt, SanityCheck):
        return None
    if stmt.kind in (CheckKind.ASSERT, CheckKind.TORCH_CHECK):
        return stmt.args[0] if stmt.args else None
    if stmt.kind is CheckKind.OP_REQUIRES:
        return stmt.args[1] if len(stmt.args) > 1 else None
    if stmt.kind is CheckKind.ARGS_TO_MATCHING_EAGER:
        return _matching_eager_condition(stmt.args)
    return None


def _matching_eager_condition(args: tuple[ConstraintExpr, ...]) -> ConstraintExpr | None:
    if len(args) < 3:
        return None
    first = _unwrap_list(args[0])
    dtypes = _unwrap_list(args[2])
    if not first or not isinstance(first[0], Prop):
        return None
    subject = first[0]
    elems = tuple(e.value for e in dtypes if isinstance(e, Lit))
    if not elems:
        return None
    return InSet(Prop(subject.arg, PropertyKind.DTYPE), elems)


def _unwrap_list(expr: ConstraintExpr) -> tuple[ConstraintExpr, ...]:
    if isinstance(expr, Call) and expr.name == "list":
        return expr.args
    if isinstance(expr, Lit) and isinstance(expr.value, tuple):
        return tuple(Lit(v) for v in expr.value)
    return (expr,)


# ---------------------------------------------------------------------------
# Data-flow tracking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowTrace:
    """Defining statements from API inputs down to one variable, in order."""

    steps: tuple[tuple[str, Stmt], ...]  # (variable, defining statement)

    def render(self) -> str:
        lines = []
        for var, stmt in self.steps:
            if isinstance(stmt, Assign):
                lines.append(f"{var} = {to_infix(stmt.expr)}")
            elif isinstance(stmt, CallStmt):
                args = ", ".join(to_infix(a) for a in stmt.args)
                lines.append(f"{var} = {stmt.callee}({args})")
        return "\n".join(lines)


def track_related(path: ExecutionPath, inputs: frozenset[str] | set[str]) -> dict[str, FlowTrace]:
    """Variables related to API inputs along the path, with replayable traces.

    A variable is related iff its definition references an input or another
    related variable; the trace lists the chain of defining statements.
    """
    related: dict[str, tuple[Stmt, tuple[str, ...]]] = {}

    def deps_of(expr_args) -> tuple[set[str], bool]:
        used: set[str] = set()
        for e in expr_args:
            used |= referenced_args(e)
        touching = bool(used & set(inputs)) or bool(used & related.keys())
        return used, touching

    for step in path.steps:
        stmt = step.stmt
        if isinstance(stmt, Assign):
            used, touching = deps_of([stmt.expr])
            if touching:
                related[stmt.target] = (stmt, tuple(sorted(used & related.keys())))
            else:
                related.pop(stmt.target, None)  # redefinition severs relatedness
        elif isinstance(stmt, CallStmt) and stmt.target:
            used, touching = deps_of(stmt.args)
            if touching:
                related[stmt.target] = (stmt, tuple(sorted(used & related.keys())))
            else:
                related.pop(stmt.target, None)

    traces: dict[str, FlowTrace] = {}

    def build(var: str, seen: tuple[str, ...] = ()) -> tuple[tuple[str, Stmt], ...]:
        if var in seen:
            return ()
        stmt, upstream = related[var]
        steps: list[tuple[str, Stmt]] = []
        for dep in upstream:
            for item in build(dep, seen + (var,)):
                if item not in steps:
                    steps.append(item)
        steps.append((var, stmt))
        return tuple(steps)

    for var in related:
        traces[var] = FlowTrace(build(var))
    return traces


# ---------------------------------------------------------------------------
# Constraint construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnresolvedConstraint:
    """A condition whose input rewrite still contains external calls; packaged
    with the elements needed to prompt constraint inference."""

    condition: ConstraintExpr
    flow: FlowTrace
    arg_types: tuple[ArgumentSpec, ...]
    candidate_properties: tuple[PropertyKind, ...]

    def __post_init__(self):
        if not (has_opaque_call(self.condition) or any(
            isinstance(s, CallStmt) or (isinstance(s, Assign) and has_opaque_call(s.expr))
            for _, s in self.flow.steps
        )):
            raise ValueError("unresolved constraints must involve an external call")


@dataclass(frozen=True)
class Constructed:
    """Outcome of constraint construction for one condition."""

    status: str  # pure | unresolved | irrelevant
    expr: ConstraintExpr | None = None
    unresolved: UnresolvedConstraint | None = None


def _substitute(expr: ConstraintExpr, defs: dict[str, ConstraintExpr], inputs) -> ConstraintExpr:
    """Rewrite locals by their definitions until only inputs remain."""
    if isinstance(expr, Prop):
        if expr.arg in inputs:
            return expr
        if expr.arg not in defs:
            return expr
        replacement = _substitute(defs[expr.arg], defs, inputs)
        if expr.kind is PropertyKind.VALUE:
            return replacement
        if isinstance(replacement, Prop) and replacement.kind is PropertyKind.VALUE:
            return Prop(replacement.arg, expr.kind, expr.index)
        # property of a computed expression: opaque until inferred
        name = "prop:" + (
            f"shape[{expr.index}]" if expr.kind is PropertyKind.SHAPE_I else expr.kind.value
        )
        return Call(name, (replacement,))
    if isinstance(expr, Lit):
        return expr
    if isinstance(expr, Call):
        return Call(expr.name, tuple(_substitute(a, defs, inputs) for a in expr.args))
    if isinstance(expr, Not):
        return Not(_substitute(expr.arg, defs, inputs))
    if isinstance(expr, InSet):
        return InSet(_substitute(expr.item, defs, inputs), expr.elems)
    # Arith / Cmp / BoolOp: rebuild with substituted children
    from dataclasses import fields, replace

    updates = {}
    for f in fields(expr):
        v = getattr(expr, f.name)
        if isinstance(v, ConstraintExpr):
            updates[f.name] = _substitute(v, defs, inputs)
        elif isinstance(v, tuple) and v and isinstance(v[0], ConstraintExpr):
            updates[f.name] = tuple(_substitute(a, defs, inputs) for a in v)
    return replace(expr, **updates)


def construct_constraint(
    cond: ConstraintExpr,
    related: dict[str, FlowTrace],
    api: ApiSpec,
) -> Constructed:
    """Rewrite an extracted condition over API inputs.

    Irrelevant when the condition touches neither inputs nor related locals;
    pure when the rewrite is free of external calls; unresolved otherwise.
    """
    inputs = api.arg_names
    used = referenced_args(cond)
    touched_inputs = used & inputs
    touched_locals = used & related.keys()
    if not touched_inputs and not touched_locals:
        return Constructed("irrelevant")

    defs: dict[str, ConstraintExpr] = {}
    flow_steps: list[tuple[str, Stmt]] = []
    for var in sorted(touched_locals):
        for item in related[var].steps:
            if item not in flow_steps:
                flow_steps.append(item)
    for var, stmt in flow_steps:
        if isinstance(stmt, Assign):
            defs[var] = stmt.expr
        elif isinstance(stmt, CallStmt):
            defs[var] = Call(stmt.callee, stmt.args)

    rewritten = _substitute(cond, defs, inputs)
    if not has_opaque_call(rewritten):
        return Constructed("pure", expr=rewritten)

    involved = sorted((used & inputs) | _inputs_in_flow(flow_steps, inputs))
    arg_types = tuple(api.arg(n) for n in involved) or api.args
    tensor_involved = any(a.kind is ArgKind.TENSOR for a in arg_types)
    unresolved = UnresolvedConstraint(
        condition=cond,
        flow=FlowTrace(tuple(flow_steps)),
        arg_types=arg_types,
        candidate_properties=TENSOR_PROPERTIES if tensor_involved else (),
    )
    return Constructed("unresolved", unresolved=unresolved)


def _inputs_in_flow(flow_steps, inputs) -> set[str]:
    found: set[str] = set()
    for _, stmt in flow_steps:
        exprs = [stmt.expr] if isinstance(stmt, Assign) else list(getattr(stmt, "args", ()))
        for e in exprs:
            found |= referenced_args(e) & inputs
    return found


# ---------------------------------------------------------------------------
# Constraint inference
# ---------------------------------------------------------------------------

_INFERENCE_INSTRUCTIONS = """\
Derive one boolean input constraint that a test input must satisfy for the
condition below to hold. Rules:
- the constraint may reference only the listed API inputs and their listed
  properties, never local variables or any function call;
- write a single expression using and/or/not, comparison operators,
  arithmetic, min/max, and `in [...]` dtype membership;
- answer with the final constraint inside a fenced code block."""

_SELF_VALIDATION_MESSAGE = """\
Check the analysis above before answering. The final constraint must be a
boolean expression mentioning only the listed API inputs and their declared
properties; drop anything the given condition does not actually require, and
confirm each argument name is spelled exactly as given. Answer with the
corrected constraint in a fenced code block."""


def build_inference_prompt(u: UnresolvedConstraint) -> str:
    parts = [_INFERENCE_INSTRUCTIONS, ""]
    parts.append("[Condition]")
    parts.append(to_infix(u.condition))
    parts.append("")
    parts.append("[Execution Trace]")
    parts.append(u.flow.render() or "(none)")
    parts.append("")
    parts.append("[Argument Types]")
    for spec in u.arg_types:
        parts.append(f"{spec.name}: {spec.kind.value}")
    if u.candidate_properties:
        parts.append("")
        parts.append("[Candidate Tensor Properties]")
        parts.append(", ".join(_property_label(p) for p in u.candidate_properties))
    return "\n".join(parts)


def _property_label(p: PropertyKind) -> str:
    return p.value


def extract_reply_expression(reply: str) -> str | None:
    """Pull the constraint text out of a fenced block; surrounding free text
    is ignored. Falls back to the last non-empty line."""
    fence = None
    lines = reply.splitlines()
    blocks: list[list[str]] = []
    current: list[str] | None = None
    for line in lines:
        if line.strip().startswith("```"):
            if current is None:
                current = []
            else:
                blocks.append(current)
                current = None
            continue
        if current is not None:
            current.append(line)
    if blocks:
        text = "\n".join(blocks[-1]).strip()
        return text or None
    for line in reversed(lines):
        if line.strip():
            return line.strip()
    return None


class CheckFailure(Exception):
    def __init__(self, check: int, reason: str):
        super().__init__(f"check {check}: {reason}")
        self.check = check


def validate_inferred(text: str, api: ApiSpec, locals_in_scope: set[str]) -> ConstraintExpr:
    """The three validity checks for an inferred constraint.

    1. references at least one API input and no local variables;
    2. no undefined symbols: unknown names, properties, or function calls;
    3. grammatically well-formed and solver-ready.
    """
    try:
        expr = parse_constraint(text)
    except UndefinedPropertyError as exc:
        raise CheckFailure(2, str(exc)) from exc
    except ConstraintSyntaxError as exc:
        raise CheckFailure(3, str(exc)) from exc

    inputs = api.arg_names
    referenced = referenced_args(expr)
    if not referenced & inputs:
        raise CheckFailure(1, "constraint references no API input")
    strangers = referenced - inputs
    if strangers & locals_in_scope:
        raise CheckFailure(1, f"constraint involves local variables {sorted(strangers & locals_in_scope)}")
    if strangers:
        raise CheckFailure(2, f"undefined variable names {sorted(strangers)}")
    for node in walk(expr):
        if isinstance(node, Call):
            raise CheckFailure(2, f"undefined function call {node.name!r}")
    if classify(expr, inputs) is not Solvability.SOLVABLE:
        raise CheckFailure(3, "constraint is not solver-ready")
    return expr


def infer_constraint(
    u: UnresolvedConstraint,
    gateway: Gateway,
    api: ApiSpec,
    locals_in_scope: set[str],
    source: tuple[str, int] | None = None,
) -> InputConstraint | None:
    """Infer a solvable constraint for an unresolved condition.

    Each attempt is an inference round followed by a self-validation round;
    up to MAX_INFERENCE_ATTEMPTS attempts, then the statement is skipped.
    """
    prompt = build_inference_prompt(u)
    for attempt in range(1, MAX_INFERENCE_ATTEMPTS + 1):
        attempt_header = f"(attempt {attempt})\n" if attempt > 1 else ""
        try:
            first = gateway.complete(CompletionRequest(
                messages=(("user", attempt_header + prompt),),
                tag=Tag.INFER_CONSTRAINT,
            ))
            final = gateway.complete(CompletionRequest(
                messages=(
                    ("user", attempt_header + prompt),
                    ("assistant", first),
                    ("user", _SELF_VALIDATION_MESSAGE),
                ),
                tag=Tag.SELF_VALIDATE,
            ))
        except GatewayError as exc:
            log.debug("inference attempt %d failed in transit: %s", attempt, exc)
            continue
        text = extract_reply_expression(final)
        if text is None:
            continue
        try:
            expr = validate_inferred(text, api, locals_in_scope)
        except CheckFailure as exc:
            log.debug("inference attempt %d rejected: %s", attempt, exc)
            continue
        return InputConstraint(normalize(expr), Provenance.INFERRED, source)
    return None


# ---------------------------------------------------------------------------
# Whole-IR extraction
# ---------------------------------------------------------------------------

def extract_path_constraints(
    ir: FunctionIR,
    gateway: Gateway | None = None,
    origin: str = "api",
    path_cap: int | None = None,
) -> list[PathConstraint]:
    """Path constraints for every enumerated path, deduplicated by canonical
    hash. With no gateway (or one that always fails) extraction degrades to
    purely static constraints."""
    api = ir.signature
    inputs = api.arg_names
    kwargs = {} if path_cap is None else {"cap": path_cap}
    paths = enumerate_paths(ir, **kwargs)

    seen: dict[str, PathConstraint] = {}
    ordered: list[PathConstraint] = []
    inference_cache: dict[str, InputConstraint | None] = {}

    for path in paths:
        related = track_related(path, inputs)
        locals_in_scope = set(related.keys())
        constraints: list[InputConstraint] = []
        for index, step in enumerate(path.steps):
            stmt = step.stmt
            if isinstance(stmt, Loop):
                continue  # loop conditions are ignored after single unroll
            cond = extract_condition(stmt)
            if cond is None:
                continue
            if isinstance(stmt, If) and step.taken is False:
                cond = Not(cond)
            built = construct_constraint(cond, related, api)
            if built.status == "irrelevant":
                continue
            source = (path.path_id, index)
            if built.status == "pure":
                expr = normalize(built.expr)
                if classify(expr, inputs) is Solvability.SOLVABLE:
                    constraints.append(InputConstraint(expr, Provenance.STATIC, source))
                continue
            if gateway is None:
                continue
            cache_key = build_inference_prompt(built.unresolved)
            if cache_key in inference_cache:
                cached = inference_cache[cache_key]
                if cached is not None:
                    constraints.append(InputConstraint(cached.expr, cached.provenance, source))
                continue
            inferred = infer_constraint(built.unresolved, gateway, api, locals_in_scope, source)
            inference_cache[cache_key] = inferred
            if inferred is not None:
                constraints.append(inferred)

        # dedup within the path, preserving first occurrence
        unique: dict[str, InputConstraint] = {}
        for c in constraints:
            unique.setdefault(c.key(), c)
        pc = PathConstraint(tuple(unique.values()), origin=origin, path_id=path.path_id)
        if pc.canonical_hash not in seen:
            seen[pc.canonical_hash] = pc
            ordered.append(pc)
    return ordered


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

def constraints_to_doc(api: str, pool: list[PathConstraint]) -> dict:
    return {
        "api": api,
        "path_constraints": [
            {
                "path_id": pc.path_id,
                "origin": pc.origin,
                "hash": pc.canonical_hash,
                "constraints": [
                    {"sexpr": to_sexpr(c.expr), "provenance": c.provenance.value}
                    for c in pc.constraints
                ],
            }
            for pc in pool
        ],
    }


def constraints_from_doc(doc: dict) -> list[PathConstraint]:
    from .constraints import parse_sexpr

    pool = []
    for entry in doc["path_constraints"]:
        constraints = tuple(
            InputConstraint(parse_sexpr(c["sexpr"]), Provenance(c["provenance"]))
            for c in entry["constraints"]
        )
        pool.append(PathConstraint(constraints, origin=entry["origin"],
                                   path_id=entry["path_id"]))
    return pool


def write_extraction_report(api: str, pool: list[PathConstraint], path) -> None:
    """Human-readable per-API report: every path constraint in prefix form
    with provenance tags, plus the summary counts."""
    lines = [f"api: {api}", f"unique path constraints: {len(pool)}"]
    sizes = [len(pc.constraints) for pc in pool]
    mean = sum(sizes) / len(sizes) if sizes else 0.0
    lines.append(f"input constraints per path: {mean:.2f}")
    for pc in pool:
        lines.append("")
        lines.append(f"[{pc.path_id}] origin={pc.origin} hash={pc.canonical_hash[:16]}")
        for c in pc.constraints:
            lines.append(f"  {to_sexpr(c.expr)}  ; {c.provenance.value}")
    from pathlib import Path

    Path(path).write_text("\n".join(lines) + "\n")
