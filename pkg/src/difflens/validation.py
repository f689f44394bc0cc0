"""Validation-input generation: model-sampled seeds plus property mutation.

Seeds come from the gateway (three samples, one self-debug retry on execution
failure); mutation then enumerates alternative values for one property of one
argument at a time, and the target API filters the survivors by execution.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constraints import ApiSpec, ArgKind, ArgumentSpec
from .gateway import CompletionRequest, Gateway, GatewayError, Tag
from .harness import Harness
from .values import (
    ConcreteInput,
    DType,
    TENSOR_DTYPES,
    TensorValue,
    Value,
    decode_input,
    encode_input,
    numpy_dtype,
)

SEED_SAMPLES = 3

# mutation spaces (ndims implies a canonical reshape; num_element is derived)
NDIMS_SPACE = (0, 1, 2, 3, 4, 5)
DIM_SIZE_SPACE = (1, 2, 3, 5)
INT_SPACE = (-1, 0, 1, 2, 7)
FLOAT_SPACE = (-1.0, 0.0, 0.5, 1.0, 3.14)


@dataclass
class ValidationSet:
    api: str
    inputs: list[ConcreteInput]

    def save(self, path: str | Path):
        doc = {"api": self.api, "inputs": [encode_input(x) for x in self.inputs]}
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "ValidationSet":
        doc = json.loads(Path(path).read_text())
        return cls(doc["api"], [decode_input(x) for x in doc["inputs"]])


# ---------------------------------------------------------------------------
# Literal block format (used in prompts and replies)
# ---------------------------------------------------------------------------

def render_value(v: Value) -> str:
    if isinstance(v, TensorValue):
        arr = v.to_numpy()
        return f"tensor({arr.tolist()!r}, dtype={v.dtype.value})"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, tuple):
        return "[" + ", ".join(str(int(x)) for x in v) + "]"
    raise ValueError(f"cannot render {type(v).__name__}")


def render_input_block(x: ConcreteInput, order: tuple[str, ...] | None = None) -> str:
    names = order if order is not None else tuple(x.args)
    return "\n".join(f"{n} = {render_value(x.args[n])}" for n in names if n in x.args)


_TENSOR_RE = re.compile(r"^tensor\((?P<body>.*),\s*dtype=(?P<dtype>[a-z0-9]+)\)$", re.DOTALL)


class LiteralParseError(ValueError):
    pass


def parse_value(text: str) -> Value:
    text = text.strip()
    m = _TENSOR_RE.match(text)
    if m:
        dtype = DType(m.group("dtype"))
        try:
            nested = ast.literal_eval(m.group("body"))
        except (ValueError, SyntaxError) as exc:
            raise LiteralParseError(f"bad tensor literal: {exc}") from exc
        arr = np.asarray(nested)
        if arr.dtype.kind not in "biufc":
            raise LiteralParseError("tensor literals must be numeric")
        return TensorValue.from_numpy(arr.astype(numpy_dtype(dtype)))
    if text in ("true", "True"):
        return True
    if text in ("false", "False"):
        return False
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise LiteralParseError(f"bad literal {text!r}") from exc
    if isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, list) and all(isinstance(i, int) for i in value):
        return tuple(value)
    raise LiteralParseError(f"unsupported literal {text!r}")


def parse_input_block(reply: str, api: ApiSpec) -> ConcreteInput:
    """Parse a fenced `name = value` block into a ConcreteInput."""
    block = _fenced_block(reply)
    if block is None:
        raise LiteralParseError("reply carries no fenced block")
    values: dict[str, Value] = {}
    for raw in block.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise LiteralParseError(f"not an assignment: {line!r}")
        name, _, literal = line.partition("=")
        name = name.strip()
        if name not in api.arg_names:
            raise LiteralParseError(f"unknown argument {name!r}")
        values[name] = parse_value(literal)
    for spec in api.args:
        if spec.name not in values:
            if spec.default is None:
                raise LiteralParseError(f"missing argument {spec.name!r}")
            values[spec.name] = spec.default  # type: ignore[assignment]
    return ConcreteInput(values, provenance="llm")


def _fenced_block(reply: str) -> str | None:
    blocks: list[list[str]] = []
    current: list[str] | None = None
    for line in reply.splitlines():
        if line.strip().startswith("```"):
            if current is None:
                current = []
            else:
                blocks.append(current)
                current = None
            continue
        if current is not None:
            current.append(line)
    if not blocks:
        return None
    return "\n".join(blocks[-1])


# ---------------------------------------------------------------------------
# Seed sampling
# ---------------------------------------------------------------------------

def seed_prompt(api: ApiSpec, library: str, sample_index: int) -> str:
    arg_names = ", ".join(a.name for a in api.args)
    kinds = "; ".join(f"{a.name}: {a.kind.value}" for a in api.args)
    return (
        f"Produce one valid example input for an operation of the `{library}` library.\n"
        f"Step 1: assume `{library}` is available.\n"
        f"Step 2: generate a literal for each parameter, named exactly: {arg_names}.\n"
        f"Step 3: the call {api.name}({arg_names}) must execute without error.\n"
        f"Parameter kinds: {kinds}.\n"
        f"Sample {sample_index} of {SEED_SAMPLES}.\n"
        "Reply with one `name = value` line per parameter in a fenced code block.\n"
        "Value forms: tensor(<nested list>, dtype=<name>), integer, float, "
        "true/false, \"string\", or [int, ...]."
    )


def sample_seed_inputs(
    api: ApiSpec,
    gateway: Gateway,
    harness: Harness,
    target: str,
    library: str = "toy",
    n: int = SEED_SAMPLES,
) -> list[ConcreteInput]:
    """Up to n executable seed inputs; one self-debug retry per failed sample."""
    seeds: list[ConcreteInput] = []
    for index in range(1, n + 1):
        prompt = seed_prompt(api, library, index)
        try:
            reply = gateway.complete(CompletionRequest(
                messages=(("user", prompt),), tag=Tag.VALIDATE_INPUT))
        except GatewayError:
            continue
        try:
            candidate = parse_input_block(reply, api)
        except LiteralParseError:
            continue  # parse failures get no self-debug round
        outcome = harness.call(target, api.name, candidate)
        if outcome.ok:
            seeds.append(candidate)
            continue
        error_text = outcome.message if outcome.status == "exception" else outcome.descriptor
        followup = (
            "[Error Message]\n"
            f"{error_text}\n"
            "The input above failed; repair it and reply in the same fenced format."
        )
        try:
            repaired_reply = gateway.complete(CompletionRequest(
                messages=(("user", prompt), ("assistant", reply), ("user", followup)),
                tag=Tag.SELF_DEBUG))
            repaired = parse_input_block(repaired_reply, api)
        except (GatewayError, LiteralParseError):
            continue
        if harness.call(target, api.name, repaired).ok:
            seeds.append(repaired)
    return seeds


# ---------------------------------------------------------------------------
# Property mutation
# ---------------------------------------------------------------------------

def _cast_tensor(t: TensorValue, dtype: DType) -> TensorValue:
    arr = t.to_numpy()
    target = numpy_dtype(dtype)
    if arr.dtype.kind == "c" and target.kind != "c":
        arr = arr.real
    if arr.dtype.kind == "f" and target.kind in "iu":
        arr = np.nan_to_num(arr)
    return TensorValue.from_numpy(arr.astype(target))


def _reshape_tensor(t: TensorValue, shape: tuple[int, ...]) -> TensorValue:
    arr = t.to_numpy()
    return TensorValue.from_numpy(np.resize(arr, shape))


def _canonical_shape(rank: int) -> tuple[int, ...]:
    return (2,) * rank


def _tensor_mutants(name: str, t: TensorValue, x: ConcreteInput) -> list[ConcreteInput]:
    mutants = []
    for dt in TENSOR_DTYPES:
        if dt is not t.dtype:
            mutants.append(x.replace_arg(name, _cast_tensor(t, dt), "mutation"))
    for rank in NDIMS_SPACE:
        if rank != t.ndims:
            mutants.append(x.replace_arg(name, _reshape_tensor(t, _canonical_shape(rank)), "mutation"))
    for axis in range(t.ndims):
        for size in DIM_SIZE_SPACE:
            if size != t.shape[axis]:
                shape = t.shape[:axis] + (size,) + t.shape[axis + 1:]
                mutants.append(x.replace_arg(name, _reshape_tensor(t, shape), "mutation"))
    return mutants


def property_mutate(x: ConcreteInput, api: ApiSpec) -> list[ConcreteInput]:
    """One mutant per candidate property value, one argument at a time.

    Continuous value spaces are sampled down to five candidates; string and
    other non-enumerable arguments are left untouched.
    """
    mutants: list[ConcreteInput] = []
    for spec in api.args:
        value = x.args.get(spec.name)
        if spec.kind is ArgKind.TENSOR and isinstance(value, TensorValue):
            mutants.extend(_tensor_mutants(spec.name, value, x))
        elif spec.kind is ArgKind.INT:
            mutants.extend(
                x.replace_arg(spec.name, v, "mutation") for v in INT_SPACE if v != value
            )
        elif spec.kind is ArgKind.FLOAT:
            mutants.extend(
                x.replace_arg(spec.name, v, "mutation") for v in FLOAT_SPACE if v != value
            )
        elif spec.kind is ArgKind.BOOL:
            mutants.append(x.replace_arg(spec.name, not value, "mutation"))
        # string / int-list / opaque arguments are not mutated
    return mutants


def build_validation_set(
    api: ApiSpec,
    gateway: Gateway,
    harness: Harness,
    target: str,
    library: str = "toy",
) -> ValidationSet | None:
    """Seeds plus executable mutants; None when no seed survives (API skipped)."""
    seeds = sample_seed_inputs(api, gateway, harness, target, library)
    if not seeds:
        return None
    inputs = list(seeds)
    for seed in seeds:
        for mutant in property_mutate(seed, api):
            if harness.call(target, api.name, mutant).ok:
                inputs.append(mutant)
    return ValidationSet(api.name, inputs)
