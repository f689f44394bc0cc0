"""Counterpart synthesis and validation.

A counterpart is program text in the counterpart library's dialect, never
parsed by the engine; it is valid when it neither crashes nor deviates from
the target API by more than epsilon on any validation input. Invalid attempts
are refined with execution feedback, within a bounded budget of rounds and
iterations per round.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constraints import ApiSpec
from .gateway import CompletionRequest, Gateway, GatewayError, Tag
from .harness import ExecutionOutcome, Harness
from .validation import ValidationSet, render_input_block
from .values import ConcreteInput, TensorValue, Value

DEFAULT_EPSILON = 0.1
SYNTHESIS_ROUNDS = 3
ITERATIONS_PER_ROUND = 5  # one synthesis plus four refinements
EXAMPLE_INPUTS = 3

# exception classes that do not count as incorrect rejections
FILTERED_EXCEPTIONS = ("SyntaxError", "TypeError", "RuntimeError")


@dataclass
class ComparisonCase:
    input: ConcreteInput
    kind: str  # consistent | inconsistent | crash
    max_dev: float = 0.0
    expected: str = ""
    actual: str = ""
    error: str = ""


@dataclass
class Counterpart:
    api: str
    program: str
    status: str  # valid | rejected
    round: int = 0
    iteration: int = 0

    @property
    def valid(self) -> bool:
        return self.status == "valid"

    def save(self, path: str | Path, transcript: list[dict] | None = None):
        doc = {
            "api": self.api,
            "program": self.program,
            "status": self.status,
            "round": self.round,
            "iteration": self.iteration,
            "transcript": transcript or [],
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "Counterpart":
        doc = json.loads(Path(path).read_text())
        return cls(doc["api"], doc["program"], doc["status"], doc["round"], doc["iteration"])


# ---------------------------------------------------------------------------
# Output comparison (the epsilon oracle)
# ---------------------------------------------------------------------------

def _as_array(v: Value) -> np.ndarray | None:
    if isinstance(v, TensorValue):
        return v.to_numpy()
    if isinstance(v, (bool, int, float)):
        return np.asarray(v)
    if isinstance(v, tuple):
        return np.asarray(v)
    return None  # strings handled separately


def _elementwise_dev(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        return math.inf
    if a.size == 0:
        return 0.0
    kind = "c" if (a.dtype.kind == "c" or b.dtype.kind == "c") else "f"
    wa = a.astype(np.complex128 if kind == "c" else np.float64)
    wb = b.astype(np.complex128 if kind == "c" else np.float64)
    nan_a, nan_b = np.isnan(wa), np.isnan(wb)
    inf_a, inf_b = np.isinf(wa), np.isinf(wb)
    dev = np.zeros(a.shape, dtype=np.float64)
    both_fine = ~(nan_a | nan_b | inf_a | inf_b)
    dev[both_fine] = np.abs(wa[both_fine] - wb[both_fine])
    # NaN matches NaN; infinities match by sign; any other mix is divergence
    dev[nan_a ^ nan_b] = math.inf
    inf_mismatch = (inf_a | inf_b) & ~(nan_a | nan_b) & ~((inf_a & inf_b) & (wa == wb))
    dev[inf_mismatch] = math.inf
    return float(dev.max()) if dev.size else 0.0


def output_deviation(out_f: tuple[Value, ...], out_g: tuple[Value, ...]) -> float:
    """Maximum elementwise deviation between two output tuples (inf when the
    outputs are not comparable)."""
    if len(out_f) != len(out_g):
        return math.inf
    worst = 0.0
    for vf, vg in zip(out_f, out_g):
        if isinstance(vf, str) or isinstance(vg, str):
            if vf != vg:
                return math.inf
            continue
        a, b = _as_array(vf), _as_array(vg)
        if a is None or b is None:
            return math.inf
        if a.size != b.size:
            return math.inf
        worst = max(worst, _elementwise_dev(a, b))
    return worst


def compare(out_f: ExecutionOutcome, out_g: ExecutionOutcome, eps: float) -> tuple[str, float]:
    """Classify a pair of outcomes: crash when only the counterpart failed,
    inconsistent on numeric deviation beyond eps or status mismatch,
    consistent otherwise."""
    f_raised = out_f.status != "ok"
    g_raised = out_g.status != "ok"
    if g_raised and not f_raised:
        return "crash", math.inf
    if f_raised and not g_raised:
        return "inconsistent", math.inf
    if f_raised and g_raised:
        return "consistent", 0.0
    dev = output_deviation(out_f.outputs, out_g.outputs)
    if dev > eps or math.isnan(dev):
        return "inconsistent", dev
    return "consistent", dev


def _render_outputs(outcome: ExecutionOutcome) -> str:
    if outcome.status != "ok":
        return f"<{outcome.status}: {outcome.exc_class or outcome.descriptor} {outcome.message}>"
    parts = []
    for v in outcome.outputs:
        if isinstance(v, TensorValue):
            parts.append(f"tensor({v.to_numpy().tolist()!r}, dtype={v.dtype.value})")
        else:
            parts.append(repr(v))
    return "; ".join(parts)


def validate_counterpart(
    program: str,
    api: ApiSpec,
    inputs: list[ConcreteInput],
    f_outcomes: list[ExecutionOutcome],
    harness: Harness,
    counterpart_target: str,
    eps: float,
) -> list[ComparisonCase]:
    cases: list[ComparisonCase] = []
    for x, out_f in zip(inputs, f_outcomes):
        out_g = harness.eval_program(counterpart_target, program, x)
        kind, dev = compare(out_f, out_g, eps)
        if kind == "crash":
            error = out_g.message if out_g.status == "exception" else out_g.descriptor
            cases.append(ComparisonCase(x, "crash", error=f"{out_g.exc_class or out_g.status}: {error}"))
        elif kind == "inconsistent":
            cases.append(ComparisonCase(
                x, "inconsistent", max_dev=dev,
                expected=_render_outputs(out_f), actual=_render_outputs(out_g)))
        else:
            cases.append(ComparisonCase(x, "consistent", max_dev=dev))
    return cases


# ---------------------------------------------------------------------------
# Prompts
# ---------------------------------------------------------------------------

def synthesis_prompt(api: ApiSpec, examples: list[ConcreteInput],
                     counterpart_library: str, round_index: int) -> str:
    arg_names = ", ".join(a.name for a in api.args)
    blocks = "\n\n".join(
        "```\n" + render_input_block(x, tuple(a.name for a in api.args)) + "\n```"
        for x in examples
    )
    return (
        f"Implement a drop-in equivalent of the operation `{api.name}({arg_names})` "
        f"using only operations from the `{counterpart_library}` namespace.\n"
        f"It must accept the same arguments and produce matching results on "
        f"inputs like these examples:\n\n{blocks}\n\n"
        f"Round {round_index}.\n"
        "Reply with a fenced code block defining `def counterpart("
        f"{arg_names})`. Use only `{counterpart_library}.*` calls and plain "
        "arithmetic; no imports."
    )


def feedback_prompt(cases: list[ComparisonCase], api: ApiSpec, rng: random.Random) -> str:
    """Execution feedback: crash cases deduplicated by error message plus at
    most one randomly selected inconsistency."""
    parts: list[str] = [
        "The counterpart above is not yet equivalent. Observed failures:"
    ]
    seen_errors: set[str] = set()
    order = tuple(a.name for a in api.args)
    for case in cases:
        if case.kind != "crash" or case.error in seen_errors:
            continue
        seen_errors.add(case.error)
        parts.append("")
        parts.append("[Crash on Input]")
        parts.append(render_input_block(case.input, order))
        parts.append("[Error Message]")
        parts.append(case.error)
    inconsistent = [c for c in cases if c.kind == "inconsistent"]
    if inconsistent:
        chosen = inconsistent[rng.randrange(len(inconsistent))]
        parts.append("")
        parts.append("[Inconsistent on Input]")
        parts.append(render_input_block(chosen.input, order))
        parts.append("[Expected Output]")
        parts.append(chosen.expected)
        parts.append("[Actual Output]")
        parts.append(chosen.actual)
    parts.append("")
    parts.append("Revise the counterpart. Reply with the full corrected "
                 "`def counterpart(...)` in a fenced code block.")
    return "\n".join(parts)


def extract_program(reply: str) -> str | None:
    blocks: list[list[str]] = []
    current: list[str] | None = None
    for line in reply.splitlines():
        stripped = line.strip()
        if stripped.startswith("```"):
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
    text = "\n".join(blocks[-1]).strip()
    return text or None


# ---------------------------------------------------------------------------
# Synthesis loop
# ---------------------------------------------------------------------------

def synthesize(
    api: ApiSpec,
    validation: ValidationSet,
    gateway: Gateway,
    harness: Harness,
    rng: random.Random,
    api_target: str,
    counterpart_target: str,
    counterpart_library: str = "ref",
    eps: float = DEFAULT_EPSILON,
    rounds: int = SYNTHESIS_ROUNDS,
    iterations: int = ITERATIONS_PER_ROUND,
) -> tuple[Counterpart, list[dict]]:
    """Search for a counterpart valid over the whole validation set.

    Budget: `rounds` fresh starts, each with one synthesis and
    `iterations - 1` feedback refinements. Returns the first valid
    counterpart, or the last attempt marked rejected.
    """
    if not validation.inputs:
        raise ValueError("validation set must be non-empty")
    inputs = validation.inputs
    f_outcomes = [harness.call(api_target, api.name, x) for x in inputs]
    examples = inputs[:EXAMPLE_INPUTS]
    transcript: list[dict] = []
    last_program = ""

    for round_index in range(1, rounds + 1):
        prompt = synthesis_prompt(api, examples, counterpart_library, round_index)
        messages: list[tuple[str, str]] = [("user", prompt)]
        program: str | None = None
        for iteration in range(1, iterations + 1):
            tag = Tag.SYNTHESIZE if iteration == 1 else Tag.REFINE
            try:
                reply = gateway.complete(CompletionRequest(tuple(messages), tag))
            except GatewayError:
                transcript.append({"round": round_index, "iteration": iteration,
                                   "result": "gateway-error"})
                continue
            program = extract_program(reply)
            if program is None:
                transcript.append({"round": round_index, "iteration": iteration,
                                   "result": "unparseable"})
                continue
            last_program = program
            cases = validate_counterpart(
                program, api, inputs, f_outcomes, harness, counterpart_target, eps)
            bad = [c for c in cases if c.kind != "consistent"]
            transcript.append({
                "round": round_index,
                "iteration": iteration,
                "result": "valid" if not bad else "invalid",
                "crashes": sum(1 for c in bad if c.kind == "crash"),
                "inconsistencies": sum(1 for c in bad if c.kind == "inconsistent"),
            })
            if not bad:
                return Counterpart(api.name, program, "valid",
                                   round_index, iteration), transcript
            messages.append(("assistant", reply))
            messages.append(("user", feedback_prompt(cases, api, rng)))
    return Counterpart(api.name, last_program, "rejected", rounds, iterations), transcript
