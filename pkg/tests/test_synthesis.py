"""Counterpart validation (the epsilon oracle) and the synthesis loop."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from difflens.constraints import ApiSpec, ArgKind, ArgumentSpec
from difflens.gateway import Gateway, MockBackend, Tag
from difflens.harness import ExecutionOutcome
from difflens.synthesis import (
    ITERATIONS_PER_ROUND,
    SYNTHESIS_ROUNDS,
    compare,
    feedback_prompt,
    ComparisonCase,
    output_deviation,
    synthesize,
    validate_counterpart,
)
from difflens.toylib import REFERENCE_COUNTERPARTS
from difflens.validation import ValidationSet
from difflens.values import ConcreteInput, DType, TensorValue


def ok(*outputs):
    return ExecutionOutcome("ok", outputs=tuple(outputs))


def t(nested, dtype=DType.FLOAT32):
    return TensorValue.of(nested, dtype)


class TestCompare:
    def test_uint32_sort_order_divergence(self, harness):
        """The motivating case: a descending uint32 pair answered differently."""
        x = ConcreteInput({"x": t([10, 9], DType.UINT32)})
        buggy = harness.call("toy-buggy", "is_nondecreasing", x)
        fixed = harness.call("toy-ref", "is_nondecreasing", x)
        assert buggy.outputs == (True,) and fixed.outputs == (False,)
        kind, dev = compare(buggy, fixed, eps=0.1)
        assert kind == "inconsistent" and dev > 0.1

    def test_identical_tensors_consistent(self):
        kind, dev = compare(ok(t([1.0, 2.0])), ok(t([1.0, 2.0])), 0.1)
        assert kind == "consistent" and dev == 0.0

    def test_deviation_under_epsilon_is_consistent(self):
        kind, dev = compare(ok(t([1.0])), ok(t([1.05])), 0.1)
        assert kind == "consistent" and dev == pytest.approx(0.05)

    def test_nan_matches_nan(self):
        kind, _ = compare(ok(t([math.nan])), ok(t([math.nan])), 0.1)
        assert kind == "consistent"

    def test_nan_against_number_diverges(self):
        kind, dev = compare(ok(t([math.nan])), ok(t([0.0])), 0.1)
        assert kind == "inconsistent" and math.isinf(dev)

    def test_infinity_compared_by_sign(self):
        assert compare(ok(t([math.inf])), ok(t([math.inf])), 0.1)[0] == "consistent"
        assert compare(ok(t([math.inf])), ok(t([-math.inf])), 0.1)[0] == "inconsistent"

    def test_bool_promotes_to_numbers(self):
        assert compare(ok(True), ok(t(1, DType.INT32)), 0.1)[0] == "consistent"
        assert compare(ok(True), ok(t(0, DType.INT32)), 0.1)[0] == "inconsistent"

    def test_shape_mismatch_inconsistent(self):
        kind, dev = compare(ok(t([1.0, 2.0])), ok(t([[1.0], [2.0]])), 0.1)
        assert kind == "inconsistent" and math.isinf(dev)

    def test_element_count_mismatch_is_infinite_deviation(self):
        assert output_deviation((t([1.0, 2.0]),), (t([1.0]),)) == math.inf

    def test_tuple_length_mismatch(self):
        assert output_deviation((t([1.0]), t([2.0])), (t([1.0]),)) == math.inf

    def test_counterpart_failure_is_crash(self):
        exc = ExecutionOutcome("exception", exc_class="ValueError", message="nope")
        assert compare(ok(t([1.0])), exc, 0.1)[0] == "crash"

    def test_status_mismatch_inconsistent(self):
        exc = ExecutionOutcome("exception", exc_class="ValueError", message="nope")
        assert compare(exc, ok(t([1.0])), 0.1)[0] == "inconsistent"
        assert compare(exc, exc, 0.1)[0] == "consistent"


@given(st.floats(0.001, 0.1), st.floats(0.001, 0.1),
       st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=6))
@settings(max_examples=100, deadline=None)
def test_validation_is_epsilon_monotone(eps_a, eps_b, values):
    lo, hi = sorted((eps_a, eps_b))
    shifted = [v + 0.05 for v in values]
    kind_lo, _ = compare(ok(t(values)), ok(t(shifted)), lo)
    kind_hi, _ = compare(ok(t(values)), ok(t(shifted)), hi)
    if kind_lo == "consistent":
        assert kind_hi == "consistent"


def make_validation_set(harness, api_name="broadcast_add"):
    inputs = [
        ConcreteInput({"x": t([1.0, 2.0]), "y": t([0.5, 0.5])}),
        ConcreteInput({"x": t([0.0]), "y": t([3.0])}),
        ConcreteInput({"x": t([[1.0, 1.0]]), "y": t([[2.0, 0.0]])}),
    ]
    return ValidationSet(api_name, inputs)


API = ApiSpec("broadcast_add", (
    ArgumentSpec("x", ArgKind.TENSOR), ArgumentSpec("y", ArgKind.TENSOR)))


class TestSynthesize:
    def run(self, harness, script):
        backend = MockBackend(script=script)
        vs = make_validation_set(harness)
        counterpart, transcript = synthesize(
            API, vs, Gateway(backend), harness, random.Random(7),
            api_target="toy-ref", counterpart_target="toy-ref")
        return counterpart, transcript, backend

    def test_valid_at_first_iteration(self, harness):
        program = REFERENCE_COUNTERPARTS["broadcast_add"]
        counterpart, transcript, backend = self.run(
            harness, lambda r: f"```\n{program}\n```")
        assert counterpart.valid and (counterpart.round, counterpart.iteration) == (1, 1)
        assert [r.tag for r in backend.requests] == [Tag.SYNTHESIZE]

    def test_crash_then_refined_valid_at_iteration_two(self, harness):
        good = REFERENCE_COUNTERPARTS["broadcast_add"]

        def script(request):
            if request.tag is Tag.SYNTHESIZE:
                return "```\ndef counterpart(x, y):\n    return ref.no_such_op(x, y)\n```"
            return f"```\n{good}\n```"

        counterpart, transcript, backend = self.run(harness, script)
        assert counterpart.valid and (counterpart.round, counterpart.iteration) == (1, 2)
        # the refinement prompt carried the crash feedback
        refine = [r for r in backend.requests if r.tag is Tag.REFINE][0]
        feedback = refine.messages[-1][1]
        assert "[Crash on Input]" in feedback and "[Error Message]" in feedback

    def test_budget_exhaustion_rejects_after_fifteen_attempts(self, harness):
        bad = "def counterpart(x, y):\n    return ref.broadcast_add(x, y) + 0.5"
        counterpart, transcript, backend = self.run(harness, lambda r: f"```\n{bad}\n```")
        assert not counterpart.valid and counterpart.status == "rejected"
        assert len(backend.requests) == SYNTHESIS_ROUNDS * ITERATIONS_PER_ROUND == 15
        synth_calls = sum(1 for r in backend.requests if r.tag is Tag.SYNTHESIZE)
        assert synth_calls == SYNTHESIS_ROUNDS

    def test_valid_counterpart_revalidates(self, harness):
        program = REFERENCE_COUNTERPARTS["broadcast_add"]
        counterpart, _, _ = self.run(harness, lambda r: f"```\n{program}\n```")
        vs = make_validation_set(harness)
        f_outcomes = [harness.call("toy-ref", "broadcast_add", x) for x in vs.inputs]
        cases = validate_counterpart(counterpart.program, API, vs.inputs,
                                     f_outcomes, harness, "toy-ref", eps=0.1)
        assert all(c.kind == "consistent" for c in cases)

    def test_example_inputs_come_from_validation_set_head(self, harness):
        program = REFERENCE_COUNTERPARTS["broadcast_add"]
        _, _, backend = self.run(harness, lambda r: f"```\n{program}\n```")
        prompt = backend.requests[0].messages[0][1]
        vs = make_validation_set(harness)
        from difflens.validation import render_input_block

        for x in vs.inputs[:3]:
            assert render_input_block(x, ("x", "y")) in prompt


class TestFeedbackPrompt:
    def test_crash_dedup_and_single_inconsistency(self):
        x = ConcreteInput({"x": t([1.0]), "y": t([1.0])})
        cases = [
            ComparisonCase(x, "crash", error="Error A"),
            ComparisonCase(x, "crash", error="Error A"),
            ComparisonCase(x, "crash", error="Error B"),
            ComparisonCase(x, "inconsistent", max_dev=1.0, expected="1", actual="2"),
            ComparisonCase(x, "inconsistent", max_dev=2.0, expected="3", actual="4"),
        ]
        text = feedback_prompt(cases, API, random.Random(0))
        assert text.count("Error A") == 1 and text.count("Error B") == 1
        assert text.count("[Inconsistent on Input]") == 1
