"""Fuzz engine: selection, augmentation, feedback, instantiation, verdicts."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from difflens.constraints import (
    ApiSpec,
    ArgKind,
    ArgumentSpec,
    InputConstraint,
    Lit,
    PathConstraint,
    Provenance,
)
from difflens.fuzzing import (
    AugmentedConstraint,
    CampaignState,
    SelectionState,
    augment,
    duplicate_constraint,
    instantiate,
    natural_constraints,
    parse_error_feedback,
    property_tuple,
    property_value_candidates,
    run_campaign,
    select_path,
    step,
)
from difflens.grammar import parse_constraint, to_infix
from difflens.solver import PrimitiveModel, TensorModel, eval_predicate
from difflens.toylib import REFERENCE_COUNTERPARTS
from difflens.validation import ValidationSet
from difflens.values import ConcreteInput, DType, TensorValue


def pc(path_id="p", *texts, count=0):
    constraints = tuple(
        InputConstraint(parse_constraint(t), Provenance.STATIC) for t in texts)
    out = PathConstraint(constraints, path_id=path_id)
    out.selection_count = count
    return out


API = ApiSpec("pad", (
    ArgumentSpec("x", ArgKind.TENSOR), ArgumentSpec("pad_amount", ArgKind.INT)))


class TestSelection:
    def probabilities(self, counts):
        pool = [pc(f"p{i}", count=c) for i, c in enumerate(counts)]
        return SelectionState(pool).probabilities()

    def test_equal_counts_split_evenly(self):
        assert self.probabilities([0, 0]) == pytest.approx([0.5, 0.5])

    def test_counts_zero_one(self):
        assert self.probabilities([0, 1]) == pytest.approx([2 / 3, 1 / 3])

    def test_counts_one_one_three(self):
        assert self.probabilities([1, 1, 3]) == pytest.approx([0.4, 0.4, 0.2])

    def test_selection_increments_chosen_counter(self):
        pool = [pc("a"), pc("b")]
        state = SelectionState(pool)
        rng = random.Random(5)
        for k in range(1, 50):
            select_path(state, rng)
            assert state.total_selections() == k

    def test_empty_pool_is_an_error(self):
        with pytest.raises(ValueError):
            SelectionState([])


class TestAugment:
    def fresh_state(self, validation_inputs=()):
        vs = ValidationSet("pad", list(validation_inputs))
        return CampaignState(
            api=API,
            naturals=natural_constraints(API),
            property_values=property_value_candidates(API, vs),
        )

    def test_fresh_campaign_is_base_plus_naturals(self):
        state = self.fresh_state()
        base = pc("p", "pad_amount >= 0")
        ac = augment(base, state, random.Random(3))
        assert ac.base is base
        assert all(c.provenance is Provenance.NATURAL for c in ac.added)
        families = {c.provenance for c in ac.constraints()}
        assert families == {Provenance.STATIC, Provenance.NATURAL}

    def test_duplicate_constraint_shape(self):
        x = ConcreteInput({
            "x": TensorValue.of([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], DType.FLOAT32),
            "pad_amount": 1,
        })
        tup = property_tuple(x, API)
        expr = duplicate_constraint(tup, API).expr
        rendered = to_infix(expr)
        assert rendered.startswith("not (")
        for fragment in ("x.ndims == 2", "[2, 3] == x.shape", "x.dtype == float32",
                         "pad_amount == 1"):
            assert fragment in rendered
        # the recorded input itself violates the duplicate constraint
        model = {"x": TensorModel(DType.FLOAT32, (2, 3)), "pad_amount": PrimitiveModel(1)}
        assert eval_predicate(expr, model) is False
        other = {"x": TensorModel(DType.FLOAT32, (2, 4)), "pad_amount": PrimitiveModel(1)}
        assert eval_predicate(expr, other) is True

    def test_property_value_inclusion_rate(self):
        xs = [ConcreteInput({"x": TensorValue.of([1.0], DType.FLOAT32), "pad_amount": i})
              for i in range(3)]
        state = self.fresh_state(xs)
        # ndims, shape, num_element, and dtype are constant across inputs
        assert len(state.property_values) == 4
        rng = random.Random(11)
        base = pc("p")
        rates = []
        for _ in range(4000):
            ac = augment(base, state, rng)
            rates.append(sum(1 for c in ac.added
                             if c.provenance is Provenance.PROPERTY_VALUE))
        mean = sum(rates) / len(rates) / len(state.property_values)
        assert mean == pytest.approx(0.3, abs=0.03)

    def test_error_feedback_accumulates_once(self):
        state = self.fresh_state()
        message = "Dimension out of range (expected to be in range of [0, 2], but got 3)"
        x = ConcreteInput({"x": TensorValue.of(np.zeros((1, 1, 1)), DType.FLOAT32),
                           "pad_amount": 0})
        state.record_feedback(parse_error_feedback(message, x, API))
        state.record_feedback(parse_error_feedback(message, x, API))
        assert len(state.error_feedback) == 1
        ac = augment(pc("p"), state, random.Random(0))
        assert sum(1 for c in ac.added
                   if c.provenance is Provenance.ERROR_FEEDBACK) == 1


class TestErrorFeedback:
    def test_dimension_pattern_binds_bounds(self):
        message = "Dimension out of range (expected to be in range of [0, 2], but got 3)"
        x = ConcreteInput({"x": TensorValue.of(np.zeros((2, 2, 2)), DType.FLOAT32),
                           "pad_amount": 0})
        out = parse_error_feedback(message, x, API)
        assert len(out) == 1
        assert to_infix(out[0].expr) == "x.ndims <= 2 and x.ndims >= 0"
        assert out[0].provenance is Provenance.ERROR_FEEDBACK

    def test_tensor_resolved_by_reported_rank(self):
        message = "Dimension out of range (expected to be in range of [0, 2], but got 3)"
        x = ConcreteInput({"x": TensorValue.of([1.0], DType.FLOAT32), "pad_amount": 0})
        assert parse_error_feedback(message, x, API) == []

    def test_unrelated_message_yields_nothing(self):
        assert parse_error_feedback("unrelated message", None, API) == []

    def test_configured_extra_pattern(self):
        import re

        patterns = [(re.compile(r"axis (-?\d+) is out of bounds"), "x.ndims >= #1 + 1")]
        out = parse_error_feedback("axis 2 is out of bounds for rank 1", None, API,
                                   extra_patterns=patterns)
        assert len(out) == 1 and to_infix(out[0].expr) == "x.ndims >= 3"


class TestInstantiate:
    def test_shape_product(self):
        model = {"x": TensorModel(DType.FLOAT32, (2, 3)), "pad_amount": PrimitiveModel(0)}
        x = instantiate(model, random.Random(0), API)
        assert x.args["x"].num_element == 6 and x.provenance == "solver"

    def test_value_pin(self):
        model = {"x": TensorModel(DType.FLOAT32, (2,)), "pad_amount": PrimitiveModel(7)}
        assert instantiate(model, random.Random(0), API).args["pad_amount"] == 7

    def test_value_bounds_realized_exactly(self):
        model = {"x": TensorModel(DType.INT32, (4,), value_min=2, value_max=6),
                 "pad_amount": PrimitiveModel(0)}
        arr = instantiate(model, random.Random(1), API).args["x"].to_numpy()
        assert arr.min() == 2 and arr.max() == 6

    def test_special_value_rate(self):
        rng = random.Random(42)
        model = {"x": TensorModel(DType.FLOAT32, (8,)), "pad_amount": PrimitiveModel(0)}
        hits = 0
        n = 4000
        for _ in range(n):
            arr = instantiate(model, rng, API).args["x"].to_numpy()
            hits += bool(np.any(~np.isfinite(arr)))
        assert hits / n == pytest.approx(0.05, abs=0.01)

    def test_integer_tensors_never_get_specials(self):
        rng = random.Random(42)
        model = {"x": TensorModel(DType.INT32, (8,)), "pad_amount": PrimitiveModel(0)}
        for _ in range(500):
            arr = instantiate(model, rng, API).args["x"].to_numpy()
            assert np.all(np.isfinite(arr.astype(np.float64)))


class TestStepVerdicts:
    def run_step(self, harness, api, program, *texts, state=None, rng=None):
        base = pc("p", *texts)
        state = state or CampaignState(api=api, naturals=natural_constraints(api),
                                       property_values=[])
        rng = rng or random.Random(0)
        ac = augment(base, state, rng)
        return step(api, program, ac, harness, state, rng,
                    "toy-buggy", "toy-ref", eps=0.1, iteration=1)

    def test_overflow_bug_is_incorrect_result(self, harness):
        api = ApiSpec("is_nondecreasing", (ArgumentSpec("x", ArgKind.TENSOR),))
        record = self.run_step(
            harness, api, REFERENCE_COUNTERPARTS["is_nondecreasing"],
            "x.dtype in [uint32]", "x.ndims == 1", "x.shape[0] == 4")
        assert record.verdict in ("incorrect-result", "consistent")

    def test_spurious_exception_is_incorrectly_rejected(self, harness):
        record = self.run_step(
            harness, API, REFERENCE_COUNTERPARTS["pad"],
            "pad_amount == 3", "x.ndims == 1")
        assert record.verdict == "incorrectly-rejected"

    def test_filtered_exception_class(self, harness):
        api = ApiSpec("bincount", (
            ArgumentSpec("arr", ArgKind.TENSOR),
            ArgumentSpec("size", ArgKind.INT),
            ArgumentSpec("weights", ArgKind.TENSOR)))
        # float arr raises TypeError on both sides; counterpart agrees, but a
        # forced dtype mismatch turns the counterpart consistent check moot
        record = self.run_step(
            harness, api, "def counterpart(arr, size, weights):\n    return ref.bincount(arr.astype('int32'), size, weights)",
            "arr.dtype in [float32]", "size >= 0", "arr.ndims == 1",
            "arr.shape == weights.shape", "arr.value_min >= 0")
        assert record.verdict == "filtered"

    def test_unsat_records_no_input(self, harness):
        record = self.run_step(harness, API, REFERENCE_COUNTERPARTS["pad"],
                               "x.ndims == 1", "x.ndims == 2")
        assert record.verdict == "unsat" and record.input_doc is None

    def test_transport_failure_retried_once_then_skipped(self, harness):
        from difflens.harness import TransportError

        class Flaky:
            def __init__(self, failures):
                self.failures = failures
                self.calls = 0

            def call(self, *args, **kwargs):
                self.calls += 1
                if self.calls <= self.failures:
                    raise TransportError("worker hiccup")
                return harness.call(*args, **kwargs)

            def eval_program(self, *args, **kwargs):
                return harness.eval_program(*args, **kwargs)

        flaky = Flaky(failures=1)
        record = self.run_step(flaky, API, REFERENCE_COUNTERPARTS["pad"],
                               "pad_amount >= 0")
        assert record.verdict != "skipped" and flaky.calls == 2

        dead = Flaky(failures=10)
        record = self.run_step(dead, API, REFERENCE_COUNTERPARTS["pad"],
                               "pad_amount >= 0")
        assert record.verdict == "skipped" and dead.calls == 2


class TestRunCampaign:
    def small_campaign(self, harness, iterations=60, seed=3):
        pool = [pc("a", "pad_amount >= 0"), pc("b", "pad_amount >= 0", "x.ndims == 1")]
        vs = ValidationSet("pad", [
            ConcreteInput({"x": TensorValue.of([1.0], DType.FLOAT32), "pad_amount": 1})])
        return run_campaign(API, pool, REFERENCE_COUNTERPARTS["pad"], vs, harness,
                            random.Random(seed), iterations)

    def test_selection_bookkeeping(self, harness):
        result = self.small_campaign(harness)
        assert len(result.records) == 60
        assert sum(result.verdict_counts.values()) == 60

    def test_no_duplicate_property_tuples(self, harness):
        result = self.small_campaign(harness, iterations=120)
        seen = set()
        for record in result.records:
            if record.input_doc is None:
                continue
            from difflens.values import decode_input

            tup = property_tuple(decode_input(record.input_doc), API)
            assert tup not in seen
            seen.add(tup)
