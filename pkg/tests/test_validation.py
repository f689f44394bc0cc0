"""Validation-input generation: seeds, self-debug, property mutation."""

from __future__ import annotations

import numpy as np
import pytest

from difflens.constraints import ApiSpec, ArgKind, ArgumentSpec
from difflens.gateway import Gateway, MockBackend, Tag
from difflens.validation import (
    FLOAT_SPACE,
    INT_SPACE,
    LiteralParseError,
    build_validation_set,
    parse_input_block,
    parse_value,
    property_mutate,
    render_input_block,
    render_value,
    sample_seed_inputs,
)
from difflens.values import ConcreteInput, DType, TENSOR_DTYPES, TensorValue


PAD_API = ApiSpec("pad", (
    ArgumentSpec("x", ArgKind.TENSOR),
    ArgumentSpec("pad_amount", ArgKind.INT),
))


def tensor(nested, dtype=DType.FLOAT32):
    return TensorValue.of(nested, dtype)


class TestLiteralBlocks:
    def test_parse_tensor_literal(self):
        v = parse_value("tensor([[1, 2], [3, 4]], dtype=int32)")
        assert isinstance(v, TensorValue)
        assert v.dtype is DType.INT32 and v.shape == (2, 2)

    def test_scalar_literals(self):
        assert parse_value("3") == 3
        assert parse_value("-2.5") == -2.5
        assert parse_value("true") is True
        assert parse_value('"mean"') == "mean"
        assert parse_value("[1, 2]") == (1, 2)

    def test_render_parse_round_trip(self):
        x = ConcreteInput({"x": tensor([1.5, -2.0]), "pad_amount": 3})
        block = render_input_block(x, ("x", "pad_amount"))
        parsed = parse_input_block("```\n" + block + "\n```", PAD_API)
        assert parsed.args["pad_amount"] == 3
        assert np.array_equal(parsed.args["x"].to_numpy(), x.args["x"].to_numpy())

    def test_reply_without_fence_rejected(self):
        with pytest.raises(LiteralParseError):
            parse_input_block("x = tensor([1.0], dtype=float32)", PAD_API)

    def test_unknown_argument_rejected(self):
        with pytest.raises(LiteralParseError):
            parse_input_block("```\nwrong = 3\n```", PAD_API)


class TestSeedSampling:
    def replies(self, mapping):
        def script(request):
            tag = request.tag
            prompt = request.messages[0][1]
            for key, reply in mapping.items():
                if key[0] is tag and key[1] in prompt:
                    return reply
            return None

        return Gateway(MockBackend(script=script))

    def test_all_valid_seeds(self, harness):
        gateway = self.replies({
            (Tag.VALIDATE_INPUT, "Sample 1"): "```\nx = tensor([1.0], dtype=float32)\npad_amount = 0\n```",
            (Tag.VALIDATE_INPUT, "Sample 2"): "```\nx = tensor([2.0], dtype=float32)\npad_amount = 1\n```",
            (Tag.VALIDATE_INPUT, "Sample 3"): "```\nx = tensor([3.0], dtype=float32)\npad_amount = 2\n```",
        })
        seeds = sample_seed_inputs(PAD_API, gateway, harness, "toy-buggy")
        assert len(seeds) == 3

    def test_self_debug_recovers_invalid_seed(self, harness):
        backend = MockBackend(script=lambda request: (
            "```\nx = tensor([1.0], dtype=float32)\npad_amount = -1\n```"
            if request.tag is Tag.VALIDATE_INPUT
            else "```\nx = tensor([1.0], dtype=float32)\npad_amount = 0\n```"
        ))
        seeds = sample_seed_inputs(PAD_API, Gateway(backend), harness, "toy-buggy", n=1)
        assert len(seeds) == 1 and seeds[0].args["pad_amount"] == 0
        tags = [r.tag for r in backend.requests]
        assert tags == [Tag.VALIDATE_INPUT, Tag.SELF_DEBUG]
        # the follow-up carries the execution error message
        debug_messages = backend.requests[1].messages
        assert any("must be non-negative" in text for _, text in debug_messages)

    def test_unparseable_reply_gets_no_self_debug(self, harness):
        backend = MockBackend(script=lambda request: "no fenced block here")
        seeds = sample_seed_inputs(PAD_API, Gateway(backend), harness, "toy-buggy", n=1)
        assert seeds == []
        assert [r.tag for r in backend.requests] == [Tag.VALIDATE_INPUT]

    def test_all_attempts_invalid_yields_empty(self, harness):
        backend = MockBackend(script=lambda request:
                              "```\nx = tensor([1.0], dtype=float32)\npad_amount = -5\n```")
        assert sample_seed_inputs(PAD_API, Gateway(backend), harness, "toy-buggy") == []


class TestPropertyMutation:
    API = ApiSpec("f", (
        ArgumentSpec("t", ArgKind.TENSOR),
        ArgumentSpec("n", ArgKind.INT),
        ArgumentSpec("r", ArgKind.FLOAT),
        ArgumentSpec("name", ArgKind.STRING),
    ))

    def base(self):
        return ConcreteInput({
            "t": tensor([[1.0, 2.0], [3.0, 4.0]]),
            "n": 3,
            "r": 2.0,
            "name": "mean",
        })

    def mutants_of(self, arg):
        return [m for m in property_mutate(self.base(), self.API)
                if m.args[arg] != self.base().args[arg]]

    def test_dtype_mutants_exclude_original(self):
        x = self.base()
        dtype_mutants = [m for m in property_mutate(x, self.API)
                         if isinstance(m.args["t"], TensorValue)
                         and m.args["t"].dtype is not DType.FLOAT32
                         and m.args["t"].shape == (2, 2)]
        assert len(dtype_mutants) == len(TENSOR_DTYPES) - 1 == 7

    def test_float_value_mutants_exactly_five(self):
        x = self.base()  # 2.0 is outside the float space
        assert 2.0 not in FLOAT_SPACE
        float_mutants = [m for m in property_mutate(x, self.API) if m.args["r"] != 2.0]
        assert len(float_mutants) == 5
        assert {m.args["r"] for m in float_mutants} == set(FLOAT_SPACE)

    def test_string_arguments_untouched(self):
        assert all(m.args["name"] == "mean" for m in property_mutate(self.base(), self.API))

    def test_int_space_mutants(self):
        x = self.base()
        int_mutants = [m for m in property_mutate(x, self.API) if m.args["n"] != 3]
        assert {m.args["n"] for m in int_mutants} == set(INT_SPACE)

    def test_each_mutant_differs_in_one_argument(self):
        x = self.base()
        for m in property_mutate(x, self.API):
            changed = [name for name in x.args
                       if render_value(m.args[name]) != render_value(x.args[name])]
            assert len(changed) == 1
            assert m.provenance == "mutation"

    def test_ndims_mutants_cover_rank_space(self):
        ranks = {m.args["t"].ndims for m in property_mutate(self.base(), self.API)
                 if isinstance(m.args["t"], TensorValue)}
        assert ranks.issuperset({0, 1, 3, 4, 5})


class TestBuildValidationSet:
    def test_skip_when_no_seed_survives(self, harness):
        backend = MockBackend(script=lambda request: "unusable")
        assert build_validation_set(PAD_API, Gateway(backend), harness, "toy-buggy") is None

    def test_members_replay_ok(self, harness):
        gateway = TestSeedSampling().replies({
            (Tag.VALIDATE_INPUT, "Sample 1"): "```\nx = tensor([1.0, 2.0], dtype=float32)\npad_amount = 1\n```",
            (Tag.VALIDATE_INPUT, "Sample 2"): "```\nx = tensor([2.0], dtype=float32)\npad_amount = 0\n```",
            (Tag.VALIDATE_INPUT, "Sample 3"): "```\nx = tensor([3.0], dtype=float32)\npad_amount = 2\n```",
        })
        vs = build_validation_set(PAD_API, gateway, harness, "toy-buggy")
        assert vs is not None and len(vs.inputs) > 3
        for x in vs.inputs:
            assert harness.call("toy-buggy", "pad", x).ok
        # the set is exactly seeds plus their executable mutants
        seeds = vs.inputs[:3]
        expected = len(seeds) + sum(
            1 for seed in seeds for m in property_mutate(seed, PAD_API)
            if harness.call("toy-buggy", "pad", m).ok
        )
        assert len(vs.inputs) == expected

    def test_mutation_increases_property_diversity(self, harness):
        gateway = TestSeedSampling().replies({
            (Tag.VALIDATE_INPUT, "Sample 1"): "```\nx = tensor([1.0, 2.0], dtype=float32)\npad_amount = 1\n```",
            (Tag.VALIDATE_INPUT, "Sample 2"): "```\nx = tensor([2.0], dtype=float32)\npad_amount = 0\n```",
            (Tag.VALIDATE_INPUT, "Sample 3"): "```\nx = tensor([3.0], dtype=float32)\npad_amount = 2\n```",
        })
        vs = build_validation_set(PAD_API, gateway, harness, "toy-buggy")
        seeds = vs.inputs[:3]

        def unique(values, getter):
            return len({getter(v) for v in values})

        getters = {
            "dtype": lambda x: x.args["x"].dtype,
            "ndims": lambda x: x.args["x"].ndims,
            "shape": lambda x: x.args["x"].shape,
            "num_element": lambda x: x.args["x"].num_element,
        }
        strictly_better = 0
        for getter in getters.values():
            before, after = unique(seeds, getter), unique(vs.inputs, getter)
            assert after >= before
            strictly_better += after > before
        assert strictly_better >= 1

    def test_round_trip_artifact(self, harness, tmp_path):
        from difflens.validation import ValidationSet

        gateway = TestSeedSampling().replies({
            (Tag.VALIDATE_INPUT, "Sample 1"): "```\nx = tensor([1.0], dtype=float32)\npad_amount = 1\n```",
            (Tag.VALIDATE_INPUT, "Sample 2"): "```\nx = tensor([2.0], dtype=float32)\npad_amount = 0\n```",
            (Tag.VALIDATE_INPUT, "Sample 3"): "```\nx = tensor([3.0], dtype=float32)\npad_amount = 2\n```",
        })
        vs = build_validation_set(PAD_API, gateway, harness, "toy-buggy")
        vs.save(tmp_path / "pad.json")
        loaded = ValidationSet.load(tmp_path / "pad.json")
        assert loaded.api == "pad" and len(loaded.inputs) == len(vs.inputs)
        order = ("x", "pad_amount")
        assert render_input_block(loaded.inputs[0], order) == \
            render_input_block(vs.inputs[0], order)
