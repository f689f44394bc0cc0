"""Condition extraction rules, flow tracking, and constraint construction."""

from __future__ import annotations

import pytest

from difflens.constraints import (
    ApiSpec,
    ArgKind,
    ArgumentSpec,
    Call,
    Cmp,
    InSet,
    Lit,
    Prop,
    PropertyKind,
    Provenance,
    Solvability,
    classify,
)
from difflens.extraction import (
    construct_constraint,
    extract_condition,
    extract_path_constraints,
    track_related,
)
from difflens.gateway import FailingBackend, Gateway
from difflens.grammar import parse_constraint
from difflens.ir import enumerate_paths, load_ir
from difflens.values import DType


def api_of(ir):
    return ir.signature


class TestSanityCheckRules:
    """One golden test per condition-construction rule."""

    def load_single_check(self, check_line, params="param x tensor\n"):
        ir = load_ir(f"fn f\n{params}{check_line}\n")
        return ir.body[0]

    def test_assert_takes_first_argument(self):
        stmt = self.load_single_check("check assert(x.num_element > 0)")
        assert extract_condition(stmt) == parse_constraint("x.num_element > 0")

    def test_torch_check_takes_first_argument(self):
        stmt = self.load_single_check("check torch_check(x.ndims >= 1)")
        assert extract_condition(stmt) == parse_constraint("x.ndims >= 1")

    def test_op_requires_takes_second_argument(self):
        stmt = self.load_single_check(
            'check op_requires(ctx, diag_index.num_element > 0, "err")',
            params="param diag_index tensor\n",
        )
        assert extract_condition(stmt) == parse_constraint("diag_index.num_element > 0")

    def test_args_to_matching_eager_builds_dtype_membership(self):
        stmt = self.load_single_check(
            "check args_to_matching_eager([t], ctx, [float32])",
            params="param t tensor\n",
        )
        assert extract_condition(stmt) == InSet(
            Prop("t", PropertyKind.DTYPE), (DType.FLOAT32,))

    def test_branch_condition(self):
        ir = load_ir("fn f\nparam x tensor\nif x.ndims == 1\nassign a = 1\nend\n")
        assert extract_condition(ir.body[0]) == parse_constraint("x.ndims == 1")

    def test_plain_statements_carry_no_condition(self):
        ir = load_ir("fn f\nparam x tensor\nassign a = x.ndims\n")
        assert extract_condition(ir.body[0]) is None


class TestTrackRelated:
    def paths_of(self, text):
        ir = load_ir(text)
        return ir, enumerate_paths(ir)

    def test_assignment_from_input_is_related(self):
        ir, paths = self.paths_of(
            "fn f\nparam k tensor\nassign diag_index = convert_to_float(k)\n")
        related = track_related(paths[0], {"k"})
        assert set(related) == {"diag_index"}
        assert "convert_to_float(k)" in related["diag_index"].render()

    def test_constant_definition_unrelated(self):
        ir, paths = self.paths_of("fn f\nparam k tensor\nassign tmp = 5\n")
        assert track_related(paths[0], {"k"}) == {}

    def test_transitivity(self):
        ir, paths = self.paths_of(
            "fn f\nparam k tensor\nassign a = k + 1\nassign b = a * 2\n")
        related = track_related(paths[0], {"k"})
        assert set(related) == {"a", "b"}
        assert "a = k + 1" in related["b"].render()


class TestConstructConstraint:
    API = ApiSpec("f", (ArgumentSpec("m", ArgKind.TENSOR), ArgumentSpec("k", ArgKind.TENSOR)))

    def test_pure_substitution(self):
        ir = load_ir("fn f\nparam m tensor\nparam k tensor\n"
                     "assign d = m.ndims\nif d > 1\nassign a = 1\nend\n")
        path = enumerate_paths(ir)[0]
        related = track_related(path, self.API.arg_names)
        built = construct_constraint(parse_constraint("d > 1"), related, self.API)
        assert built.status == "pure"
        assert built.expr == parse_constraint("m.ndims > 1")

    def test_unresolved_packages_prompt_elements(self):
        ir = load_ir("fn f\nparam m tensor\nparam k tensor\n"
                     "assign diag_index = convert_to_float(k)\n")
        path = enumerate_paths(ir)[0]
        related = track_related(path, self.API.arg_names)
        built = construct_constraint(
            parse_constraint("IsVector(diag_index)"), related, self.API)
        assert built.status == "unresolved"
        u = built.unresolved
        assert u.condition == parse_constraint("IsVector(diag_index)")
        assert "diag_index = convert_to_float(k)" in u.flow.render()
        assert [a.name for a in u.arg_types] == ["k"]
        assert u.candidate_properties  # tensor input: all eight property kinds

    def test_irrelevant_constant_local(self):
        ir = load_ir("fn f\nparam m tensor\nparam k tensor\nassign t = 5\n")
        path = enumerate_paths(ir)[0]
        related = track_related(path, self.API.arg_names)
        built = construct_constraint(parse_constraint("t > 1"), related, self.API)
        assert built.status == "irrelevant"


class TestExtractPathConstraints:
    def test_pure_if_yields_two_unique_path_constraints(self):
        ir = load_ir("fn f\nparam x tensor\nif x.ndims == 1\nassign a = 1\nend\n")
        pool = extract_path_constraints(ir)
        assert len(pool) == 2
        sets = [{c.key() for c in pc.constraints} for pc in pool]
        assert sets[0] != sets[1]

    def test_all_irrelevant_collapses_to_one_empty(self):
        ir = load_ir("fn f\nparam x tensor\nassign t = 5\nif t > 1\nassign a = 1\nend\n")
        pool = extract_path_constraints(ir)
        assert len(pool) == 1 and pool[0].constraints == ()

    def test_loop_conditions_are_excluded(self):
        ir = load_ir(
            "fn f\nparam x tensor\n"
            "loop x.num_element > 0\nassign a = 1\nend\n"
            "check assert(x.ndims >= 1)\n"
        )
        pool = extract_path_constraints(ir)
        assert len(pool) == 1
        keys = {c.key() for c in pool[0].constraints}
        assert len(keys) == 1 and "ndims" in next(iter(keys))

    def test_no_two_path_constraints_share_hash(self, corpus, fixtures_dir):
        from difflens.gateway import RecordedBackend

        gateway = Gateway(RecordedBackend(fixtures_dir))
        for name, ir in sorted(corpus.items()):
            pool = extract_path_constraints(ir, gateway)
            hashes = [pc.canonical_hash for pc in pool]
            assert len(hashes) == len(set(hashes)), name

    def test_failing_gateway_degrades_to_static(self, corpus):
        gateway = Gateway(FailingBackend())
        pool = extract_path_constraints(corpus["matrix_diag_v2"], gateway)
        assert len(pool) == 1 and pool[0].constraints == ()
        pool = extract_path_constraints(corpus["bincount"], gateway)
        for pc in pool:
            assert pc.constraints, "static conditions must survive"
            assert all(c.provenance is Provenance.STATIC for c in pc.constraints)

    def test_emitted_constraints_are_solvable_over_inputs(self, corpus, fixtures_dir):
        from difflens.gateway import RecordedBackend

        gateway = Gateway(RecordedBackend(fixtures_dir))
        for name, ir in sorted(corpus.items()):
            inputs = ir.signature.arg_names
            for pc in extract_path_constraints(ir, gateway):
                for c in pc.constraints:
                    assert classify(c.expr, inputs) is Solvability.SOLVABLE

    def test_recorded_extraction_is_deterministic(self, corpus, fixtures_dir):
        from difflens.extraction import constraints_to_doc
        from difflens.gateway import RecordedBackend
        import json

        def run():
            gateway = Gateway(RecordedBackend(fixtures_dir))
            return json.dumps({
                name: constraints_to_doc(name, extract_path_constraints(ir, gateway))
                for name, ir in sorted(corpus.items())
            }, sort_keys=True)

        assert run() == run()

    def test_matrix_diag_covers_all_listed_conditions(self, corpus, fixtures_dir):
        """With recorded inference, the union of path constraints covers the
        first check, the branch, and both row/column checks."""
        from difflens.gateway import RecordedBackend

        gateway = Gateway(RecordedBackend(fixtures_dir))
        pool = extract_path_constraints(corpus["matrix_diag_v2"], gateway)
        all_keys = {c.key() for pc in pool for c in pc.constraints}
        expected_fragments = [
            "num_element",          # SC1: k.num_element > 0
            "(prop k shape 0)",     # branch on k.shape[0]
            "num_rows",             # SC2
            "num_cols",             # SC3
        ]
        for fragment in expected_fragments:
            assert any(fragment in key for key in all_keys), fragment
