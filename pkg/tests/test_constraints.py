"""Constraint AST: normalization, classification, serialization, hashing."""

from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from difflens.constraints import (
    Arith,
    BoolOp,
    Call,
    Cmp,
    InputConstraint,
    InSet,
    Lit,
    Not,
    PathConstraint,
    Prop,
    PropertyKind,
    Provenance,
    Solvability,
    classify,
    normalize,
    parse_sexpr,
    to_sexpr,
)
from difflens.values import DType


def prop(arg, kind=PropertyKind.VALUE, index=None):
    return Prop(arg, kind, index)


class TestNormalize:
    def test_commutativity_canonicalization(self):
        a, b = prop("a"), prop("b")
        assert normalize(BoolOp("and", (b, a))) == normalize(BoolOp("and", (a, b)))

    def test_double_negation(self):
        inner = Cmp("==", Prop("x", PropertyKind.NDIMS), Lit(1))
        assert normalize(Not(Not(inner))) == normalize(inner)

    def test_constant_folding(self):
        expr = Cmp("==", Prop("x", PropertyKind.NDIMS), Arith("-", (Lit(2), Lit(1))))
        assert normalize(expr) == normalize(Cmp("==", Prop("x", PropertyKind.NDIMS), Lit(1)))

    def test_division_integer_floor(self):
        assert normalize(Arith("/", (Lit(7), Lit(2)))) == Lit(3)

    def test_division_float_exact(self):
        assert normalize(Arith("/", (Lit(1.0), Lit(4)))) == Lit(0.25)

    def test_min_max_folding(self):
        assert normalize(Arith("min", (Lit(3), Lit(-1)))) == Lit(-1)
        assert normalize(Arith("max", (Lit(3), Lit(-1)))) == Lit(3)

    def test_and_flattening_and_dedup(self):
        a, b = prop("a"), prop("b")
        nested = BoolOp("and", (a, BoolOp("and", (b, a))))
        assert normalize(nested) == normalize(BoolOp("and", (a, b)))


class TestClassify:
    INPUTS = frozenset({"k"})

    def test_solvable(self):
        expr = Cmp("==", Prop("k", PropertyKind.NDIMS), Lit(1))
        assert classify(expr, self.INPUTS) is Solvability.SOLVABLE

    def test_unsolvable_external_functions(self):
        expr = Call("IsVector", (Call("convert_to_float", (prop("k"),)),))
        assert classify(expr, self.INPUTS) is Solvability.UNSOLVABLE

    def test_input_irrelevant(self):
        assert classify(Cmp(">", Lit(5), Lit(3)), self.INPUTS) is Solvability.INPUT_IRRELEVANT

    def test_irrelevant_when_only_locals(self):
        expr = Cmp("==", Prop("local", PropertyKind.NDIMS), Lit(1))
        assert classify(expr, self.INPUTS) is Solvability.INPUT_IRRELEVANT


class TestSexpr:
    def test_example_form(self):
        expr = Cmp("==", Prop("k", PropertyKind.NDIMS), Lit(1))
        assert to_sexpr(expr) == "(== (prop k ndims) 1)"

    def test_shape_index(self):
        expr = Prop("x", PropertyKind.SHAPE_I, -1)
        assert to_sexpr(expr) == "(prop x shape -1)"
        assert parse_sexpr(to_sexpr(expr)) == expr

    def test_membership(self):
        expr = InSet(Prop("t", PropertyKind.DTYPE), (DType.FLOAT32,))
        assert parse_sexpr(to_sexpr(expr)) == expr

    def test_opaque_call(self):
        expr = Call("IsVector", (prop("k"),))
        assert parse_sexpr(to_sexpr(expr)) == expr


class TestPathConstraint:
    def c(self, expr):
        return InputConstraint(expr, Provenance.STATIC)

    def test_equality_invariant_under_reordering(self):
        a = self.c(Cmp("==", Prop("x", PropertyKind.NDIMS), Lit(1)))
        b = self.c(Cmp(">", Prop("x", PropertyKind.SHAPE_I, 0), Lit(0)))
        assert PathConstraint((a, b)) == PathConstraint((b, a))
        assert PathConstraint((a, b)).canonical_hash == PathConstraint((b, a)).canonical_hash

    def test_inequality_for_different_sets(self):
        a = self.c(Cmp("==", Prop("x", PropertyKind.NDIMS), Lit(1)))
        b = self.c(Cmp("==", Prop("x", PropertyKind.NDIMS), Lit(2)))
        assert PathConstraint((a,)) != PathConstraint((b,))

    def test_opaque_call_rejected(self):
        with pytest.raises(ValueError):
            InputConstraint(Call("f", ()), Provenance.STATIC)


# ---------------------------------------------------------------------------
# Property tests over random ASTs mirroring what extraction produces: every
# comparison keeps a property-bearing side. Fully-constant subexpressions are
# excluded because folding them legitimately erases property references
# (`or(p, 0 == 0)` -> true) and changes the classification.
# ---------------------------------------------------------------------------

_names = st.sampled_from(["x", "y", "k"])
_props = st.builds(
    Prop,
    _names,
    st.sampled_from([PropertyKind.NDIMS, PropertyKind.NUM_ELEMENT, PropertyKind.VALUE]),
)
_numbers = st.one_of(st.integers(-20, 20), st.floats(-4, 4, allow_nan=False))
_atoms = st.one_of(_props, st.builds(Lit, _numbers))


def _arith(children):
    return st.builds(
        Arith, st.sampled_from(["+", "-", "*", "min", "max"]), st.tuples(children, children)
    )


_terms = st.recursive(_atoms, _arith, max_leaves=6)
# a term guaranteed to reference at least one property (cannot fold away)
_prop_terms = st.recursive(
    _props,
    lambda children: st.builds(
        Arith, st.sampled_from(["+", "-", "*", "min", "max"]),
        st.tuples(children, _terms)),
    max_leaves=6,
)
_cmps = st.builds(Cmp, st.sampled_from(["==", "!=", "<", "<=", ">", ">="]),
                  _prop_terms, _terms)


def _bools(children):
    return st.one_of(
        st.builds(BoolOp, st.sampled_from(["and", "or"]), st.tuples(children, children)),
        st.builds(Not, children),
    )


_exprs = st.recursive(_cmps, _bools, max_leaves=8)
_exprs_with_calls = st.one_of(
    _exprs,
    st.builds(lambda e: Call("ext", (e,)), _terms),
)


@given(_exprs)
@settings(max_examples=200, deadline=None)
def test_normalize_idempotent(expr):
    once = normalize(expr)
    assert normalize(once) == once


@given(_exprs_with_calls)
@settings(max_examples=200, deadline=None)
def test_classify_stable_under_normalization(expr):
    inputs = frozenset({"x", "k"})
    assert classify(normalize(expr), inputs) == classify(expr, inputs)


@given(_exprs)
@settings(max_examples=200, deadline=None)
def test_sexpr_round_trip(expr):
    assert parse_sexpr(to_sexpr(expr)) == expr
