"""
Test suite for span_calculus.py
Tests weak pullbacks, span composition and comparison, coherence witnesses and 2-morphisms
"""

import pytest
import random

import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from degroupoidify import span_matrix
from groupoid_core import (
    GFunctor, codiscrete_groupoid, group_groupoid, random_groupoid, terminal_groupoid, validate_functor,
    validate_groupoid
)
from span_calculus import (
    EQUIVALENCE, STRICT, Span, TwoMorphism, associator, associator_inverse, compare_spans, compose_spans,
    dagger_2, direct_sum_2, direct_sum_spans, horiz_compose_2, identity_2, identity_span, left_unitor,
    random_span, reduce_2, reverse_span, right_unitor, span_equiv, span_iso, span_of_sets, transport_2,
    two_morphism_eq, validate_2morphism, vert_compose_2, weak_pullback, zero_2
)
from utils import BoundaryMismatchError


def cyclic(n):
    return group_groupoid(list(range(n)), {(a, b): (a + b) % n for a in range(n) for b in range(n)}, 0,
                          name=f"Z{n}")


def to_terminal(g, one):
    return GFunctor(g, one, {x: "*" for x in g.objects}, {m.id: "id" for m in g.morphisms}, name="!")


def collapse_span(apex):
    """1 <- apex -> 1"""
    one = terminal_groupoid()
    return Span(one, one, apex, to_terminal(apex, one), to_terminal(apex, one), name="collapse")


class TestWeakPullback:
    """Test weak pullbacks"""

    def test_product_over_terminal(self):
        one = terminal_groupoid()
        z2, z3 = cyclic(2), cyclic(3)
        P, pi1, pi2 = weak_pullback(to_terminal(z3, one), to_terminal(z2, one))
        assert len(P.objects) == 1
        assert len(P.morphisms) == 6
        assert validate_groupoid(P).valid
        assert validate_functor(pi1).valid and validate_functor(pi2).valid

    def test_comma_of_identities(self):
        """Identity along identity gives the arrow groupoid of Z2, equivalent to Z2"""
        z2 = cyclic(2)
        ident = GFunctor(z2, z2, {"*": "*"}, {0: 0, 1: 1})
        P, _, _ = weak_pullback(ident, ident)
        assert len(P.objects) == 2
        assert len(P.morphisms) == 8
        assert validate_groupoid(P).valid

    def test_targets_must_agree(self):
        z2 = cyclic(2)
        one = terminal_groupoid()
        with pytest.raises(BoundaryMismatchError):
            weak_pullback(to_terminal(z2, one), GFunctor(z2, z2, {"*": "*"}, {0: 0, 1: 1}))


class TestSpans:
    """Test composition, sums and comparison of spans"""

    def test_compose_spans_of_sets(self):
        first = span_of_sets(["a", "b"], ["x"], {"h1": ("a", "x"), "h2": ("b", "x")})
        second = span_of_sets(["x"], ["p", "q"], {"k1": ("x", "p"), "k2": ("x", "p"), "k3": ("x", "q")})
        composite = compose_spans(second, first)
        assert len(composite.apex.objects) == 6
        assert len(composite.apex.morphisms) == 6
        assert composite.source is first.source
        assert composite.target is second.target

    def test_compose_boundary_mismatch(self):
        s = identity_span(cyclic(2))
        t = identity_span(cyclic(3))
        with pytest.raises(BoundaryMismatchError):
            compose_spans(s, t)

    def test_unit_laws_up_to_iso(self):
        s = collapse_span(cyclic(2))
        left = compose_spans(identity_span(s.target), s)
        right = compose_spans(s, identity_span(s.source))
        assert span_iso(left, s) is not None
        assert span_iso(right, s) is not None

    def test_equivalent_but_not_isomorphic(self):
        s1 = collapse_span(codiscrete_groupoid(["a", "b"]))
        s2 = collapse_span(terminal_groupoid())
        assert compare_spans(s1, s2, STRICT) is None
        witness = compare_spans(s1, s2, EQUIVALENCE)
        assert witness is not None
        assert witness.mode == EQUIVALENCE
        assert validate_functor(witness.h).valid

    def test_automorphisms_distinguish_spans(self):
        assert span_equiv(collapse_span(cyclic(2)), collapse_span(terminal_groupoid())) is None

    def test_direct_sum(self):
        s = collapse_span(cyclic(2))
        total = direct_sum_spans(s, collapse_span(terminal_groupoid()))
        assert len(total.apex.objects) == 2
        assert span_equiv(total, direct_sum_spans(collapse_span(terminal_groupoid()), s)) is not None

    def test_comparison_needs_same_boundary(self):
        with pytest.raises(BoundaryMismatchError):
            span_equiv(identity_span(cyclic(2)), identity_span(terminal_groupoid()))

    def test_reverse_span(self):
        s = span_of_sets(["a"], ["x", "y"], {"h": ("a", "y")}, name="S")
        r = reverse_span(s)
        assert r.source is s.target and r.target is s.source
        assert r.name == "S'"
        assert reverse_span(r).name == "S"


class TestWitnesses:
    """Test associators and unitors"""

    def test_associator_is_a_functor(self):
        z2 = identity_span(cyclic(2))
        for w in (associator(z2, z2, z2), associator_inverse(z2, z2, z2)):
            assert validate_functor(w.h).valid
            assert w.mode == STRICT

    def test_unitors(self):
        s = identity_span(cyclic(2))
        for w in (left_unitor(s), right_unitor(s)):
            assert w.target is s
            assert validate_functor(w.h).valid


class TestTwoMorphisms:
    """Test 2-morphism operations and comparison"""

    def setup_method(self):
        self.span = identity_span(cyclic(2))
        self.ident = identity_2(self.span)

    def test_identity_and_zero_validate(self):
        assert validate_2morphism(self.ident).valid
        assert validate_2morphism(zero_2(self.span, self.span)).valid

    def test_dagger_of_identity(self):
        assert two_morphism_eq(dagger_2(self.ident), self.ident, mode=STRICT) is not None
        assert dagger_2(dagger_2(self.ident)).name == self.ident.name

    def test_zero_is_unit_of_sum(self):
        total = direct_sum_2(self.ident, zero_2(self.span, self.span))
        assert validate_2morphism(total).valid
        assert two_morphism_eq(total, self.ident, mode=STRICT) is not None
        assert two_morphism_eq(zero_2(self.span, self.span), self.ident) is None

    def test_vertical_identity_law(self):
        twice = vert_compose_2(self.ident, self.ident)
        assert validate_2morphism(twice).valid
        assert two_morphism_eq(twice, self.ident, mode=EQUIVALENCE) is not None
        reduced = reduce_2(twice)
        assert len(reduced.inner.apex.objects) == 1
        assert two_morphism_eq(reduced, self.ident, mode=EQUIVALENCE) is not None

    def test_vertical_composition_needs_matching_middle(self):
        other = identity_2(collapse_span(cyclic(2)))
        with pytest.raises(BoundaryMismatchError):
            vert_compose_2(self.ident, other)

    def test_horizontal_identity(self):
        both = horiz_compose_2(self.ident, self.ident)
        assert validate_2morphism(both).valid
        assert two_morphism_eq(both, identity_2(compose_spans(self.span, self.span))) is not None

    def test_transport_along_unitor(self):
        padded = compose_spans(identity_span(self.span.target), self.span)
        moved = transport_2(identity_2(padded), left_unitor(self.span), left_unitor(self.span))
        assert moved.from_span is self.span and moved.to_span is self.span
        assert two_morphism_eq(moved, self.ident, mode=EQUIVALENCE) is not None

    def test_structural_defect(self):
        broken = TwoMorphism(self.span, self.span, self.ident.inner, {}, self.ident.nu, name="broken")
        report = validate_2morphism(broken)
        assert report.structural
        assert not report.valid


class TestRandomSpans:
    """Test composition laws on random spans of random groupoids"""

    def setup_method(self):
        self.rng = random.Random(7)

    def groupoids(self, count):
        return [random_groupoid(self.rng, max_objects=2, max_order=2, name=f"G{i}") for i in range(count)]

    def span(self, source, target, name):
        return random_span(self.rng, source, target, max_objects=2, max_order=2, name=name)

    def test_composites_are_functorial(self):
        for _ in range(200):
            X, Y, W = self.groupoids(3)
            H, K = self.span(X, Y, "H"), self.span(Y, W, "K")
            KH = compose_spans(K, H)
            for leg in (KH.left, KH.right):
                report = validate_functor(leg)
                assert report.valid, report.errors
            assert KH.source is X and KH.target is W
            assert span_matrix(KH) == span_matrix(K) @ span_matrix(H)

    def test_associativity_and_units(self):
        for _ in range(50):
            X, Y, V, W = self.groupoids(4)
            H, K, L = self.span(X, Y, "H"), self.span(Y, V, "K"), self.span(V, W, "L")
            w = associator(L, K, H)
            assert validate_functor(w.h).valid
            assert len(set(w.h.on_objects.values())) == len(w.target.apex.objects) == len(w.source.apex.objects)
            for o in w.source.apex.objects:
                assert w.target.left.obj(w.h.obj(o)) == w.source.left.obj(o)
                assert w.target.right.obj(w.h.obj(o)) == w.source.right.obj(o)
            assert span_matrix(w.source) == span_matrix(w.target)
            for unitor in (left_unitor(H), right_unitor(H)):
                assert validate_functor(unitor.h).valid
                assert span_matrix(unitor.source) == span_matrix(H)
                assert compare_spans(unitor.source, H, EQUIVALENCE) is not None


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
