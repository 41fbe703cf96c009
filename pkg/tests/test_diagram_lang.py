"""
Test suite for diagram_lang.py
Tests parsing, typing, normal forms in both semantics, decategorification and evaluation into spans
"""

import pytest
import random

import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from diagram_lang import (
    FREE, SPAN, Identity, Scale, Seq, Sum, Tensor, c, canonical_matching, check_decrease, confluence_sample,
    count_generators, count_nodes, diagram_eq, evaluate_to_span, k0_matrix, k0_object, normal_form_to_record,
    normalize, oracle_check, parse, random_expression, render_expr, render_matching, render_normal_form,
    representative_matching, typecheck
)
from degroupoidify import RationalMatrix
from span_calculus import validate_2morphism
from utils import (
    BoundaryMismatchError, ConfigManager, DiagramSyntaxError, DiagramTypeError, EvaluationError, RewriteError
)

LOOP_PLUS = "eta ; etadag"
LOOP_MINUS = "epsdag ; eps"
SNAKE = "(eta * id(+)) ; (id(+) * eps)"


class TestParser:
    """Test concrete syntax"""

    def test_precedence(self):
        """* binds tighter than ;, which binds tighter than +"""
        e = parse("eta ; etadag * id(1) + 2 id(1)")
        assert isinstance(e, Sum)
        assert isinstance(e.first, Seq)
        assert isinstance(e.first.upper, Tensor)
        assert isinstance(e.second, Scale) and e.second.factor == 2
        assert isinstance(e.second.body, Identity)

    def test_render(self):
        test_cases = [
            ("eta", "eta"),
            ("id(1)", "id(1)"),
            ("id()", "id(1)"),
            ("x(+, -)", "x(+,-)"),
            ("eta ; etadag", "(eta ; etadag)"),
            ("id(+) * eta", "(id(+) * eta)"),
            ("3 (eta ; etadag)", "3 ((eta ; etadag))"),
        ]
        for text, expected in test_cases:
            assert render_expr(parse(text)) == expected
            assert render_expr(parse(render_expr(parse(text)))) == expected

    def test_unicode_minus(self):
        assert parse("id(+−)") == Identity("+-")

    def test_syntax_errors_carry_positions(self):
        test_cases = [
            ("foo", 0, "unknown generator 'foo'"),
            ("eta ;", 5, "unexpected end of input"),
            ("eta )", 4, "unexpected ')'"),
            ("x(+,+", 5, "expected ')'"),
        ]
        for text, position, message in test_cases:
            with pytest.raises(DiagramSyntaxError) as excinfo:
                parse(text)
            assert excinfo.value.position == position, text
            assert message in str(excinfo.value)

    def test_counts(self):
        e = parse("(id(+) * eta) ; (eps * id(+-))")
        assert count_generators(e) == 2
        assert count_nodes(parse(LOOP_PLUS)) == 3
        assert count_generators(parse("id(+-+)")) == 0


class TestTyping:
    """Test boundaries and type errors"""

    def test_boundaries(self):
        test_cases = [
            ("eta", "", "+-"),
            ("eps", "-+", ""),
            ("etadag", "+-", ""),
            ("epsdag", "", "-+"),
            (LOOP_PLUS, "", ""),
            (SNAKE, "+", "+"),
            ("x(+,-)", "+-", "-+"),
        ]
        for text, dom, cod in test_cases:
            b = typecheck(text)
            assert (b.domain, b.codomain) == (dom, cod), text
            assert not b.zero_object

    def test_zero_objects(self):
        assert typecheck("id(++)").zero_object
        assert typecheck("eta * epsdag").zero_object
        assert not typecheck("eta * id(+)").zero_object

    def test_stacking_mismatch(self):
        with pytest.raises(DiagramTypeError) as excinfo:
            typecheck("eta ; eta")
        assert excinfo.value.position == 4
        assert "cannot stack 1 on +-" in str(excinfo.value)

    def test_sum_mismatch(self):
        with pytest.raises(DiagramTypeError) as excinfo:
            typecheck("eta + eps")
        assert excinfo.value.position == 4


class TestNormalForms:
    """Test normalization in the free and span semantics"""

    def teardown_method(self):
        ConfigManager._active = None

    def test_loops_become_scalars(self):
        for mode in (FREE, SPAN):
            assert normalize(LOOP_PLUS, mode).terms[0][1].as_expr() == c
            assert normalize(LOOP_MINUS, mode).terms[0][1].as_expr() == 1 - c

    def test_loops_sum_to_identity(self):
        for mode in (FREE, SPAN):
            assert diagram_eq(f"({LOOP_PLUS}) + ({LOOP_MINUS})", "id(1)", mode)

    def test_snake(self):
        for mode in (FREE, SPAN):
            assert diagram_eq(SNAKE, "id(+)", mode)

    def test_cap_under_cup_splits(self):
        """A cap followed by a cup of the same signs is a pair of identity strands"""
        test_cases = [("eps ; epsdag", "id(-+)"), ("etadag ; eta", "id(+-)")]
        for text, identity in test_cases:
            for mode in (FREE, SPAN):
                assert diagram_eq(text, identity, mode), (text, mode)

    def test_split_keeps_the_through_strands(self):
        nf = normalize("eps ; epsdag", SPAN)
        assert len(nf.terms) == 1
        matching, coefficient = nf.terms[0]
        assert matching == ((0, 2), (1, 3))
        assert coefficient.as_expr() == 1
        assert "    diagram: id(-+)" in render_normal_form(nf)

    def test_split_beside_other_strands(self):
        for mode in (FREE, SPAN):
            assert diagram_eq("id(+) * eps ; id(+) * epsdag", "id(+-+)", mode)
            assert diagram_eq("(eps ; epsdag) * id(-+)", "id(-+-+)", mode)

    def test_nested_loops(self):
        test_cases = [
            ("epsdag ; id(-) * eta * id(+) ; id(-) * etadag * id(+) ; eps", 1 - c),
            ("eta ; id(+) * epsdag * id(-) ; id(+) * eps * id(-) ; etadag", c),
        ]
        for text, span_value in test_cases:
            assert normalize(text, SPAN).terms[0][1].as_expr() == span_value
            assert normalize(text, FREE).terms[0][1].as_expr().expand() == (c * (1 - c)).expand()

    def test_span_coefficients_reduce(self):
        assert diagram_eq(f"({LOOP_PLUS}) ; ({LOOP_PLUS})", LOOP_PLUS, SPAN)
        assert normalize(f"({LOOP_PLUS}) ; ({LOOP_MINUS})", SPAN).is_zero
        assert not diagram_eq(f"({LOOP_PLUS}) ; ({LOOP_PLUS})", LOOP_PLUS, FREE)

    def test_loops_beside_strands(self):
        """Next to a boundary the face labels are forced and loops become 0 or 1"""
        test_cases = [
            ("id(-+) * (epsdag ; eps)", 1, 1 - c),
            ("(eta ; etadag) * id(+-)", 1, c),
            ("id(-+) * (eta ; etadag)", 0, 0),
        ]
        for text, span_value, free_value in test_cases:
            for mode, value in ((SPAN, span_value), (FREE, free_value)):
                nf = normalize(text, mode)
                if value == 0:
                    assert nf.is_zero, (text, mode)
                else:
                    assert nf.terms[0][1].as_expr() == value, (text, mode)

    def test_free_mode_depends_on_rule_order(self):
        """The free semantics is not confluent once cap-cup splitting is a rule"""
        text = "eps ; epsdag ; eps ; epsdag"
        coefficients = set()
        for seed in range(50):
            nf = normalize(text, FREE, rng=random.Random(seed))
            assert [m for m, _ in nf.terms] == [((0, 2), (1, 3))]
            coefficients.add(nf.terms[0][1].as_expr())
        assert coefficients == {1, 1 - c}
        for seed in range(50):
            assert normalize(text, SPAN, rng=random.Random(seed)) == normalize("id(-+)", SPAN)

    def test_rewrites_must_decrease_the_measure(self):
        check_decrease((1, 4, 2, 0), (0, 6, 3, 2), "crossing")
        check_decrease((0, 4, 2, 1), (0, 4, 2, 0), "reduce")
        test_cases = [((0, 2, 1, 0), (0, 2, 1, 0)), ((0, 2, 1, 0), (0, 2, 2, 0))]
        for before, after in test_cases:
            with pytest.raises(RewriteError) as excinfo:
                check_decrease(before, after, "loop")
            assert "rule loop" in str(excinfo.value)

    def test_zero_terms(self):
        for text in ("x(+,-)", "id(++)", "0 eta", "eta ; x(+,-) ; eps"):
            for mode in (FREE, SPAN):
                assert normalize(text, mode).is_zero, (text, mode)

    def test_scalars(self):
        assert diagram_eq(f"2 ({LOOP_PLUS})", f"({LOOP_PLUS}) + ({LOOP_PLUS})", FREE)
        assert not diagram_eq(f"2 ({LOOP_PLUS})", LOOP_PLUS, FREE)

    def test_default_semantics_from_configuration(self):
        ConfigManager.activate({**ConfigManager.DEFAULT_CONFIG, 'default_semantics': FREE})
        assert normalize("eps ; epsdag").mode == FREE

    def test_unknown_semantics(self):
        with pytest.raises(ValueError):
            normalize("eta", "quantum")

    def test_boundary_mismatch(self):
        with pytest.raises(BoundaryMismatchError):
            diagram_eq("eta", "eps")

    def test_canonical_matching(self):
        assert canonical_matching("+", "+") == ((0, 1),)
        assert canonical_matching("-+", "") == ((0, 1),)
        assert canonical_matching("+", "-") is None
        assert canonical_matching("-+", "-+") == ((0, 1), (2, 3))
        assert representative_matching("-+", "-+") == ((0, 2), (1, 3))
        assert representative_matching("+", "-") is None

    def test_render_matching(self):
        test_cases = [
            ("-+", "-+", ((0, 2), (1, 3)), "id(-+)"),
            ("", "", (), "id(1)"),
            ("-+", "-+", ((0, 1), (2, 3)), "eps ; epsdag"),
            ("+", "+-+", ((0, 1), (2, 3)), "id(+) * epsdag"),
            ("+-+", "+", ((0, 1), (2, 3)), "etadag * id(+)"),
            ("+-+-", "+-+-", ((0, 3), (1, 2), (4, 7), (5, 6)),
             "id(+) * eps * id(-) ; etadag ; eta ; id(+) * epsdag * id(-)"),
        ]
        for dom, cod, matching, expected in test_cases:
            text = render_matching(dom, cod, matching)
            assert text == expected
            b = typecheck(text)
            assert (b.domain, b.codomain) == (dom, cod)
            assert not b.zero_object

    def test_render_and_record(self):
        nf = normalize(LOOP_MINUS, FREE)
        assert render_normal_form(nf) == ("boundary: 1 -> 1\nmode: free\nterms:\n"
                                          "  - pairs: []\n    diagram: id(1)\n    coefficient: 1 - c")
        record = normal_form_to_record(nf)
        assert record.terms[0].diagram == "id(1)"
        assert record.terms[0].coefficient == "1 - c"
        assert render_normal_form(normalize("id(++)", SPAN)).endswith("terms: 0")

    def test_confluence(self):
        assert confluence_sample(samples=25, max_generators=6, mode=SPAN, seed=3) == []

    def test_span_confluence_at_scale(self):
        assert confluence_sample(samples=1000, max_generators=8, mode=SPAN, seed=17, orders=2) == []


class TestRandomExpressions:
    """Test the random diagram generator"""

    def test_expressions_are_well_typed(self):
        rng = random.Random(7)
        for _ in range(50):
            e = random_expression(rng, max_generators=8)
            typecheck(e)
            assert count_generators(e) <= 8

    def test_alternating_without_crossings(self):
        rng = random.Random(11)
        for _ in range(50):
            e = random_expression(rng, max_generators=6, crossings=False, alternating=True)
            assert not typecheck(e).zero_object
            assert "x(" not in render_expr(e)


class TestDecategorification:
    """Test classes of sign words as matrices"""

    def test_generators(self):
        assert k0_object("+").entries.tolist() == [[0, 0], [1, 0]]
        assert k0_object("-").entries.tolist() == [[0, 1], [0, 0]]
        assert k0_object("") == RationalMatrix.identity(["A", "A*"])

    def test_words(self):
        assert k0_object("+-").entries.tolist() == [[0, 0], [0, 1]]
        assert k0_object("-+").entries.tolist() == [[1, 0], [0, 0]]
        assert k0_object("++").is_zero()

    def test_direct_sum_is_identity(self):
        assert k0_matrix(["+-", "-+"]) == k0_matrix("1")

    def test_expression_boundaries(self):
        dom, cod = k0_matrix("eta")
        assert dom == k0_object("")
        assert cod == k0_object("+-")

    def test_independent_of_group(self):
        assert k0_object("-+", "S3") == k0_object("-+", "Z1")


class TestSpanEvaluation:
    """Test evaluation of diagrams into the groupoid model"""

    def test_generators(self):
        test_cases = [("eta", "eta"), ("eps", "eps"), ("etadag", "eta'"), ("epsdag", "eps'")]
        for text, name in test_cases:
            t = evaluate_to_span(text, "Z1")
            assert t.name == name
            assert validate_2morphism(t).valid

    def test_rejected_diagrams(self):
        for text in ("x(+,-)", "id(++)", "eta ; x(+,-) ; eps"):
            with pytest.raises(EvaluationError):
                evaluate_to_span(text, "Z1")

    def test_identity_boundaries(self):
        t = evaluate_to_span("id(-+)", "Z1")
        assert validate_2morphism(t).valid
        assert t.from_span is t.to_span

    def test_oracle_agrees(self):
        test_cases = [
            ("eps ; epsdag", "id(-+)", True),
            (LOOP_PLUS, LOOP_PLUS, True),
            (LOOP_PLUS, LOOP_MINUS, False),
        ]
        for first, second, equal in test_cases:
            result = oracle_check(first, second, "Z1")
            assert result.diagram_equal == equal
            assert result.agree, (first, second)

    def test_oracle_agrees_on_random_pairs(self):
        rng = random.Random(23)
        by_boundary = {}
        for _ in range(40):
            e = random_expression(rng, max_generators=4, crossings=False, alternating=True)
            b = typecheck(e)
            by_boundary.setdefault((b.domain, b.codomain), []).append(e)
        compared = 0
        for (dom, cod), exprs in by_boundary.items():
            for first, second in zip(exprs, exprs[1:]):
                assert oracle_check(first, second, "Z2").agree, (render_expr(first), render_expr(second))
                compared += 1
            e = exprs[0]
            assert oracle_check(e, Seq(e, Identity(cod)), "Z2").diagram_equal
            assert oracle_check(Sum(e, e), e, "Z2").agree, render_expr(e)
        assert compared > 0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
