"""
Test suite for fermion_model.py
Tests group specs, the groupoid model of the fermion, Fock actions, export and the verification suite
"""

import pytest
import shutil
import tempfile
import threading
from pathlib import Path

import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from degroupoidify import span_matrix
from fermion_model import (
    CHECKS, IDENTITY_RELATIONS, ZIGZAG_RELATIONS, build_model, check_cayley_table, export_model, fock_action,
    identity_relation, parse_group_spec, verify_all, zigzag_relation
)
from groupoid_core import validate_functor, validate_groupoid
from interchange import load
from span_calculus import (
    EQUIVALENCE, Span, TwoMorphism, horiz_compose_2, identity_2, reduce_2, two_morphism_eq, validate_2morphism,
    vert_compose_2
)
from utils import ConfigManager, GroupSpecError


class TestGroupSpecs:
    """Test parsing of group specs"""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)
        ConfigManager._active = None

    def test_named_families(self):
        test_cases = [("Z1", 1), ("Z4", 4), ("Z<5>", 5), ("S3", 6), ("S4", 24), ("Z24", 24)]
        for text, order in test_cases:
            spec = parse_group_spec(text)
            assert spec.order == order
            assert spec.table[0] == list(range(order))
            check_cayley_table(spec.table)

    def test_permutation_generators(self):
        assert parse_group_spec("perm:(1 2 3)").order == 3
        assert parse_group_spec("perm:(1 2);(1 2 3)").order == 6
        assert parse_group_spec("perm:(1,2)(3,4);(1,3)(2,4)").order == 4

    def test_cayley_file(self):
        path = Path(self.temp_dir) / "swap.txt"
        # identity is element 1 here
        path.write_text("1 0\n0 1\n")
        spec = parse_group_spec(f"cayley:{path}")
        assert spec.table == [[0, 1], [1, 0]]
        assert spec.label == "cayley:swap.txt"

    def test_rejected_specs(self):
        bad = ["Q8", "Z25", "S5", "Z0", "perm:(1 1)", "perm:", f"cayley:{self.temp_dir}/missing.txt"]
        for text in bad:
            with pytest.raises(GroupSpecError):
                parse_group_spec(text)

    def test_limits_follow_configuration(self):
        ConfigManager.activate({**ConfigManager.DEFAULT_CONFIG, 'max_group_order': 3})
        with pytest.raises(GroupSpecError):
            parse_group_spec("Z4")
        assert parse_group_spec("Z3").order == 3

    def test_cayley_axioms(self):
        test_cases = [
            [[0, 1], [1, 1]],       # no inverse
            [[0, 1], [1]],          # not square
            [[1, 1], [1, 1]],       # no identity
            [[0, 2], [1, 0]],       # index out of range
        ]
        for table in test_cases:
            with pytest.raises(GroupSpecError):
                check_cayley_table(table)


class TestModelConstruction:
    """Test Psi, H, I, T and the spans F and Fdag"""

    def test_psi_and_h(self):
        model = build_model("Z3")
        assert model.psi.objects == ("A", "A*")
        assert len(model.psi.morphisms) == 6
        assert model.h.objects == ("A",)
        assert validate_groupoid(model.psi).valid
        assert validate_groupoid(model.h).valid

    def test_legs_are_functors_for_nonabelian_groups(self):
        for convention in ("inverse", "plain"):
            model = build_model("S3", t_convention=convention)
            assert validate_functor(model.i).valid
            assert validate_functor(model.t).valid, convention

    def test_spans(self):
        model = build_model("Z2")
        assert model.f.left is model.i and model.f.right is model.t
        assert model.fdag.left is model.t and model.fdag.right is model.i
        assert model.metadata['basis'] == "A,A*"

    def test_unit_and_counit_are_valid(self):
        model = build_model("S3")
        for t in (model.eta, model.eps, model.etadag, model.epsdag):
            report = validate_2morphism(t)
            assert report.valid, (t.name, report.errors)

    def test_unknown_convention(self):
        with pytest.raises(GroupSpecError):
            build_model("Z2", t_convention="sideways")


class TestFockAction:
    """Test F and Fdag on the Fock states"""

    def setup_method(self):
        self.model = build_model("Z2")

    def test_vectors(self):
        test_cases = [
            ("Fdag", 0, [0, 1]),
            ("F", 1, [1, 0]),
            ("F", 0, [0, 0]),
            ("Fdag", 1, [0, 0]),
        ]
        for which, state, expected in test_cases:
            _, vector = fock_action(self.model, which, state)
            assert vector.column() == expected

    def test_annihilated_states_have_empty_apex(self):
        composite, _ = fock_action(self.model, "F", 0)
        assert composite.apex.is_empty()

    def test_unknown_action(self):
        with pytest.raises(GroupSpecError):
            fock_action(self.model, "G", 0)


class TestRelations:
    """Test the composites behind the identity and zig-zag relations"""

    def setup_method(self):
        self.model = build_model("Z2")

    def test_identity_relations(self):
        for name in IDENTITY_RELATIONS:
            composite, expected = identity_relation(self.model, name)
            assert two_morphism_eq(composite, expected, mode=EQUIVALENCE) is not None, name

    def test_zigzags(self):
        for name in ZIGZAG_RELATIONS:
            composite, expected = zigzag_relation(self.model, name)
            assert validate_2morphism(composite).valid, name
            assert two_morphism_eq(composite, expected, mode=EQUIVALENCE) is not None, name

    def test_unknown_relation(self):
        with pytest.raises(KeyError):
            identity_relation(self.model, "nope")
        with pytest.raises(KeyError):
            zigzag_relation(self.model, "nope")


class TestVerification:
    """Test the verification suite"""

    def test_report_order_is_fixed(self):
        expected = [name for name, _, _ in CHECKS["matrices"]]
        serial = verify_all("Z2", level="matrices", jobs=1)
        parallel = verify_all("Z2", level="matrices", jobs=3)
        assert [c.name for c in serial.checks] == expected
        assert [c.name for c in parallel.checks] == expected
        assert serial.passed and parallel.passed

    def test_full_suite_small_groups(self):
        for group in ("Z1", "Z2"):
            report = verify_all(group, level="all")
            failed = [c.name for c in report.checks if c.equivalence is not True]
            assert not failed, (group, failed)
            assert report.basis == ["A", "A*"]
            assert not report.exhausted

    def test_matrices_and_spans_nonabelian(self):
        for level in ("matrices", "spans"):
            assert verify_all("S3", level=level).passed

    def test_two_morphisms_and_adjunction_across_groups(self):
        for group in ("Z1", "Z3", "S3"):
            for level in ("two_morphisms", "adjunction"):
                report = verify_all(group, level=level)
                failed = [(c.name, c.paper_eq) for c in report.checks if c.equivalence is not True]
                assert not failed, (group, level, failed)
                assert not report.exhausted

    def test_cancellation_marks_checks_exhausted(self):
        event = threading.Event()
        event.set()
        report = verify_all("Z2", level="spans", cancel_event=event)
        assert report.exhausted
        assert not report.passed
        exhausted = [c for c in report.checks if c.exhausted]
        assert all(c.equivalence is None for c in exhausted)

    def test_unknown_level(self):
        with pytest.raises(ValueError):
            verify_all("Z1", level="everything")


class TestTwoCategoryLaws:
    """Test the interchange law on the unit and counit of the model"""

    def test_interchange(self):
        for group in ("Z1", "Z2"):
            m = build_model(group)
            alpha, alpha2 = m.eta, m.etadag
            beta, beta2 = m.epsdag, m.eps
            lhs = horiz_compose_2(vert_compose_2(beta2, beta), vert_compose_2(alpha2, alpha))
            rhs = vert_compose_2(horiz_compose_2(beta2, alpha2), horiz_compose_2(beta, alpha))
            assert validate_2morphism(lhs).valid
            assert validate_2morphism(rhs).valid
            assert two_morphism_eq(reduce_2(lhs), reduce_2(rhs), mode=EQUIVALENCE) is not None, group

    def test_interchange_with_an_identity(self):
        m = build_model("Z2")
        ident = identity_2(m.f)
        lhs = horiz_compose_2(vert_compose_2(ident, ident), vert_compose_2(m.etadag, m.eta))
        rhs = vert_compose_2(horiz_compose_2(ident, m.etadag), horiz_compose_2(ident, m.eta))
        assert validate_2morphism(rhs).valid
        assert two_morphism_eq(reduce_2(lhs), reduce_2(rhs), mode=EQUIVALENCE) is not None


class TestExport:
    """Test the model export directory"""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_export_and_reload(self):
        model = build_model("Z2")
        written = export_model(model, self.temp_dir)
        names = sorted(Path(p).name for p in written)
        assert names == sorted(f"{n}.json" for n in ("psi", "h", "i", "t", "f", "fdag", "state0", "state1",
                                                     "eta", "eps", "etadag", "epsdag"))

        f = load(Path(self.temp_dir) / "f.json")
        assert isinstance(f, Span)
        assert span_matrix(f) == span_matrix(model.f)

        eta = load(Path(self.temp_dir) / "eta.json")
        assert isinstance(eta, TwoMorphism)
        assert validate_2morphism(eta).valid


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
