"""
Test suite for interchange.py
Tests JSON records, file references and verification reports
"""

import pytest
import json
import shutil
import tempfile
from pathlib import Path

import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from degroupoidify import span_matrix
from fermion_model import build_model, parse_group_spec
from groupoid_core import FiniteGroupoid, GFunctor, codiscrete_groupoid, group_groupoid, terminal_groupoid, \
    validate_functor, validate_groupoid
from interchange import (
    CheckResult, FunctorRecord, GroupoidRecord, MatrixRecord, SpanRecord, TwoMorphismRecord, VerificationReport,
    decode_table, dump, groupoid_to_record, load, parse_record, span_to_record, table_key, two_morphism_to_record
)
from span_calculus import EQUIVALENCE, STRICT, Span, TwoMorphism, span_iso, two_morphism_eq, validate_2morphism
from utils import StructuralError


def z2():
    return group_groupoid([0, 1], {(a, b): (a + b) % 2 for a in (0, 1) for b in (0, 1)}, 0, name="Z2")


Z2_BY_HAND = {
    "objects": ["*"],
    "morphisms": [{"id": "e", "src": "*", "dst": "*"}, {"id": "s", "src": "*", "dst": "*"}],
    "identity": {"*": "e"},
    "compose": [["e", "e", "e"], ["e", "s", "s"], ["s", "e", "s"], ["s", "s", "e"]],
}


class TestRecords:
    """Test record parsing and validation"""

    def test_groupoid_record_fields(self):
        record = groupoid_to_record(codiscrete_groupoid(["a", "b"]))
        data = json.loads(record.to_json())
        assert 'kind' not in data
        assert data['identity'] == {"a": ["a", "a"], "b": ["b", "b"]}
        assert len(data['morphisms']) == 4
        assert len(data['compose']) == 8

    def test_kind_told_by_fields(self):
        test_cases = [
            (Z2_BY_HAND, GroupoidRecord),
            ({"on_objects": {}, "on_morphisms": {}}, FunctorRecord),
            ({"rows": ["a"], "cols": ["b"], "entries": [["1"]]}, MatrixRecord),
        ]
        for data, expected in test_cases:
            assert isinstance(parse_record(data), expected)

    def test_unidentifiable_records(self):
        for data in ({'kind': 'sheaf'}, {}, ["groupoid"]):
            with pytest.raises(StructuralError):
                parse_record(data)

    def test_extra_fields_rejected(self):
        data = json.loads(groupoid_to_record(terminal_groupoid()).to_json())
        data['colour'] = 'blue'
        with pytest.raises(StructuralError):
            parse_record(data)

    def test_missing_fields_rejected(self):
        with pytest.raises(StructuralError):
            parse_record({'apex': 'g.json', 'name': 'S'})

    def test_table_keys(self):
        assert table_key("a") == "a"
        assert table_key(3) == "3"
        assert table_key(("a", "b")) == '["a","b"]'
        assert decode_table({'["a","b"]': ["b", "a"]}, [("a", "b")], "t") == {("a", "b"): ("b", "a")}
        with pytest.raises(StructuralError):
            decode_table({"c": "a"}, ["a", "b"], "t")
        with pytest.raises(StructuralError):
            decode_table({"1": 1}, [1, "1"], "t")


class TestFiles:
    """Test dump and load"""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write(self, name, data):
        path = Path(self.temp_dir) / name
        path.write_text(json.dumps(data))
        return path

    def test_hand_written_groupoid(self):
        g = load(self._write("z2.json", Z2_BY_HAND))
        assert isinstance(g, FiniteGroupoid)
        assert g.identity == {"*": "e"}
        assert g.then("s", "s") == "e"
        assert validate_groupoid(g).valid

    def test_hand_written_functor_and_span(self):
        self._write("z2.json", Z2_BY_HAND)
        self._write("one.json", {"objects": ["*"], "morphisms": [{"id": "id", "src": "*", "dst": "*"}],
                                 "identity": {"*": "id"}, "compose": [["id", "id", "id"]]})
        collapse = {"on_objects": {"*": "*"}, "on_morphisms": {"e": "id", "s": "id"}}
        F = load(self._write("f.json", {"source": "z2.json", "target": "one.json", **collapse}))
        assert isinstance(F, GFunctor)
        assert validate_functor(F).valid

        S = load(self._write("s.json", {"source": "one.json", "target": "one.json", "apex": "z2.json",
                                        "leftLeg": collapse, "rightLeg": collapse}))
        assert isinstance(S, Span)
        assert S.source is S.target
        assert span_matrix(S).to_record()['entries'] == [["1/2"]]

    def test_old_field_names_rejected(self):
        self._write("one.json", groupoid_to_record(terminal_groupoid()).model_dump())
        leg = {"on_objects": {"*": "*"}, "on_morphisms": {"id": "id"}}
        path = self._write("s.json", {"source": "one.json", "target": "one.json", "apex": "one.json",
                                      "left": leg, "right": leg})
        with pytest.raises(StructuralError):
            load(path)

    def test_groupoid_with_tuple_identifiers(self):
        g = codiscrete_groupoid(["a", "b", "c"])
        path = dump(groupoid_to_record(g), Path(self.temp_dir) / "nested" / "g.json")
        loaded = load(path)
        assert isinstance(loaded, FiniteGroupoid)
        assert loaded.objects == g.objects
        assert loaded.then(("a", "b"), ("b", "c")) == ("a", "c")
        assert validate_groupoid(loaded).valid

    def test_span_with_file_references(self):
        one, apex = terminal_groupoid(), z2()
        leg = GFunctor(apex, one, {"*": "*"}, {0: "id", 1: "id"}, name="!")
        span = Span(one, one, apex, leg, leg, name="S")
        dump(groupoid_to_record(one), Path(self.temp_dir) / "one.json")
        path = dump(span_to_record(span, {id(one): "one.json"}), Path(self.temp_dir) / "s.json")

        on_disk = json.loads(Path(path).read_text())
        assert on_disk['source'] == "one.json"
        assert isinstance(on_disk['apex'], dict)
        assert on_disk['leftLeg']['on_morphisms'] == {"0": "id", "1": "id"}
        assert 'source' not in on_disk['leftLeg']

        loaded = load(path)
        assert loaded.source is loaded.target
        assert span_matrix(loaded) == span_matrix(span)
        assert span_iso(loaded, span) is not None

    def test_two_morphism_fields(self):
        model = build_model(parse_group_spec("Z2"))
        refs = {id(model.psi): "psi.json", id(model.h): "h.json"}
        dump(groupoid_to_record(model.psi), Path(self.temp_dir) / "psi.json")
        dump(groupoid_to_record(model.h), Path(self.temp_dir) / "h.json")
        record = two_morphism_to_record(model.eta, refs)
        assert isinstance(record, TwoMorphismRecord)
        path = dump(record, Path(self.temp_dir) / "eta.json")

        on_disk = json.loads(Path(path).read_text())
        assert {'from', 'to', 'inner', 'mu', 'nu'} <= set(on_disk)
        assert {'apex', 'leftLeg', 'rightLeg'} <= set(on_disk['inner'])
        assert 'source' not in on_disk['inner']

        loaded = load(path)
        assert isinstance(loaded, TwoMorphism)
        assert validate_2morphism(loaded).valid
        assert two_morphism_eq(loaded, model.eta, STRICT) is not None

    def test_missing_reference(self):
        one = terminal_groupoid()
        leg = GFunctor(one, one, {"*": "*"}, {"id": "id"})
        path = dump(span_to_record(Span(one, one, one, leg, leg), {id(one): "absent.json"}),
                    Path(self.temp_dir) / "s.json")
        with pytest.raises(StructuralError):
            load(path)

    def test_unreadable_file(self):
        path = Path(self.temp_dir) / "broken.json"
        path.write_text("{not json")
        with pytest.raises(StructuralError):
            load(path)
        with pytest.raises(StructuralError):
            load(Path(self.temp_dir) / "nothing.json")

    def test_matrix_record(self):
        record = MatrixRecord(**span_matrix(Span(*self._collapse())).to_record())
        path = dump(record, Path(self.temp_dir) / "m.json")
        assert load(path).entries == [["1/2"]]

    def _collapse(self):
        one, apex = terminal_groupoid(), z2()
        leg = GFunctor(apex, one, {"*": "*"}, {0: "id", 1: "id"})
        return one, one, apex, leg, leg


class TestVerificationReport:
    """Test report verdicts and rendering"""

    def setup_method(self):
        self.report = VerificationReport(
            group="Z2", order=2, level="spans", basis=["A", "A*"],
            checks=[
                CheckResult(name="nilpotency", paper_eq="Eq 18", strict=True, equivalence=True,
                            witness_size=0, detail="empty"),
                CheckResult(name="resolution_of_identity", paper_eq="Eq 8", strict=False, equivalence=True),
            ],
        )

    def test_verdicts(self):
        assert self.report.passed
        assert not self.report.exhausted
        self.report.checks.append(CheckResult(name="fock_spans", paper_eq="Eq 2", exhausted=True))
        assert not self.report.passed
        assert self.report.exhausted

    def test_strict_mode_verdict(self):
        assert self.report.passed_in(EQUIVALENCE)
        assert not self.report.passed_in(STRICT)
        self.report.mode = STRICT
        assert not self.report.passed
        assert self.report.render().endswith("result: fail")

    def test_render(self):
        text = self.report.render()
        assert text.splitlines()[0] == "group: Z2 (order 2)"
        assert "mode: equivalence" in text
        assert "  paper_eq: Eq 8" in text
        assert "  strict: fail" in text
        assert "  witness_size: 0" in text
        assert text.endswith("result: pass")

    def test_skipped_verdicts(self):
        self.report.checks.append(CheckResult(name="fock_spans", paper_eq="Eq 2"))
        assert "  strict: skipped" in self.report.render()

    def test_json_keeps_order_and_paper_eq(self):
        data = json.loads(self.report.to_json())
        assert data['checks'][1]['paper_eq'] == "Eq 8"
        again = parse_record(data)
        assert isinstance(again, VerificationReport)
        assert [c.name for c in again.checks] == ["nilpotency", "resolution_of_identity"]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
