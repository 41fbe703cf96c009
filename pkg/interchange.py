"""
Interchange formats
JSON records for groupoids, functors, spans, 2-morphisms, matrices, witnesses and verification reports.
The kind of a record is told by the fields it carries.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, ClassVar, Dict, Iterable, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from groupoid_core import FiniteGroupoid, GFunctor, Morphism
from span_calculus import EQUIVALENCE, STRICT, Span, SpanWitness, TwoMorphism
from utils import StructuralError

logger = logging.getLogger(__name__)


class Record(BaseModel):
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    # structural records leave out unset optional fields
    omit_none: ClassVar[bool] = False

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, by_alias=True, exclude_none=self.omit_none)


class MorphismRecord(Record):
    id: Any
    src: Any
    dst: Any


class GroupoidRecord(Record):
    omit_none: ClassVar[bool] = True

    name: Optional[str] = None
    objects: List[Any]
    morphisms: List[MorphismRecord]
    identity: Dict[str, Any] = Field(description="object -> identity morphism")
    compose: List[Tuple[Any, Any, Any]] = Field(description="Triples [f, g, h] with h = g∘f")


GroupoidRef = Union[str, GroupoidRecord]


class FunctorRecord(Record):
    """A functor; inside a span the legs leave source and target implicit"""
    omit_none: ClassVar[bool] = True

    name: Optional[str] = None
    source: Optional[GroupoidRef] = None
    target: Optional[GroupoidRef] = None
    on_objects: Dict[str, Any]
    on_morphisms: Dict[str, Any]


class SpanRecord(Record):
    """target <-leftLeg- apex -rightLeg-> source"""
    omit_none: ClassVar[bool] = True

    name: Optional[str] = None
    source: Optional[GroupoidRef] = None
    target: Optional[GroupoidRef] = None
    apex: GroupoidRef
    leftLeg: FunctorRecord
    rightLeg: FunctorRecord


SpanRef = Union[str, SpanRecord]


class TwoMorphismRecord(Record):
    """inner is the span to-apex <-R- Z -S-> from-apex; mu, nu are indexed by the objects of Z"""
    omit_none: ClassVar[bool] = True

    name: Optional[str] = None
    from_: SpanRef = Field(alias='from')
    to: SpanRef
    inner: SpanRecord
    mu: Dict[str, Any]
    nu: Dict[str, Any]


class MatrixRecord(Record):
    rows: List[str]
    cols: List[str]
    entries: List[List[str]] = Field(description="Exact rationals as p/q in lowest terms")


class WitnessRecord(Record):
    mode: str
    h: FunctorRecord
    theta_left: Dict[str, Any]
    theta_right: Dict[str, Any]


class NormalFormTerm(Record):
    pairs: List[Tuple[int, int]]
    diagram: str = Field(description="A diagram expression with this matching")
    coefficient: str = Field(description="Polynomial in the loop scalar c")


class NormalFormRecord(Record):
    domain: str
    codomain: str
    mode: str
    terms: List[NormalFormTerm]


class CheckResult(Record):
    name: str
    paper_eq: str = Field(description="Equation of the fermion model the check verifies")
    strict: Optional[bool] = Field(None, description="Verdict up to strict isomorphism; None when not run")
    equivalence: Optional[bool] = Field(None, description="Verdict up to equivalence; None when not run")
    elapsed_ms: float = 0.0
    witness_size: Optional[int] = None
    exhausted: bool = False
    detail: str = ""


class VerificationReport(Record):
    group: str
    order: int
    level: str
    mode: str = Field(EQUIVALENCE, description="Which verdict decides the result")
    basis: List[str]
    checks: List[CheckResult]
    metadata: Dict[str, str] = Field(default_factory=dict)

    def passed_in(self, mode: str) -> bool:
        if mode == STRICT:
            return all(c.strict is True for c in self.checks)
        return all(c.equivalence is True for c in self.checks)

    @property
    def passed(self) -> bool:
        return self.passed_in(self.mode)

    @property
    def exhausted(self) -> bool:
        return any(c.exhausted for c in self.checks)

    def render(self) -> str:
        lines = [f"group: {self.group} (order {self.order})", f"level: {self.level}", f"mode: {self.mode}",
                 f"basis: ({', '.join(self.basis)})"]
        for c in self.checks:
            lines.append(f"- name: {c.name}")
            lines.append(f"  paper_eq: {c.paper_eq}")
            lines.append(f"  strict: {_verdict(c.strict)}")
            lines.append(f"  equivalence: {_verdict(c.equivalence)}")
            lines.append(f"  elapsed_ms: {c.elapsed_ms}")
            if c.witness_size is not None:
                lines.append(f"  witness_size: {c.witness_size}")
            if c.detail:
                lines.append(f"  detail: {c.detail}")
        lines.append(f"result: {'pass' if self.passed else 'fail'}")
        return "\n".join(lines)


def _verdict(value: Optional[bool]) -> str:
    return "skipped" if value is None else ("pass" if value else "fail")


def freeze(value: Any) -> Any:
    """JSON arrays back to the tuples used as identifiers"""
    if isinstance(value, list):
        return tuple(freeze(v) for v in value)
    return value


def thaw(value: Any) -> Any:
    if isinstance(value, tuple):
        return [thaw(v) for v in value]
    return value


def table_key(x: Any) -> str:
    """Key of an identifier in a JSON table: strings stay as they are, anything else is compact JSON"""
    return x if isinstance(x, str) else json.dumps(thaw(x), separators=(",", ":"))


def encode_table(table: Dict[Any, Any]) -> Dict[str, Any]:
    return {table_key(k): thaw(v) for k, v in table.items()}


def decode_table(table: Dict[str, Any], keys: Iterable[Any], what: str) -> Dict[Any, Any]:
    """Resolve table keys against the identifiers they may name"""
    lookup: Dict[str, Any] = {}
    for x in keys:
        k = table_key(x)
        if k in lookup and lookup[k] != x:
            raise StructuralError(f"{what}: identifiers {lookup[k]!r} and {x!r} share the key {k!r}")
        lookup[k] = x
    decoded = {}
    for k, v in table.items():
        if k not in lookup:
            raise StructuralError(f"{what}: unknown identifier {k!r}")
        decoded[lookup[k]] = freeze(v)
    return decoded


# Engine -> record
def groupoid_to_record(g: FiniteGroupoid) -> GroupoidRecord:
    return GroupoidRecord(
        name=g.name or None,
        objects=[thaw(x) for x in g.objects],
        morphisms=[MorphismRecord(id=thaw(m.id), src=thaw(m.src), dst=thaw(m.dst)) for m in g.morphisms],
        identity=encode_table(g.identity),
        compose=[(thaw(f), thaw(g_), thaw(h)) for (f, g_), h in g.compose.items()],
    )


def leg_to_record(F: GFunctor) -> FunctorRecord:
    """Functor tables without source and target, for legs whose ends the enclosing record fixes"""
    return FunctorRecord(name=F.name or None, on_objects=encode_table(F.on_objects),
                         on_morphisms=encode_table(F.on_morphisms))


def _ref(g: FiniteGroupoid, refs: Dict[int, str]) -> GroupoidRef:
    return refs.get(id(g)) or groupoid_to_record(g)


def functor_to_record(F: GFunctor, refs: Optional[Dict[int, str]] = None) -> FunctorRecord:
    refs = refs or {}
    record = leg_to_record(F)
    record.source, record.target = _ref(F.source, refs), _ref(F.target, refs)
    return record


def span_to_record(S: Span, refs: Optional[Dict[int, str]] = None) -> SpanRecord:
    refs = refs or {}
    return SpanRecord(name=S.name or None, source=_ref(S.source, refs), target=_ref(S.target, refs),
                      apex=_ref(S.apex, refs), leftLeg=leg_to_record(S.left), rightLeg=leg_to_record(S.right))


def two_morphism_to_record(t: TwoMorphism, refs: Optional[Dict[int, str]] = None) -> TwoMorphismRecord:
    refs = refs or {}
    inner = SpanRecord(apex=_ref(t.inner.apex, refs), leftLeg=leg_to_record(t.R), rightLeg=leg_to_record(t.S))
    return TwoMorphismRecord(
        name=t.name or None,
        from_=refs.get(id(t.from_span)) or span_to_record(t.from_span, refs),
        to=refs.get(id(t.to_span)) or span_to_record(t.to_span, refs),
        inner=inner, mu=encode_table(t.mu), nu=encode_table(t.nu),
    )


def witness_to_record(w: SpanWitness) -> WitnessRecord:
    return WitnessRecord(mode=w.mode, h=leg_to_record(w.h), theta_left=encode_table(w.theta_left),
                         theta_right=encode_table(w.theta_right))


# Record -> engine
class Loader:
    """Resolves records and relative file references against a base directory"""

    def __init__(self, base_dir: Union[str, Path] = "."):
        self.base_dir = Path(base_dir)
        self._cache: Dict[str, Any] = {}

    def read(self, path: Union[str, Path]) -> Record:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise StructuralError(f"Failed to read {path}: {str(e)}") from e
        return parse_record(data)

    def _resolve(self, ref: Union[str, Record]) -> Any:
        if not isinstance(ref, str):
            return self.build(ref)
        key = str((self.base_dir / ref).resolve())
        if key not in self._cache:
            self._cache[key] = self.build(self.read(self.base_dir / ref))
        return self._cache[key]

    def groupoid(self, ref: Optional[GroupoidRef], what: str = "groupoid") -> FiniteGroupoid:
        if ref is None:
            raise StructuralError(f"{what} is missing")
        g = self._resolve(ref)
        if not isinstance(g, FiniteGroupoid):
            raise StructuralError(f"{ref!r} is not a groupoid record")
        return g

    def span(self, ref: SpanRef) -> Span:
        s = self._resolve(ref)
        if not isinstance(s, Span):
            raise StructuralError(f"{ref!r} is not a span record")
        return s

    def build(self, record: Record) -> Any:
        if isinstance(record, GroupoidRecord):
            return build_groupoid(record)
        if isinstance(record, FunctorRecord):
            return build_leg(record, self.groupoid(record.source, "functor source"),
                             self.groupoid(record.target, "functor target"))
        if isinstance(record, SpanRecord):
            return self.build_span(record)
        if isinstance(record, TwoMorphismRecord):
            from_span, to_span = self.span(record.from_), self.span(record.to)
            inner = self.build_span(record.inner, source=from_span.apex, target=to_span.apex,
                                    name=f"inner({record.name or ''})")
            Z = inner.apex
            return TwoMorphism(from_span, to_span, inner,
                               decode_table(record.mu, Z.objects, "mu"), decode_table(record.nu, Z.objects, "nu"),
                               name=record.name or "")
        return record

    def build_span(self, record: SpanRecord, source: Optional[FiniteGroupoid] = None,
                   target: Optional[FiniteGroupoid] = None, name: Optional[str] = None) -> Span:
        """A span; ends the record leaves out are taken from the caller"""
        source = self.groupoid(record.source, "span source") if record.source is not None else source
        target = self.groupoid(record.target, "span target") if record.target is not None else target
        if source is None or target is None:
            raise StructuralError("span record without source or target")
        apex = self.groupoid(record.apex, "span apex")
        return Span(source, target, apex, build_leg(record.leftLeg, apex, target),
                    build_leg(record.rightLeg, apex, source), name=record.name or name or "")


def build_groupoid(record: GroupoidRecord) -> FiniteGroupoid:
    """Groupoid exactly as recorded; axioms are left to validate_groupoid"""
    objects = [freeze(x) for x in record.objects]
    morphisms = [Morphism(freeze(m.id), freeze(m.src), freeze(m.dst)) for m in record.morphisms]
    compose = {(freeze(f), freeze(g)): freeze(h) for f, g, h in record.compose}
    return FiniteGroupoid(objects, morphisms, decode_table(record.identity, objects, "identity"), compose,
                          name=record.name or "")


def build_leg(record: FunctorRecord, source: FiniteGroupoid, target: FiniteGroupoid) -> GFunctor:
    return GFunctor(source, target, decode_table(record.on_objects, source.objects, "on_objects"),
                    decode_table(record.on_morphisms, [m.id for m in source.morphisms], "on_morphisms"),
                    name=record.name or "")


# marker field -> record type, most specific first
RECORD_TYPES: List[Tuple[str, type]] = [
    ('checks', VerificationReport),
    ('terms', NormalFormRecord),
    ('inner', TwoMorphismRecord),
    ('apex', SpanRecord),
    ('objects', GroupoidRecord),
    ('on_objects', FunctorRecord),
    ('entries', MatrixRecord),
    ('h', WitnessRecord),
]


def record_type(data: Any) -> type:
    """The record type a JSON object describes, told by the fields it carries"""
    if isinstance(data, dict):
        for marker, cls in RECORD_TYPES:
            if marker in data:
                return cls
    raise StructuralError("not an interchange record: no identifying field")


def parse_record(data: Dict[str, Any]) -> Record:
    cls = record_type(data)
    try:
        return cls.model_validate(data)
    except ValidationError as e:
        raise StructuralError(f"malformed {cls.__name__}: {str(e)}") from e


def load(path: Union[str, Path]) -> Any:
    """Read a record file and build the engine object it describes"""
    loader = Loader(Path(path).parent)
    return loader.build(loader.read(path))


def dump(record: Record, path: Union[str, Path]) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.to_json())
    logger.debug(f"Wrote {record.__class__.__name__} to {path}")
    return str(path)


def write_model_records(model: Any, out_dir: str) -> List[str]:
    """Export the components of a fermion model, cross-referencing psi and h by file name"""
    refs = {id(model.psi): "psi.json", id(model.h): "h.json"}
    written = [dump(groupoid_to_record(model.psi), os.path.join(out_dir, "psi.json")),
               dump(groupoid_to_record(model.h), os.path.join(out_dir, "h.json"))]
    for name in ("i", "t"):
        written.append(dump(functor_to_record(getattr(model, name), refs), os.path.join(out_dir, f"{name}.json")))
    for name in ("f", "fdag", "state0", "state1"):
        written.append(dump(span_to_record(getattr(model, name), refs), os.path.join(out_dir, f"{name}.json")))
    span_refs = {**refs, id(model.f): "f.json", id(model.fdag): "fdag.json"}
    for name in ("eta", "eps", "etadag", "epsdag"):
        written.append(dump(two_morphism_to_record(getattr(model, name), span_refs),
                            os.path.join(out_dir, f"{name}.json")))
    logger.info(f"Exported fermion model over {model.group.label} to {out_dir}")
    return written
