"""
Groupoid model of the single-mode fermion algebra
Builds Psi(G), H(G), the functors I and T, the spans F and Fdag, the unit and counit
2-morphisms with their daggers, Fock states, and runs the verification suite
"""

import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field
from sympy.combinatorics import Permutation, PermutationGroup
from sympy.combinatorics.named_groups import CyclicGroup, SymmetricGroup
from tqdm import tqdm

from degroupoidify import RationalMatrix, basis, inner_product, span_matrix, state_vector
from groupoid_core import (
    FiniteGroupoid, GFunctor, Morphism, discrete_groupoid, group_groupoid, terminal_groupoid
)
from interchange import CheckResult, VerificationReport, write_model_records
from span_calculus import (
    EQUIVALENCE, MODES, STRICT, Span, TwoMorphism, associator, associator_inverse, compose_spans,
    dagger_2, direct_sum_2, direct_sum_spans, identity_2, identity_span, left_unitor,
    reduce_2, right_unitor, span_equiv, span_iso, transport_2, two_morphism_eq, validate_2morphism,
    vert_compose_2, whisker_left, whisker_right
)
from utils import (
    BudgetExhaustedError, ConfigManager, GroupSpecError, SearchBudget, SizeGuardError
)

logger = logging.getLogger(__name__)

LEVELS = ("matrices", "spans", "two_morphisms", "adjunction", "all")
T_CONVENTIONS = ("inverse", "plain")

_FAMILY = re.compile(r"^([ZS])<?(\d+)>?$")
_CYCLES = re.compile(r"^(\s*\(\s*\d*(?:[\s,]+\d+)*\s*\)\s*)+$")


class GroupSpec(BaseModel):
    """A finite group as a Cayley table; table[i][j] is the index of g_i·g_j, g_0 the identity"""
    label: str = Field(description="Spec text the group was parsed from")
    table: List[List[int]] = Field(description="Cayley table, row = left factor")

    @property
    def order(self) -> int:
        return len(self.table)

    @property
    def elements(self) -> List[str]:
        return [f"g{k}" for k in range(self.order)]

    @property
    def inverses(self) -> List[int]:
        return [row.index(0) for row in self.table]


def check_cayley_table(table: List[List[int]]) -> int:
    """Validate group axioms and return the index of the identity"""
    n = len(table)
    if n == 0 or any(len(row) != n for row in table):
        raise GroupSpecError("Cayley table must be square and non-empty")
    if any(not 0 <= x < n for row in table for x in row):
        raise GroupSpecError("Cayley table entries must be element indices")
    identity = next((e for e in range(n) if table[e] == list(range(n))
                     and all(table[i][e] == i for i in range(n))), None)
    if identity is None:
        raise GroupSpecError("Cayley table has no identity element")
    for i in range(n):
        if identity not in table[i]:
            raise GroupSpecError(f"element {i} has no inverse")
        for j in range(n):
            for k in range(n):
                if table[table[i][j]][k] != table[i][table[j][k]]:
                    raise GroupSpecError(f"Cayley table is not associative at ({i}, {j}, {k})")
    return identity


def _from_table(label: str, table: List[List[int]]) -> GroupSpec:
    identity = check_cayley_table(table)
    order = [identity] + [i for i in range(len(table)) if i != identity]
    position = {old: new for new, old in enumerate(order)}
    relabelled = [[position[table[a][b]] for b in order] for a in order]
    return GroupSpec(label=label, table=relabelled)


def _from_permutations(label: str, group: PermutationGroup) -> GroupSpec:
    elements = sorted(group.generate(), key=lambda p: p.array_form)
    index = {tuple(p.array_form): k for k, p in enumerate(elements)}
    table = [[index[tuple((p * q).array_form)] for q in elements] for p in elements]
    return GroupSpec(label=label, table=table)


def _parse_cycles(text: str) -> List[List[int]]:
    if not _CYCLES.match(text):
        raise GroupSpecError(f"not a permutation in cycle notation: {text!r}")
    cycles = []
    for body in re.findall(r"\(([^()]*)\)", text):
        points = [int(p) for p in re.split(r"[\s,]+", body.strip()) if p]
        if any(p < 1 for p in points) or len(set(points)) != len(points):
            raise GroupSpecError(f"bad cycle ({body}) in {text!r}")
        if len(points) > 1:
            cycles.append([p - 1 for p in points])
    return cycles


def parse_group_spec(text: str, max_order: Optional[int] = None) -> GroupSpec:
    """
    Resolve a group spec: Z<n>, S<n>, perm:<gen>;<gen>;... (cycle notation,
    points from 1) or cayley:<path> (whitespace separated element indices).
    """
    text = text.strip()
    max_order = ConfigManager.get('max_group_order') if max_order is None else max_order
    family = _FAMILY.match(text)
    if family:
        kind, n = family.group(1), int(family.group(2))
        if n < 1:
            raise GroupSpecError(f"{text}: degree must be at least 1")
        if kind == "Z":
            if n > max_order:
                raise GroupSpecError(f"{text}: order {n} exceeds limit {max_order}")
            return _from_permutations(f"Z{n}", CyclicGroup(n))
        degree_limit = ConfigManager.get('max_symmetric_degree')
        if n > degree_limit:
            raise GroupSpecError(f"{text}: symmetric degree {n} exceeds limit {degree_limit}")
        return _from_permutations(f"S{n}", SymmetricGroup(n))

    if text.startswith("perm:"):
        gens = [_parse_cycles(g) for g in text[len("perm:"):].split(";") if g.strip()]
        if not gens:
            raise GroupSpecError("perm: needs at least one generator")
        degree = max([p + 1 for cycles in gens for c in cycles for p in c] or [1])
        group = PermutationGroup([Permutation(cycles, size=degree) for cycles in gens])
        if group.order() > max_order:
            raise GroupSpecError(f"{text}: order {group.order()} exceeds limit {max_order}")
        return _from_permutations(text, group)

    if text.startswith("cayley:"):
        path = Path(text[len("cayley:"):])
        try:
            rows = [line.replace(",", " ").split() for line in path.read_text().splitlines() if line.strip()]
            table = [[int(x) for x in row] for row in rows]
        except (OSError, ValueError) as e:
            raise GroupSpecError(f"Failed to read Cayley table {path}: {str(e)}") from e
        if len(table) > max_order:
            raise GroupSpecError(f"{text}: order {len(table)} exceeds limit {max_order}")
        return _from_table(f"cayley:{path.name}", table)

    raise GroupSpecError(f"unrecognised group spec {text!r}")


@dataclass
class FermionModel:
    group: GroupSpec
    psi: FiniteGroupoid
    h: FiniteGroupoid
    i: GFunctor
    t: GFunctor
    f: Span
    fdag: Span
    id_psi: Span
    fdag_f: Span
    f_fdag: Span
    eta: TwoMorphism
    eps: TwoMorphism
    etadag: TwoMorphism
    epsdag: TwoMorphism
    state0: Span
    state1: Span
    metadata: Dict[str, str] = field(default_factory=dict)


def _star(g: str) -> str:
    return f"{g}*"


def _diagonal(leg: GFunctor, comma: FiniteGroupoid, name: str) -> GFunctor:
    """x -> (x, x, id), a -> (a, a, id) into the comma groupoid of leg over itself"""
    H, B = leg.source, leg.target
    on_objects = {x: (x, x, B.identity[leg.obj(x)]) for x in H.objects}
    on_morphisms = {m.id: (m.id, m.id, B.identity[leg.obj(m.src)]) for m in H.morphisms}
    functor = GFunctor(H, comma, on_objects, on_morphisms, name=name)
    for o in on_objects.values():
        if not comma.has_object(o):
            raise GroupSpecError(f"diagonal object {o!r} missing from {comma.name}")
    return functor


def _state(psi: FiniteGroupoid, obj: str, name: str) -> Span:
    one = terminal_groupoid()
    apex = discrete_groupoid([name], name=name)
    right = GFunctor(apex, one, {name: "*"}, {("id", name): "id"}, name="!")
    left = GFunctor(apex, psi, {name: obj}, {("id", name): psi.identity[obj]}, name=f"at_{obj}")
    return Span(one, psi, apex, left, right, name=name)


def build_model(spec: Union[GroupSpec, str], t_convention: str = "inverse") -> FermionModel:
    """
    Psi has objects A, A* with loops g_k and g_k*; H is the full subgroupoid on A.
    With the "inverse" convention T sends g to (g⁻¹)* and Aut(A*) carries the
    opposite product, so that T is a covariant functor.
    """
    if isinstance(spec, str):
        spec = parse_group_spec(spec)
    if t_convention not in T_CONVENTIONS:
        raise GroupSpecError(f"unknown T convention {t_convention!r}")
    names, table, inv = spec.elements, spec.table, spec.inverses
    n = spec.order

    morphisms = [Morphism(g, "A", "A") for g in names] + [Morphism(_star(g), "A*", "A*") for g in names]
    compose = {}
    for a in range(n):
        for b in range(n):
            compose[(names[a], names[b])] = names[table[a][b]]
            starred = table[b][a] if t_convention == "inverse" else table[a][b]
            compose[(_star(names[a]), _star(names[b]))] = _star(names[starred])
    psi = FiniteGroupoid(["A", "A*"], morphisms, {"A": names[0], "A*": _star(names[0])}, compose, name="Psi")
    h = group_groupoid(names, {(names[a], names[b]): names[table[a][b]] for a in range(n) for b in range(n)},
                       names[0], obj="A", name="H")

    i = GFunctor(h, psi, {"A": "A"}, {g: g for g in names}, name="I")
    if t_convention == "inverse":
        t_map = {names[k]: _star(names[inv[k]]) for k in range(n)}
    else:
        t_map = {g: _star(g) for g in names}
    t = GFunctor(h, psi, {"A": "A*"}, t_map, name="T")

    f = Span(psi, psi, h, i, t, name="F")
    fdag = Span(psi, psi, h, t, i, name="Fdag")
    id_psi = identity_span(psi)
    fdag_f = compose_spans(fdag, f, name="Fdag.F")
    f_fdag = compose_spans(f, fdag, name="F.Fdag")

    # unit: id => Fdag.F through the diagonal of I
    delta_i = _diagonal(i, fdag_f.apex, "Delta_I")
    eta_inner = Span(psi, fdag_f.apex, h, delta_i, t, name="inner(eta)")
    eta = TwoMorphism(id_psi, fdag_f, eta_inner,
                      {"A": psi.identity["A*"]}, {"A": psi.identity["A*"]}, name="eta")
    # counit: F.Fdag => id through the diagonal of T
    delta_t = _diagonal(t, f_fdag.apex, "Delta_T")
    eps_inner = Span(f_fdag.apex, psi, h, i, delta_t, name="inner(eps)")
    eps = TwoMorphism(f_fdag, id_psi, eps_inner,
                      {"A": psi.identity["A"]}, {"A": psi.identity["A"]}, name="eps")

    model = FermionModel(
        group=spec, psi=psi, h=h, i=i, t=t, f=f, fdag=fdag, id_psi=id_psi, fdag_f=fdag_f, f_fdag=f_fdag,
        eta=eta, eps=eps, etadag=dagger_2(eta), epsdag=dagger_2(eps),
        state0=_state(psi, "A", "s0"), state1=_state(psi, "A*", "s1"),
        metadata={'group': spec.label, 'order': str(n), 't_convention': t_convention, 'basis': "A,A*"},
    )
    logger.debug(f"Built fermion model over {spec.label}: Psi has {len(psi.morphisms)} morphisms, "
                 f"(I|I) has {len(fdag_f.apex.morphisms)}")
    return model


def fock_action(model: FermionModel, which: str, state: int) -> Tuple[Span, RationalMatrix]:
    """Apply F or Fdag to |0> or |1>; returns the composite span and its vector"""
    operators = {"F": model.f, "Fdag": model.fdag}
    states = {0: model.state0, 1: model.state1}
    if which not in operators or state not in states:
        raise GroupSpecError(f"unknown Fock action {which} on |{state}>")
    composite = compose_spans(operators[which], states[state], name=f"{which}|{state}>")
    return composite, state_vector(composite)


def export_model(model: FermionModel, out_dir: str) -> List[str]:
    """Write the interchange files of every model component"""
    return write_model_records(model, out_dir)


# Composite 2-morphisms
def _shrink(reduce: bool) -> Callable[[TwoMorphism], TwoMorphism]:
    return reduce_2 if reduce else (lambda t: t)


def identity_relation(model: FermionModel, name: str, reduce: bool = True) -> Tuple[TwoMorphism, TwoMorphism]:
    """A composite of units and counits and the identity 2-morphism it should equal"""
    s = _shrink(reduce)
    m = model

    def vert(beta, alpha):
        return s(vert_compose_2(s(beta), s(alpha)))

    if name == "counit_then_dagger":
        return vert(m.epsdag, m.eps), identity_2(m.f_fdag)
    if name == "dagger_then_unit":
        return vert(m.eta, m.etadag), identity_2(m.fdag_f)
    if name == "loops_sum":
        return direct_sum_2(vert(m.eps, m.epsdag), vert(m.etadag, m.eta)), identity_2(m.id_psi)
    raise KeyError(name)


def zigzag_relation(model: FermionModel, name: str, reduce: bool = True) -> Tuple[TwoMorphism, TwoMorphism]:
    """A snake composite, rebracketed through the associator and closed by unitors, and its expected identity"""
    s = _shrink(reduce)
    F, Fd = model.f, model.fdag
    idF, idFd = identity_2(F), identity_2(Fd)

    def zig(first, second, enter, rebracket, leave):
        a = s(transport_2(first, enter, rebracket))
        b = s(transport_2(second, None, leave))
        return s(vert_compose_2(b, a))

    if name == "zigzag_F":
        return zig(whisker_left(F, model.eta), whisker_right(model.eps, F),
                   right_unitor(F), associator_inverse(F, Fd, F), left_unitor(F)), idF
    if name == "zigzag_Fdag":
        return zig(whisker_right(model.eta, Fd), whisker_left(Fd, model.eps),
                   left_unitor(Fd), associator(Fd, F, Fd), right_unitor(Fd)), idFd
    if name == "zigzag_Fdag_daggers":
        return zig(whisker_left(Fd, model.epsdag), whisker_right(model.etadag, Fd),
                   right_unitor(Fd), associator_inverse(Fd, F, Fd), left_unitor(Fd)), idFd
    if name == "zigzag_F_daggers":
        return zig(whisker_right(model.epsdag, F), whisker_left(F, model.etadag),
                   left_unitor(F), associator(F, Fd, F), right_unitor(F)), idF
    raise KeyError(name)


IDENTITY_RELATIONS = ("counit_then_dagger", "dagger_then_unit", "loops_sum")
ZIGZAG_RELATIONS = ("zigzag_F", "zigzag_Fdag", "zigzag_Fdag_daggers", "zigzag_F_daggers")


# Checks: each returns (strict, equivalence, witness_size, detail)
CheckOutcome = Tuple[Optional[bool], Optional[bool], Optional[int], str]


def _matrix(model: FermionModel, rows: List[List[int]]) -> RationalMatrix:
    b = basis(model.psi)
    return RationalMatrix(b, b, rows)


def _check_fock_vectors(model, budget) -> CheckOutcome:
    expected = {("Fdag", 0): [0, 1], ("F", 1): [1, 0], ("F", 0): [0, 0], ("Fdag", 1): [0, 0]}
    failed = []
    for (which, state), vector in expected.items():
        _, v = fock_action(model, which, state)
        if v.column() != vector:
            failed.append(f"{which}|{state}> = {v.column()}")
    ok = not failed
    return ok, ok, None, "; ".join(failed) or "Fdag|0>=|1>, F|1>=|0>, F|0>=0, Fdag|1>=0"


def _check_fock_spans(model, budget) -> CheckOutcome:
    expected = {("Fdag", 0): model.state1, ("F", 1): model.state0, ("F", 0): None, ("Fdag", 1): None}
    strict, equiv, size = True, True, 0
    for (which, state), target in expected.items():
        composite, _ = fock_action(model, which, state)
        size = max(size, len(composite.apex.objects))
        if target is None:
            empty = composite.apex.is_empty()
            strict, equiv = strict and empty, equiv and empty
            continue
        strict = strict and span_iso(composite, target, budget) is not None
        equiv = equiv and span_equiv(composite, target, budget) is not None
    return strict, equiv, size, "composites against state spans"


def _check_orthonormality(model, budget) -> CheckOutcome:
    v0, v1 = state_vector(model.state0), state_vector(model.state1)
    values = (inner_product(v0, v0), inner_product(v1, v1), inner_product(v0, v1))
    ok = values == (1, 1, 0)
    return ok, ok, None, f"<0|0>={values[0]}, <1|1>={values[1]}, <0|1>={values[2]}"


def _check_matrices(model, budget) -> CheckOutcome:
    mf, mfd = span_matrix(model.f), span_matrix(model.fdag)
    ok = mf == _matrix(model, [[0, 1], [0, 0]]) and mfd == _matrix(model, [[0, 0], [1, 0]])
    return ok, ok, None, f"F={mf.to_record()['entries']}, Fdag={mfd.to_record()['entries']}"


def _check_anticommutator(model, budget) -> CheckOutcome:
    mf, mfd = span_matrix(model.f), span_matrix(model.fdag)
    total = mf @ mfd + mfd @ mf
    ok = total == RationalMatrix.identity(basis(model.psi))
    return ok, ok, None, f"F.Fdag + Fdag.F = {total.to_record()['entries']}"


def _check_functoriality(model, budget) -> CheckOutcome:
    mf, mfd = span_matrix(model.f), span_matrix(model.fdag)
    ok = span_matrix(model.fdag_f) == mfd @ mf and span_matrix(model.f_fdag) == mf @ mfd
    return ok, ok, None, "matrices of composites against products"


def _check_span_anticommutator(model, budget) -> CheckOutcome:
    total = span_matrix(direct_sum_spans(model.f_fdag, model.fdag_f))
    ok = total == RationalMatrix.identity(basis(model.psi))
    return ok, ok, None, f"matrix of the direct sum = {total.to_record()['entries']}"


def _check_nilpotency(model, budget) -> CheckOutcome:
    ff = compose_spans(model.f, model.f)
    fdfd = compose_spans(model.fdag, model.fdag)
    ok = ff.apex.is_empty() and fdfd.apex.is_empty()
    return ok, ok, 0, f"F.F has {len(ff.apex.objects)} objects, Fdag.Fdag has {len(fdfd.apex.objects)}"


def _check_resolution(model, budget) -> CheckOutcome:
    total = direct_sum_spans(model.f_fdag, model.fdag_f)
    strict = span_iso(total, model.id_psi, budget) is not None
    witness = span_equiv(total, model.id_psi, budget)
    return strict, witness is not None, len(total.apex.objects), "(F.Fdag)+(Fdag.F) against id_Psi"


def _check_two_morphisms(model, budget) -> CheckOutcome:
    errors = []
    for t in (model.eta, model.eps, model.etadag, model.epsdag):
        report = validate_2morphism(t)
        errors.extend(f"{t.name}: {e}" for e in report.errors)
    ok = not errors
    return ok, ok, None, "; ".join(errors) or "eta, eps, etadag, epsdag natural and invertible"


def _relation_check(builder: Callable, key: str) -> Callable:
    def check(model, budget) -> CheckOutcome:
        try:
            composite, expected = builder(model, key, reduce=False)
            strict = two_morphism_eq(composite, expected, mode=STRICT, budget=budget) is not None
        except SizeGuardError as e:
            logger.warning(f"Strict comparison of {key} skipped: {str(e)}")
            strict = None
        composite, expected = builder(model, key, reduce=True)
        witness = two_morphism_eq(composite, expected, mode=EQUIVALENCE, budget=budget)
        return strict, witness is not None, len(composite.inner.apex.objects), f"{composite.name} against {expected.name}"
    return check


CHECKS: Dict[str, List[Tuple[str, str, Callable]]] = {
    "matrices": [
        ("fock_vectors", "Eq 2", _check_fock_vectors),
        ("orthonormality", "Eq 3", _check_orthonormality),
        ("matrices", "Eq 4", _check_matrices),
        ("anticommutator", "Eq 1", _check_anticommutator),
        ("functoriality", "Eq 14", _check_functoriality),
        ("span_anticommutator", "Eq 8", _check_span_anticommutator),
    ],
    "spans": [
        ("fock_spans", "Eq 2", _check_fock_spans),
        ("nilpotency", "Eq 18", _check_nilpotency),
        ("resolution_of_identity", "Eq 8", _check_resolution),
    ],
    "two_morphisms": [
        ("two_morphism_validity", "Eq 20-22", _check_two_morphisms),
        ("counit_then_dagger", "Eq 23a", _relation_check(identity_relation, "counit_then_dagger")),
        ("dagger_then_unit", "Eq 23b", _relation_check(identity_relation, "dagger_then_unit")),
        ("loops_sum", "Eq 23c", _relation_check(identity_relation, "loops_sum")),
    ],
    "adjunction": [
        ("zigzag_F", "Eq 24a", _relation_check(zigzag_relation, "zigzag_F")),
        ("zigzag_Fdag", "Eq 24b", _relation_check(zigzag_relation, "zigzag_Fdag")),
        ("zigzag_Fdag_daggers", "Eq 24c", _relation_check(zigzag_relation, "zigzag_Fdag_daggers")),
        ("zigzag_F_daggers", "Eq 24d", _relation_check(zigzag_relation, "zigzag_F_daggers")),
    ],
}


def _run_check(model: FermionModel, name: str, paper_eq: str, check: Callable,
               max_nodes: Optional[int], cancel_event: threading.Event) -> CheckResult:
    budget = SearchBudget(max_nodes, cancel_event)
    start = time.perf_counter()
    try:
        strict, equiv, size, detail = check(model, budget)
        result = CheckResult(name=name, paper_eq=paper_eq, strict=strict, equivalence=equiv,
                             witness_size=size, detail=detail)
    except BudgetExhaustedError as e:
        logger.warning(f"Check {name} stopped: {str(e)}")
        result = CheckResult(name=name, paper_eq=paper_eq, strict=None, equivalence=None,
                             exhausted=True, detail=str(e))
    except SizeGuardError as e:
        logger.warning(f"Check {name} refused: {str(e)}")
        result = CheckResult(name=name, paper_eq=paper_eq, strict=None, equivalence=None, detail=str(e))
    result.elapsed_ms = round((time.perf_counter() - start) * 1000, 3)
    logger.info(f"{name}: strict={result.strict} equivalence={result.equivalence} ({result.elapsed_ms} ms)")
    return result


def verify_all(spec: Union[FermionModel, GroupSpec, str], level: str = "all", jobs: Optional[int] = None,
               budget: Optional[int] = None, progress: bool = False,
               cancel_event: Optional[threading.Event] = None, mode: str = EQUIVALENCE) -> VerificationReport:
    """
    Run every check of the requested level. Checks are independent and may run
    on a thread pool; the report keeps the fixed check order. ``mode`` picks the
    verdict that decides whether the report passes.
    """
    if level not in LEVELS:
        raise ValueError(f"unknown verification level {level!r}")
    if mode not in MODES:
        raise ValueError(f"unknown comparison mode {mode!r}")
    model = spec if isinstance(spec, FermionModel) else build_model(spec)
    jobs = jobs or ConfigManager.get('jobs')
    budget = ConfigManager.get('search_budget') if budget is None else budget
    cancel_event = cancel_event or threading.Event()
    groups = [g for g in CHECKS if level in (g, "all")]
    selected = [c for g in groups for c in CHECKS[g]]

    logger.info(f"Verifying {len(selected)} checks over {model.group.label} (level={level}, jobs={jobs})")
    with tqdm(total=len(selected), desc=f"verify {model.group.label}", disable=not progress) as bar:
        def run(item):
            result = _run_check(model, *item, budget, cancel_event)
            bar.update(1)
            return result

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(run, selected))
        else:
            results = [run(item) for item in selected]

    return VerificationReport(group=model.group.label, order=model.group.order, level=level, mode=mode,
                              basis=[str(b) for b in basis(model.psi)], checks=results,
                              metadata=dict(model.metadata))


if __name__ == "__main__":
    report = verify_all(os.getenv("GROUPOIDIFY_GROUP", "Z2"), level="matrices")
    for check in report.checks:
        print(f"{check.name}: {check.equivalence} ({check.detail})")
