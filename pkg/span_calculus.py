"""
Span calculus for the groupoidification engine
Spans of groupoids, weak pullbacks, spans of spans and their comparison up to isomorphism or equivalence
"""

import logging
import random
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from groupoid_core import (
    FiniteGroupoid, GFunctor, Morphism, ObjectId, MorphismId, compose_functors, connecting_morphisms,
    disjoint_union, discrete_groupoid, empty_groupoid, find_isomorphism, group_isomorphism, guard_size,
    identity_functor, iso_classes, random_functor, random_groupoid, skeleton, _match
)
from utils import BoundaryMismatchError, SearchBudget, StructuralError, ValidationReport, tick

logger = logging.getLogger(__name__)

STRICT = "strict"
EQUIVALENCE = "equivalence"
MODES = (STRICT, EQUIVALENCE)


class Span:
    """
    A span  target <-left- apex -right-> source.

    The right leg points at possible initial states, the left leg at
    possible final states.
    """

    def __init__(self, source: FiniteGroupoid, target: FiniteGroupoid, apex: FiniteGroupoid,
                 left: GFunctor, right: GFunctor, name: str = ""):
        self.source = source
        self.target = target
        self.apex = apex
        self.left = left
        self.right = right
        self.name = name

    def __repr__(self):
        return f"Span({self.name or '?'}: {self.source.name} -> {self.target.name}, apex {self.apex!r})"


class TwoMorphism:
    """
    A span of spans from ``from_span`` (apex X) to ``to_span`` (apex Y).

    ``inner`` is the span Y <-R- Z -S-> X, stored as a Span with source X,
    target Y, left leg R and right leg S. ``mu[z]`` is a morphism of the
    common target from leftLeg_X(S z) to leftLeg_Y(R z); ``nu[z]`` the same
    for right legs in the common source.
    """

    def __init__(self, from_span: Span, to_span: Span, inner: Span,
                 mu: Dict[ObjectId, MorphismId], nu: Dict[ObjectId, MorphismId], name: str = ""):
        self.from_span = from_span
        self.to_span = to_span
        self.inner = inner
        self.mu = dict(mu)
        self.nu = dict(nu)
        self.name = name

    @property
    def R(self) -> GFunctor:
        return self.inner.left

    @property
    def S(self) -> GFunctor:
        return self.inner.right

    def __repr__(self):
        return (f"TwoMorphism({self.name or '?'}: {self.from_span.name} => {self.to_span.name}, "
                f"inner apex {len(self.inner.apex.objects)} objects)")


@dataclass
class SpanWitness:
    """Comparison functor h with leg natural isomorphisms (identities in strict mode)"""
    source: Span
    target: Span
    h: GFunctor
    theta_left: Dict[ObjectId, MorphismId]
    theta_right: Dict[ObjectId, MorphismId]
    mode: str = STRICT


@dataclass
class TwoMorphismWitness:
    mode: str
    inner: SpanWitness
    from_witness: Optional[SpanWitness] = None
    to_witness: Optional[SpanWitness] = None
    coherent: bool = False


def spans_match(s1: Span, s2: Span) -> bool:
    """Structural equality of two spans"""
    if s1 is s2:
        return True
    return (s1.source.same_as(s2.source) and s1.target.same_as(s2.target) and s1.apex.same_as(s2.apex)
            and s1.left.on_objects == s2.left.on_objects and s1.left.on_morphisms == s2.left.on_morphisms
            and s1.right.on_objects == s2.right.on_objects and s1.right.on_morphisms == s2.right.on_morphisms)


def _require_same_boundary(s1: Span, s2: Span, what: str):
    if not (s1.source.same_as(s2.source) and s1.target.same_as(s2.target)):
        raise BoundaryMismatchError(f"{what}: spans {s1.name or '?'} and {s2.name or '?'} have different boundaries")


# Weak pullbacks and 1-morphisms
def weak_pullback(J: GFunctor, G: GFunctor, name: str = "") -> Tuple[FiniteGroupoid, GFunctor, GFunctor]:
    """
    Weak pullback of X -G-> B <-J- Y.

    Objects are triples (x, y, f: G(x) -> J(y)); a morphism (a, b) from
    (x, y, f1) has id (a, b, f1) and target (x', y', J(b)∘f1∘G(a)⁻¹).
    Returns the groupoid and the projections to X and Y.
    """
    if not J.target.same_as(G.target):
        raise BoundaryMismatchError(f"weak pullback of {J.name} and {G.name}: targets differ")
    B, X, Y = G.target, G.source, J.source
    name = name or f"({J.name}|{G.name})"

    objects = [(x, y, f) for x in X.objects for y in Y.objects for f in B.hom(G.obj(x), J.obj(y))]
    guard_size(sum(len(X.out(x)) * len(Y.out(y)) for x, y, _ in objects), f"weak pullback {name}")

    morphisms = []
    for x, y, f1 in objects:
        for a in X.out(x):
            ga_inv = B.inverse(G.mor(a))
            for b in Y.out(y):
                f2 = B.chain(ga_inv, f1, J.mor(b))
                morphisms.append(Morphism((a, b, f1), (x, y, f1), (X.dst(a), Y.dst(b), f2)))
    identity = {(x, y, f): (X.identity[x], Y.identity[y], f) for x, y, f in objects}

    def rule(m1, m2):
        return (X.then(m1[0], m2[0]), Y.then(m1[1], m2[1]), m1[2])

    pullback: Optional[FiniteGroupoid] = None

    def inverse(m):
        return (X.inverse(m[0]), Y.inverse(m[1]), pullback.dst(m)[2])

    pullback = FiniteGroupoid(objects, morphisms, identity, rule, name=name, inverse=inverse)
    pi1 = GFunctor(pullback, X, {o: o[0] for o in objects}, {m.id: m.id[0] for m in morphisms}, name=f"pi1{name}")
    pi2 = GFunctor(pullback, Y, {o: o[1] for o in objects}, {m.id: m.id[1] for m in morphisms}, name=f"pi2{name}")
    logger.debug(f"Built weak pullback {name}: {len(objects)} objects, {len(morphisms)} morphisms")
    return pullback, pi1, pi2


def compose_spans(K: Span, H: Span, name: str = "") -> Span:
    """K∘H: first H (A -> B), then K (B -> C)"""
    if not H.target.same_as(K.source):
        raise BoundaryMismatchError(f"cannot compose {K.name or '?'} after {H.name or '?'}: boundary mismatch")
    name = name or f"{K.name}.{H.name}"
    apex, p1, p2 = weak_pullback(K.right, H.left, name=f"({K.name}|{H.name})")
    left = compose_functors(p2, K.left, name=f"l[{name}]")
    right = compose_functors(p1, H.right, name=f"r[{name}]")
    return Span(H.source, K.target, apex, left, right, name=name)


def identity_span(X: FiniteGroupoid) -> Span:
    ident = identity_functor(X)
    return Span(X, X, X, ident, ident, name=f"id_{X.name}")


def _copair(f1: GFunctor, f2: GFunctor, union: FiniteGroupoid, name: str) -> GFunctor:
    on_objects = {(i, x): f.obj(x) for i, f in enumerate((f1, f2)) for x in f.source.objects}
    on_morphisms = {(i, m.id): f.mor(m.id) for i, f in enumerate((f1, f2)) for m in f.source.morphisms}
    return GFunctor(union, f1.target, on_objects, on_morphisms, name=name)


def direct_sum_spans(s1: Span, s2: Span, name: str = "") -> Span:
    _require_same_boundary(s1, s2, "direct sum")
    name = name or f"({s1.name}+{s2.name})"
    apex = disjoint_union(s1.apex, s2.apex, name=f"({s1.apex.name}+{s2.apex.name})")
    return Span(s1.source, s1.target, apex, _copair(s1.left, s2.left, apex, f"l[{name}]"),
                _copair(s1.right, s2.right, apex, f"r[{name}]"), name=name)


def reverse_span(S: Span) -> Span:
    name = S.name[:-1] if S.name.endswith("'") else f"{S.name}'"
    return Span(S.target, S.source, S.apex, S.right, S.left, name=name)


def span_of_sets(initial: Sequence[Any], final: Sequence[Any], histories: Dict[Any, Tuple[Any, Any]],
                 name: str = "") -> Span:
    """Span of finite sets: each history m goes from initial state i to final state j"""
    A = discrete_groupoid(initial, name="initial")
    B = discrete_groupoid(final, name="final")
    M = discrete_groupoid(list(histories), name="histories")
    right = GFunctor(M, A, {m: i for m, (i, _) in histories.items()},
                     {("id", m): ("id", i) for m, (i, _) in histories.items()}, name="f")
    left = GFunctor(M, B, {m: j for m, (_, j) in histories.items()},
                    {("id", m): ("id", j) for m, (_, j) in histories.items()}, name="g")
    return Span(A, B, M, left, right, name=name or "sets")


def random_span(rng: random.Random, source: FiniteGroupoid, target: FiniteGroupoid,
                max_objects: int = 4, max_order: int = 3, name: str = "") -> Span:
    """Span with a random apex between groupoids made by random_groupoid"""
    name = name or "random"
    apex = random_groupoid(rng, max_objects, max_order, name=f"apex({name})")
    return Span(source, target, apex, random_functor(rng, apex, target, name=f"l[{name}]"),
                random_functor(rng, apex, source, name=f"r[{name}]"), name=name)


# Comparison of spans
def _strict_witness(S1: Span, S2: Span, h: GFunctor) -> SpanWitness:
    return SpanWitness(source=S1, target=S2, h=h,
                       theta_left={x: S1.target.identity[S1.left.obj(x)] for x in S1.apex.objects},
                       theta_right={x: S1.source.identity[S1.right.obj(x)] for x in S1.apex.objects},
                       mode=STRICT)


def span_iso(S1: Span, S2: Span, budget: Optional[SearchBudget] = None) -> Optional[SpanWitness]:
    """Groupoid isomorphism of apexes commuting exactly with both legs"""
    _require_same_boundary(S1, S2, "span isomorphism")

    def object_ok(x, y):
        return S1.left.obj(x) == S2.left.obj(y) and S1.right.obj(x) == S2.right.obj(y)

    def morphism_ok(f, g):
        return S1.left.mor(f) == S2.left.mor(g) and S1.right.mor(f) == S2.right.mor(g)

    h = find_isomorphism(S1.apex, S2.apex, object_ok, morphism_ok, budget=budget)
    return None if h is None else _strict_witness(S1, S2, h)


def _component_equiv(S1: Span, m1: ObjectId, S2: Span, m2: ObjectId, budget: Optional[SearchBudget]):
    """Group iso psi of Aut(m1), Aut(m2) and conjugators w, v aligning both legs, or None"""
    A, B = S1.source, S1.target
    M1, M2 = S1.apex, S2.apex
    if len(M1.loops(m1)) != len(M2.loops(m2)):
        return None
    b1, b2 = S1.left.obj(m1), S2.left.obj(m2)
    a1, a2 = S1.right.obj(m1), S2.right.obj(m2)
    ws, vs = B.hom(b1, b2), A.hom(a1, a2)
    if not ws or not vs:
        return None
    for w in ws:
        w_inv = B.inverse(w)
        for v in vs:
            tick(budget)
            v_inv = A.inverse(v)

            def compatible(k, k2, w=w, w_inv=w_inv, v=v, v_inv=v_inv):
                return (S2.left.mor(k2) == B.chain(w_inv, S1.left.mor(k), w)
                        and S2.right.mor(k2) == A.chain(v_inv, S1.right.mor(k), v))

            psi = group_isomorphism(M1, m1, M2, m2, compatible=compatible, budget=budget)
            if psi is not None:
                return psi, w, v
    return None


def span_equiv(S1: Span, S2: Span, budget: Optional[SearchBudget] = None) -> Optional[SpanWitness]:
    """
    Span equivalence by component matching.

    Apex classes are matched one-to-one so that matched representatives
    have a group isomorphism psi of automorphism groups and conjugating
    arrows w (target side) and v (source side) with
    leftLeg₂∘psi = w·leftLeg₁·w⁻¹ and rightLeg₂∘psi = v·rightLeg₁·v⁻¹.
    The witness functor sends every object to the matched representative.
    """
    _require_same_boundary(S1, S2, "span equivalence")
    M1, M2 = S1.apex, S2.apex
    p1, p2 = iso_classes(M1), iso_classes(M2)
    if sorted(len(M1.loops(r)) for r in p1.representative) != sorted(len(M2.loops(r)) for r in p2.representative):
        return None

    found = {}
    for r1 in p1.representative:
        for r2 in p2.representative:
            local = _component_equiv(S1, r1, S2, r2, budget)
            if local is not None:
                found[(r1, r2)] = local
    assignment = _match(p1.representative, p2.representative, found.keys())
    if assignment is None:
        return None

    A, B = S1.source, S1.target
    conn = connecting_morphisms(M1)
    rep_of = {x: p1.representative[p1.class_of[x]] for x in M1.objects}
    on_objects, on_morphisms, theta_left, theta_right = {}, {}, {}, {}
    for x in M1.objects:
        r1 = rep_of[x]
        _, w, v = found[(r1, assignment[r1])]
        on_objects[x] = assignment[r1]
        theta_left[x] = B.chain(B.inverse(S1.left.mor(conn[x])), w)
        theta_right[x] = A.chain(A.inverse(S1.right.mor(conn[x])), v)
    for m in M1.morphisms:
        r1 = rep_of[m.src]
        psi = found[(r1, assignment[r1])][0]
        on_morphisms[m.id] = psi[M1.chain(conn[m.src], m.id, M1.inverse(conn[m.dst]))]
    h = GFunctor(M1, M2, on_objects, on_morphisms, name="h")
    return SpanWitness(source=S1, target=S2, h=h, theta_left=theta_left, theta_right=theta_right,
                       mode=EQUIVALENCE)


def compare_spans(S1: Span, S2: Span, mode: str = EQUIVALENCE,
                  budget: Optional[SearchBudget] = None) -> Optional[SpanWitness]:
    if mode == STRICT:
        return span_iso(S1, S2, budget)
    return span_equiv(S1, S2, budget)


# Coherence witnesses
def identity_witness(S: Span) -> SpanWitness:
    return _strict_witness(S, S, identity_functor(S.apex))


def compose_witnesses(second: SpanWitness, first: SpanWitness) -> SpanWitness:
    """second∘first as a witness first.source -> second.target"""
    A, B = first.source.source, first.source.target
    h = compose_functors(first.h, second.h)
    theta_left = {x: B.then(first.theta_left[x], second.theta_left[first.h.obj(x)]) for x in first.source.apex.objects}
    theta_right = {x: A.then(first.theta_right[x], second.theta_right[first.h.obj(x)])
                   for x in first.source.apex.objects}
    mode = STRICT if first.mode == STRICT and second.mode == STRICT else EQUIVALENCE
    return SpanWitness(first.source, second.target, h, theta_left, theta_right, mode)


def _relabel_witness(src: Span, tgt: Span, obj_map, mor_map, name: str) -> SpanWitness:
    on_objects = {o: obj_map(o) for o in src.apex.objects}
    on_morphisms = {m.id: mor_map(m.id) for m in src.apex.morphisms}
    for o in on_objects.values():
        if not tgt.apex.has_object(o):
            raise StructuralError(f"{name}: {o!r} is not an object of {tgt.apex.name}")
    return _strict_witness(src, tgt, GFunctor(src.apex, tgt.apex, on_objects, on_morphisms, name=name))


def associator(s3: Span, s2: Span, s1: Span) -> SpanWitness:
    """(s3∘s2)∘s1 -> s3∘(s2∘s1), a strict isomorphism"""
    src = compose_spans(compose_spans(s3, s2), s1)
    tgt = compose_spans(s3, compose_spans(s2, s1))
    return _relabel_witness(
        src, tgt,
        lambda o: ((o[0], o[1][0], o[2]), o[1][1], o[1][2]),
        lambda m: ((m[0], m[1][0], m[2]), m[1][1], m[1][2]),
        name="assoc")


def associator_inverse(s3: Span, s2: Span, s1: Span) -> SpanWitness:
    """s3∘(s2∘s1) -> (s3∘s2)∘s1"""
    src = compose_spans(s3, compose_spans(s2, s1))
    tgt = compose_spans(compose_spans(s3, s2), s1)
    return _relabel_witness(
        src, tgt,
        lambda o: (o[0][0], (o[0][1], o[1], o[2]), o[0][2]),
        lambda m: (m[0][0], (m[0][1], m[1], m[2]), m[0][2]),
        name="assoc_inv")


def left_unitor(S: Span) -> SpanWitness:
    """id∘S -> S, projecting (m, b, phi) to m"""
    src = compose_spans(identity_span(S.target), S)
    B, A = S.target, S.source
    h = GFunctor(src.apex, S.apex, {o: o[0] for o in src.apex.objects},
                 {m.id: m.id[0] for m in src.apex.morphisms}, name="lambda")
    theta_left = {o: B.inverse(o[2]) for o in src.apex.objects}
    theta_right = {o: A.identity[S.right.obj(o[0])] for o in src.apex.objects}
    return SpanWitness(src, S, h, theta_left, theta_right, EQUIVALENCE)


def right_unitor(S: Span) -> SpanWitness:
    """S∘id -> S, projecting (a, m, phi) to m"""
    src = compose_spans(S, identity_span(S.source))
    B = S.target
    h = GFunctor(src.apex, S.apex, {o: o[1] for o in src.apex.objects},
                 {m.id: m.id[1] for m in src.apex.morphisms}, name="rho")
    theta_left = {o: B.identity[S.left.obj(o[1])] for o in src.apex.objects}
    theta_right = {o: o[2] for o in src.apex.objects}
    return SpanWitness(src, S, h, theta_left, theta_right, EQUIVALENCE)


def whisker_witness(K: Span, w: SpanWitness) -> SpanWitness:
    """K∘S -> K∘S' induced by a witness S -> S'"""
    src = compose_spans(K, w.source)
    tgt = compose_spans(K, w.target)
    B, A = w.source.target, w.source.source
    on_objects = {o: (w.h.obj(o[0]), o[1], B.then(B.inverse(w.theta_left[o[0]]), o[2])) for o in src.apex.objects}
    on_morphisms = {}
    for m in src.apex.morphisms:
        a, b, f1 = m.id
        x = src.apex.src(m.id)[0]
        on_morphisms[m.id] = (w.h.mor(a), b, B.then(B.inverse(w.theta_left[x]), f1))
    h = GFunctor(src.apex, tgt.apex, on_objects, on_morphisms, name="whisker")
    C = K.target
    theta_left = {o: C.identity[src.left.obj(o)] for o in src.apex.objects}
    theta_right = {o: w.theta_right[o[0]] for o in src.apex.objects}
    return SpanWitness(src, tgt, h, theta_left, theta_right, w.mode)


# 2-morphisms
def validate_2morphism(t: TwoMorphism) -> ValidationReport:
    """Component-wise invertibility and naturality of mu and nu on every morphism of the inner apex"""
    report = ValidationReport()
    X, Y = t.from_span.apex, t.to_span.apex
    A, B = t.from_span.source, t.from_span.target
    if not (t.to_span.source.same_as(A) and t.to_span.target.same_as(B)):
        report.add("structural: from and to spans have different boundaries")
    if not (t.inner.source.same_as(X) and t.inner.target.same_as(Y)):
        report.add("structural: inner span does not connect the two apexes")
    Z = t.inner.apex
    for z in Z.objects:
        if z not in t.mu or not B.has_morphism(t.mu[z]):
            report.add(f"structural: mu undefined at {z!r}")
        if z not in t.nu or not A.has_morphism(t.nu[z]):
            report.add(f"structural: nu undefined at {z!r}")
    if report.errors:
        report.structural = True
        return report

    lX, rX, lY, rY = t.from_span.left, t.from_span.right, t.to_span.left, t.to_span.right
    R, S = t.R, t.S
    for z in Z.objects:
        mu, nu = t.mu[z], t.nu[z]
        if B.src(mu) != lX.obj(S.obj(z)) or B.dst(mu) != lY.obj(R.obj(z)):
            report.add(f"mu component at {z!r} has wrong endpoints")
        if A.src(nu) != rX.obj(S.obj(z)) or A.dst(nu) != rY.obj(R.obj(z)):
            report.add(f"nu component at {z!r} has wrong endpoints")
        try:
            B.inverse(mu)
            A.inverse(nu)
        except StructuralError:
            report.add(f"component at {z!r} is not invertible")
    if report.errors:
        return report
    for m in Z.morphisms:
        if B.then(t.mu[m.src], lY.mor(R.mor(m.id))) != B.then(lX.mor(S.mor(m.id)), t.mu[m.dst]):
            report.add(f"mu naturality fails on {m.id!r}")
        if A.then(t.nu[m.src], rY.mor(R.mor(m.id))) != A.then(rX.mor(S.mor(m.id)), t.nu[m.dst]):
            report.add(f"nu naturality fails on {m.id!r}")
    return report


def identity_2(S: Span) -> TwoMorphism:
    ident = identity_functor(S.apex)
    inner = Span(S.apex, S.apex, S.apex, ident, ident, name=f"inner(id_{S.name})")
    mu = {x: S.target.identity[S.left.obj(x)] for x in S.apex.objects}
    nu = {x: S.source.identity[S.right.obj(x)] for x in S.apex.objects}
    return TwoMorphism(S, S, inner, mu, nu, name=f"id_{S.name}")


def zero_2(S: Span, T: Span) -> TwoMorphism:
    """The 2-morphism with empty inner apex"""
    _require_same_boundary(S, T, "zero 2-morphism")
    Z = empty_groupoid()
    inner = Span(S.apex, T.apex, Z, GFunctor(Z, T.apex, {}, {}), GFunctor(Z, S.apex, {}, {}), name="inner(0)")
    return TwoMorphism(S, T, inner, {}, {}, name="0")


def dagger_2(t: TwoMorphism) -> TwoMorphism:
    """Swap the inner legs and invert mu, nu componentwise"""
    A, B = t.from_span.source, t.from_span.target
    inner = Span(t.to_span.apex, t.from_span.apex, t.inner.apex, t.S, t.R, name=f"{t.inner.name}'")
    mu = {z: B.inverse(f) for z, f in t.mu.items()}
    nu = {z: A.inverse(f) for z, f in t.nu.items()}
    name = t.name[:-1] if t.name.endswith("'") else f"{t.name}'"
    return TwoMorphism(t.to_span, t.from_span, inner, mu, nu, name=name)


def direct_sum_2(t1: TwoMorphism, t2: TwoMorphism) -> TwoMorphism:
    if not (spans_match(t1.from_span, t2.from_span) and spans_match(t1.to_span, t2.to_span)):
        raise BoundaryMismatchError(f"direct sum of {t1.name} and {t2.name}: boundary mismatch")
    Z = disjoint_union(t1.inner.apex, t2.inner.apex)
    inner = Span(t1.inner.source, t1.inner.target, Z,
                 _copair(t1.R, t2.R, Z, "R"), _copair(t1.S, t2.S, Z, "S"), name="inner(+)")
    mu = {(i, z): f for i, t in enumerate((t1, t2)) for z, f in t.mu.items()}
    nu = {(i, z): f for i, t in enumerate((t1, t2)) for z, f in t.nu.items()}
    return TwoMorphism(t1.from_span, t1.to_span, inner, mu, nu, name=f"({t1.name}+{t2.name})")


def vert_compose_2(beta: TwoMorphism, alpha: TwoMorphism) -> TwoMorphism:
    """beta∘alpha: first alpha (X => Y), then beta (Y => W)"""
    if not spans_match(alpha.to_span, beta.from_span):
        raise BoundaryMismatchError(f"cannot compose {beta.name} after {alpha.name}: middle spans differ")
    A, B = alpha.from_span.source, alpha.from_span.target
    lY, rY = alpha.to_span.left, alpha.to_span.right
    Z, p1, p2 = weak_pullback(beta.S, alpha.R, name=f"({beta.name}|{alpha.name})")
    S = compose_functors(p1, alpha.S, name="S")
    R = compose_functors(p2, beta.R, name="R")
    mu, nu = {}, {}
    for za, zb, g in Z.objects:
        mu[(za, zb, g)] = B.chain(alpha.mu[za], lY.mor(g), beta.mu[zb])
        nu[(za, zb, g)] = A.chain(alpha.nu[za], rY.mor(g), beta.nu[zb])
    inner = Span(alpha.from_span.apex, beta.to_span.apex, Z, R, S, name=f"inner({beta.name}.{alpha.name})")
    return TwoMorphism(alpha.from_span, beta.to_span, inner, mu, nu, name=f"{beta.name}.{alpha.name}")


def horiz_compose_2(alpha2: TwoMorphism, alpha: TwoMorphism) -> TwoMorphism:
    """alpha2*alpha for alpha between spans A -> B and alpha2 between spans B -> C"""
    if not alpha.from_span.target.same_as(alpha2.from_span.source):
        raise BoundaryMismatchError(f"cannot place {alpha2.name} after {alpha.name}: boundary mismatch")
    B = alpha.from_span.target
    from_comp = compose_spans(alpha2.from_span, alpha.from_span)
    to_comp = compose_spans(alpha2.to_span, alpha.to_span)
    lX, rX2 = alpha.from_span.left, alpha2.from_span.right
    G = compose_functors(alpha.S, lX)
    J = compose_functors(alpha2.S, rX2)
    Z, _, _ = weak_pullback(J, G, name=f"({alpha2.name}*{alpha.name})")

    def mediate(z, z2, phi):
        return B.chain(B.inverse(alpha.mu[z]), phi, alpha2.nu[z2])

    s_obj, s_mor, r_obj, r_mor = {}, {}, {}, {}
    for z, z2, phi in Z.objects:
        s_obj[(z, z2, phi)] = (alpha.S.obj(z), alpha2.S.obj(z2), phi)
        r_obj[(z, z2, phi)] = (alpha.R.obj(z), alpha2.R.obj(z2), mediate(z, z2, phi))
    for m in Z.morphisms:
        a, a2, phi1 = m.id
        z, z2, _ = Z.src(m.id)
        s_mor[m.id] = (alpha.S.mor(a), alpha2.S.mor(a2), phi1)
        r_mor[m.id] = (alpha.R.mor(a), alpha2.R.mor(a2), mediate(z, z2, phi1))
    S = GFunctor(Z, from_comp.apex, s_obj, s_mor, name="S")
    R = GFunctor(Z, to_comp.apex, r_obj, r_mor, name="R")
    mu = {o: alpha2.mu[o[1]] for o in Z.objects}
    nu = {o: alpha.nu[o[0]] for o in Z.objects}
    inner = Span(from_comp.apex, to_comp.apex, Z, R, S, name=f"inner({alpha2.name}*{alpha.name})")
    return TwoMorphism(from_comp, to_comp, inner, mu, nu, name=f"({alpha2.name}*{alpha.name})")


def whisker_left(K: Span, alpha: TwoMorphism) -> TwoMorphism:
    """id_K * alpha"""
    return horiz_compose_2(identity_2(K), alpha)


def whisker_right(alpha: TwoMorphism, H: Span) -> TwoMorphism:
    """alpha * id_H"""
    return horiz_compose_2(alpha, identity_2(H))


def transport_2(t: TwoMorphism, from_witness: Optional[SpanWitness] = None,
                to_witness: Optional[SpanWitness] = None) -> TwoMorphism:
    """Re-express t along boundary witnesses t.from_span -> S2 and t.to_span -> T2"""
    A, B = t.from_span.source, t.from_span.target
    fw = from_witness or identity_witness(t.from_span)
    tw = to_witness or identity_witness(t.to_span)
    if not (spans_match(fw.source, t.from_span) and spans_match(tw.source, t.to_span)):
        raise BoundaryMismatchError(f"transport of {t.name}: witnesses do not start at its boundary")
    S = compose_functors(t.S, fw.h, name="S")
    R = compose_functors(t.R, tw.h, name="R")
    mu, nu = {}, {}
    for z in t.inner.apex.objects:
        sz, rz = t.S.obj(z), t.R.obj(z)
        mu[z] = B.chain(B.inverse(fw.theta_left[sz]), t.mu[z], tw.theta_left[rz])
        nu[z] = A.chain(A.inverse(fw.theta_right[sz]), t.nu[z], tw.theta_right[rz])
    inner = Span(fw.target.apex, tw.target.apex, t.inner.apex, R, S, name=t.inner.name)
    return TwoMorphism(fw.target, tw.target, inner, mu, nu, name=t.name)


def reduce_2(t: TwoMorphism) -> TwoMorphism:
    """Restrict the inner apex to its skeleton; equivalent as a span of spans"""
    skel, _ = skeleton(t.inner.apex)
    keep = set(skel.objects)
    R = GFunctor(skel, t.R.target, {z: t.R.obj(z) for z in keep},
                 {m.id: t.R.mor(m.id) for m in skel.morphisms}, name="R")
    S = GFunctor(skel, t.S.target, {z: t.S.obj(z) for z in keep},
                 {m.id: t.S.mor(m.id) for m in skel.morphisms}, name="S")
    inner = Span(t.inner.source, t.inner.target, skel, R, S, name=t.inner.name)
    return TwoMorphism(t.from_span, t.to_span, inner, {z: t.mu[z] for z in skel.objects},
                       {z: t.nu[z] for z in skel.objects}, name=t.name)


def _coherent(t1: TwoMorphism, t2: TwoMorphism, w: SpanWitness) -> bool:
    """mu, nu of t1 transported along w agree with those of t2"""
    A, B = t1.from_span.source, t1.from_span.target
    lX, rX = t1.from_span.left, t1.from_span.right
    lY, rY = t1.to_span.left, t1.to_span.right
    for z in t1.inner.apex.objects:
        hz = w.h.obj(z)
        theta_R, theta_S = w.theta_left[z], w.theta_right[z]
        if B.then(lX.mor(theta_S), t2.mu[hz]) != B.then(t1.mu[z], lY.mor(theta_R)):
            return False
        if A.then(rX.mor(theta_S), t2.nu[hz]) != A.then(t1.nu[z], rY.mor(theta_R)):
            return False
    return True


def two_morphism_eq(t1: TwoMorphism, t2: TwoMorphism, mode: str = EQUIVALENCE, coherent: bool = False,
                    from_witness: Optional[SpanWitness] = None, to_witness: Optional[SpanWitness] = None,
                    budget: Optional[SearchBudget] = None) -> Optional[TwoMorphismWitness]:
    """
    Compare two 2-morphisms by their inner spans.

    When the boundary spans are not structurally equal, t1 is transported
    along boundary witnesses (given, or found in the requested mode) first.
    """
    if mode not in MODES:
        raise ValueError(f"unknown comparison mode {mode!r}")
    fw, tw = from_witness, to_witness
    if fw is None and not spans_match(t1.from_span, t2.from_span):
        fw = compare_spans(t1.from_span, t2.from_span, mode, budget)
        if fw is None:
            return None
    if tw is None and not spans_match(t1.to_span, t2.to_span):
        tw = compare_spans(t1.to_span, t2.to_span, mode, budget)
        if tw is None:
            return None
    moved = transport_2(t1, fw, tw) if (fw is not None or tw is not None) else t1
    inner = compare_spans(moved.inner, t2.inner, mode, budget)
    if inner is None:
        return None
    if coherent and not _coherent(moved, t2, inner):
        return None
    return TwoMorphismWitness(mode=mode, inner=inner, from_witness=fw, to_witness=tw, coherent=coherent)
