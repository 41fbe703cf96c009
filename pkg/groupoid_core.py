"""
Finite groupoids for the groupoidification engine
Groupoids, functors, isomorphism classes, automorphism groups, cardinality and iso/equivalence search
"""

import logging
import math
import random
from collections import defaultdict, deque
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Hashable, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import networkx as nx
from sympy import Rational

from utils import (
    ConfigManager, SearchBudget, SizeGuardError, StructuralError, ValidationReport, tick
)

logger = logging.getLogger(__name__)

ObjectId = Hashable
MorphismId = Hashable


@dataclass(frozen=True)
class Morphism:
    """A morphism record: identifier, source object, target object"""
    id: MorphismId
    src: ObjectId
    dst: ObjectId


def guard_size(count: int, what: str, limit: Optional[int] = None):
    """Refuse groupoids above the configured morphism limit"""
    limit = ConfigManager.get('max_morphisms') if limit is None else limit
    if count > limit:
        logger.warning(f"Refusing {what}: {count} morphisms exceeds limit {limit}")
        raise SizeGuardError(f"{what} would have {count} morphisms (limit {limit})")


class ComposeRule(Mapping):
    """Composition table computed on demand; entry (f, g) is g∘f"""

    def __init__(self, groupoid: "FiniteGroupoid", rule: Callable[[MorphismId, MorphismId], MorphismId]):
        self._g = groupoid
        self._rule = rule

    def __getitem__(self, key):
        f, g = key
        mf, mg = self._g._by_id.get(f), self._g._by_id.get(g)
        if mf is None or mg is None or mf.dst != mg.src:
            raise KeyError(key)
        return self._rule(f, g)

    def __iter__(self) -> Iterator[Tuple[MorphismId, MorphismId]]:
        for m in self._g.morphisms:
            for g in self._g.out(m.dst):
                yield (m.id, g)

    def __len__(self) -> int:
        return sum(len(self._g.out(m.dst)) for m in self._g.morphisms)


class FiniteGroupoid:
    """
    A finite groupoid given by explicit tables.

    ``compose`` maps a composable pair (f, g) to g∘f, i.e. f first. It is
    either a mapping or a rule ``(f, g) -> g∘f`` evaluated on demand, which
    is how derived groupoids (pullbacks, unions, subgroupoids) avoid
    materialising quadratic tables.
    """

    def __init__(self, objects: Sequence[ObjectId], morphisms: Sequence[Morphism],
                 identity: Dict[ObjectId, MorphismId],
                 compose: Union[Mapping, Callable[[MorphismId, MorphismId], MorphismId]],
                 name: str = "", inverse: Optional[Callable[[MorphismId], MorphismId]] = None,
                 guard: bool = True):
        if guard:
            guard_size(len(morphisms), f"groupoid {name or '<anonymous>'}")
        self.name = name
        self.objects: Tuple[ObjectId, ...] = tuple(objects)
        self.morphisms: Tuple[Morphism, ...] = tuple(morphisms)
        self.identity: Dict[ObjectId, MorphismId] = dict(identity)
        self._by_id: Dict[MorphismId, Morphism] = {m.id: m for m in self.morphisms}
        self._object_index = {x: i for i, x in enumerate(self.objects)}
        self._hom: Dict[Tuple[ObjectId, ObjectId], List[MorphismId]] = defaultdict(list)
        self._out: Dict[ObjectId, List[MorphismId]] = defaultdict(list)
        for m in self.morphisms:
            self._hom[(m.src, m.dst)].append(m.id)
            self._out[m.src].append(m.id)
        self.compose: Mapping = ComposeRule(self, compose) if callable(compose) else compose
        self._inverse_rule = inverse
        self._inverse_cache: Dict[MorphismId, MorphismId] = {}
        self._classes = None

    def __repr__(self):
        return f"FiniteGroupoid({self.name or '?'}: {len(self.objects)} objects, {len(self.morphisms)} morphisms)"

    # structure access
    def has_object(self, x: ObjectId) -> bool:
        return x in self._object_index

    def has_morphism(self, f: MorphismId) -> bool:
        return f in self._by_id

    def object_index(self, x: ObjectId) -> int:
        return self._object_index[x]

    def morphism(self, f: MorphismId) -> Morphism:
        try:
            return self._by_id[f]
        except KeyError:
            raise StructuralError(f"unknown morphism {f!r} in {self.name or 'groupoid'}") from None

    def src(self, f: MorphismId) -> ObjectId:
        return self.morphism(f).src

    def dst(self, f: MorphismId) -> ObjectId:
        return self.morphism(f).dst

    def hom(self, x: ObjectId, y: ObjectId) -> List[MorphismId]:
        return self._hom.get((x, y), [])

    def out(self, x: ObjectId) -> List[MorphismId]:
        return self._out.get(x, [])

    def loops(self, x: ObjectId) -> List[MorphismId]:
        return self.hom(x, x)

    def id_of(self, x: ObjectId) -> MorphismId:
        try:
            return self.identity[x]
        except KeyError:
            raise StructuralError(f"unknown object {x!r} in {self.name or 'groupoid'}") from None

    def then(self, f: MorphismId, g: MorphismId) -> MorphismId:
        """g∘f: first f, then g"""
        try:
            return self.compose[(f, g)]
        except KeyError:
            raise StructuralError(f"{f!r} and {g!r} are not composable in {self.name or 'groupoid'}") from None

    def chain(self, *fs: MorphismId) -> MorphismId:
        """Compose a path f1, f2, ... (f1 first)"""
        result = fs[0]
        for f in fs[1:]:
            result = self.then(result, f)
        return result

    def inverse(self, f: MorphismId) -> MorphismId:
        if f in self._inverse_cache:
            return self._inverse_cache[f]
        if self._inverse_rule is not None:
            inv = self._inverse_rule(f)
        else:
            m = self.morphism(f)
            ident = self.identity[m.src]
            inv = next((g for g in self.hom(m.dst, m.src) if self.compose.get((f, g)) == ident), None)
            if inv is None:
                raise StructuralError(f"morphism {f!r} has no inverse")
        self._inverse_cache[f] = inv
        return inv

    def is_empty(self) -> bool:
        return not self.objects

    def full_subgroupoid(self, objects: Iterable[ObjectId], name: str = "") -> "FiniteGroupoid":
        keep = set(objects)
        objs = [x for x in self.objects if x in keep]
        morphisms = [m for m in self.morphisms if m.src in keep and m.dst in keep]
        return FiniteGroupoid(objs, morphisms, {x: self.identity[x] for x in objs}, self.then,
                              name=name or f"{self.name}|sub", inverse=self.inverse)

    def same_as(self, other: "FiniteGroupoid") -> bool:
        """Structural equality of object, morphism and identity data"""
        if self is other:
            return True
        return (self.objects == other.objects and self.morphisms == other.morphisms
                and self.identity == other.identity)


class GFunctor:
    """A functor between finite groupoids given by object and morphism tables"""

    def __init__(self, source: FiniteGroupoid, target: FiniteGroupoid,
                 on_objects: Dict[ObjectId, ObjectId], on_morphisms: Dict[MorphismId, MorphismId],
                 name: str = ""):
        self.source = source
        self.target = target
        self.on_objects = dict(on_objects)
        self.on_morphisms = dict(on_morphisms)
        self.name = name

    def __repr__(self):
        return f"GFunctor({self.name or '?'}: {self.source.name} -> {self.target.name})"

    def obj(self, x: ObjectId) -> ObjectId:
        try:
            return self.on_objects[x]
        except KeyError:
            raise StructuralError(f"functor {self.name or '?'} undefined on object {x!r}") from None

    def mor(self, f: MorphismId) -> MorphismId:
        try:
            return self.on_morphisms[f]
        except KeyError:
            raise StructuralError(f"functor {self.name or '?'} undefined on morphism {f!r}") from None

    def same_as(self, other: "GFunctor") -> bool:
        return (self.source.same_as(other.source) and self.target.same_as(other.target)
                and self.on_objects == other.on_objects and self.on_morphisms == other.on_morphisms)


@dataclass
class IsoClassPartition:
    """Connected components of a groupoid with canonical representatives"""
    classes: List[List[ObjectId]]
    representative: List[ObjectId]
    class_of: Dict[ObjectId, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.classes)


@dataclass
class AutGroup:
    """Automorphism group of one object"""
    object: ObjectId
    elements: List[MorphismId]

    @property
    def order(self) -> int:
        return len(self.elements)


@dataclass
class IsoWitness:
    """A structure-preserving bijection between two groupoids"""
    functor: GFunctor


@dataclass
class EquivWitness:
    """Bijection of iso classes plus a group isomorphism per class"""
    class_map: Dict[ObjectId, ObjectId]
    group_isos: Dict[ObjectId, Dict[MorphismId, MorphismId]]
    functor: GFunctor


# Constructors
def terminal_groupoid() -> FiniteGroupoid:
    return FiniteGroupoid(["*"], [Morphism("id", "*", "*")], {"*": "id"}, {("id", "id"): "id"}, name="1")


def empty_groupoid(name: str = "0") -> FiniteGroupoid:
    return FiniteGroupoid([], [], {}, {}, name=name)


def discrete_groupoid(objects: Sequence[ObjectId], name: str = "") -> FiniteGroupoid:
    morphisms = [Morphism(("id", x), x, x) for x in objects]
    return FiniteGroupoid(objects, morphisms, {x: ("id", x) for x in objects},
                          {(("id", x), ("id", x)): ("id", x) for x in objects}, name=name or "discrete")


def codiscrete_groupoid(objects: Sequence[ObjectId], name: str = "") -> FiniteGroupoid:
    """Exactly one morphism between any two objects"""
    morphisms = [Morphism((x, y), x, y) for x in objects for y in objects]
    compose = {((x, y), (y, z)): (x, z) for x in objects for y in objects for z in objects}
    return FiniteGroupoid(objects, morphisms, {x: (x, x) for x in objects}, compose,
                          name=name or "codiscrete")


def group_groupoid(elements: Sequence[MorphismId], product: Dict[Tuple[MorphismId, MorphismId], MorphismId],
                   identity: MorphismId, obj: ObjectId = "*", name: str = "") -> FiniteGroupoid:
    """One-object groupoid of a group; product[(a, b)] is "a then b" """
    morphisms = [Morphism(e, obj, obj) for e in elements]
    return FiniteGroupoid([obj], morphisms, {obj: identity}, dict(product), name=name or "group")


def disjoint_union(g1: FiniteGroupoid, g2: FiniteGroupoid, name: str = "") -> FiniteGroupoid:
    """Tagged union: objects and morphisms of g_i become (i, x)"""
    objects = [(0, x) for x in g1.objects] + [(1, x) for x in g2.objects]
    morphisms = ([Morphism((0, m.id), (0, m.src), (0, m.dst)) for m in g1.morphisms]
                 + [Morphism((1, m.id), (1, m.src), (1, m.dst)) for m in g2.morphisms])
    identity = {(0, x): (0, g1.identity[x]) for x in g1.objects}
    identity.update({(1, x): (1, g2.identity[x]) for x in g2.objects})
    parts = (g1, g2)

    def rule(f, g):
        return (f[0], parts[f[0]].then(f[1], g[1]))

    def inverse(f):
        return (f[0], parts[f[0]].inverse(f[1]))

    return FiniteGroupoid(objects, morphisms, identity, rule, inverse=inverse,
                          name=name or f"({g1.name}+{g2.name})")


def identity_functor(g: FiniteGroupoid) -> GFunctor:
    return GFunctor(g, g, {x: x for x in g.objects}, {m.id: m.id for m in g.morphisms}, name=f"id_{g.name}")


def inclusion_functor(sub: FiniteGroupoid, g: FiniteGroupoid) -> GFunctor:
    """Inclusion of a subgroupoid sharing identifiers with g"""
    return GFunctor(sub, g, {x: x for x in sub.objects}, {m.id: m.id for m in sub.morphisms},
                    name=f"incl_{sub.name}")


def compose_functors(first: GFunctor, second: GFunctor, name: str = "") -> GFunctor:
    """second∘first"""
    return GFunctor(first.source, second.target,
                    {x: second.obj(y) for x, y in first.on_objects.items()},
                    {f: second.mor(g) for f, g in first.on_morphisms.items()},
                    name=name or f"{second.name}.{first.name}")


# Random groupoids for property tests
def random_groupoid(rng: random.Random, max_objects: int = 4, max_order: int = 3, name: str = "") -> FiniteGroupoid:
    """
    Disjoint union of connected groupoids, each k objects over a cyclic group Z_n.
    Objects are (c, i); the morphism (c, i, a, j) goes from (c, i) to (c, j)
    carrying a in Z_n, and composition adds the labels.
    """
    remaining = rng.randint(1, max_objects)
    sizes = []
    while remaining:
        sizes.append(rng.randint(1, remaining))
        remaining -= sizes[-1]
    orders = [rng.randint(1, max_order) for _ in sizes]
    objects = [(comp, i) for comp, k in enumerate(sizes) for i in range(k)]
    morphisms = [Morphism((comp, i, a, j), (comp, i), (comp, j))
                 for comp, k in enumerate(sizes) for i in range(k) for j in range(k) for a in range(orders[comp])]

    def rule(f, g):
        return (f[0], f[1], (f[2] + g[2]) % orders[f[0]], g[3])

    def inverse(f):
        return (f[0], f[3], -f[2] % orders[f[0]], f[1])

    return FiniteGroupoid(objects, morphisms, {(comp, i): (comp, i, 0, i) for comp, i in objects}, rule,
                          inverse=inverse, name=name or "random")


def random_functor(rng: random.Random, source: FiniteGroupoid, target: FiniteGroupoid, name: str = "") -> GFunctor:
    """
    Random functor between groupoids made by random_groupoid. Each source
    component goes to one target component through a homomorphism a -> t*a,
    conjugated by a random label per object.
    """
    def order(g: FiniteGroupoid, comp: int) -> int:
        return len(g.loops((comp, 0)))

    components = sorted({x[0] for x in target.objects})
    width = {d: sum(1 for x in target.objects if x[0] == d) for d in components}
    image, twist = {}, {}
    for comp in sorted({x[0] for x in source.objects}):
        d = rng.choice(components)
        n, m = order(source, comp), order(target, d)
        common = math.gcd(n, m)
        image[comp], twist[comp] = d, (m // common) * rng.randrange(common)
    on_objects, shift = {}, {}
    for x in source.objects:
        on_objects[x] = (image[x[0]], rng.randrange(width[image[x[0]]]))
        shift[x] = rng.randrange(order(target, image[x[0]]))
    on_morphisms = {}
    for f in source.morphisms:
        comp, i, a, j = f.id
        x, y = (comp, i), (comp, j)
        label = (-shift[x] + twist[comp] * a + shift[y]) % order(target, image[comp])
        on_morphisms[f.id] = (image[comp], on_objects[x][1], label, on_objects[y][1])
    return GFunctor(source, target, on_objects, on_morphisms, name=name or "random")


# Validation
def validate_groupoid(g: FiniteGroupoid) -> ValidationReport:
    """Check identifiers, totality, identity laws, associativity and inverses"""
    report = ValidationReport()
    objects = set(g.objects)
    if len(objects) != len(g.objects):
        report.add("structural: duplicate object identifiers")
    if len(g._by_id) != len(g.morphisms):
        report.add("structural: duplicate morphism identifiers")
    for m in g.morphisms:
        if m.src not in objects or m.dst not in objects:
            report.add(f"structural: morphism {m.id!r} has unknown endpoint")
    for x in g.objects:
        ident = g.identity.get(x)
        if ident is None or ident not in g._by_id:
            report.add(f"structural: no identity for object {x!r}")
        elif g.src(ident) != x or g.dst(ident) != x:
            report.add(f"structural: identity of {x!r} is not a loop at {x!r}")
    if isinstance(g.compose, dict):
        for (f, h), r in g.compose.items():
            if f not in g._by_id or h not in g._by_id or r not in g._by_id:
                report.add(f"structural: composition entry ({f!r}, {h!r}) -> {r!r} does not resolve")
    if report.errors:
        report.structural = True
        return report

    missing = 0
    for m in g.morphisms:
        for h in g.out(m.dst):
            if (m.id, h) not in g.compose:
                missing += 1
                continue
            r = g.compose[(m.id, h)]
            if g.src(r) != m.src or g.dst(r) != g.dst(h):
                report.add(f"composite of {m.id!r} and {h!r} has wrong endpoints")
    if missing:
        report.add(f"composition not total: {missing} composable pairs undefined")
        return report
    if isinstance(g.compose, dict):
        for f, h in g.compose:
            if g.dst(f) != g.src(h):
                report.add(f"composition defined on non-composable pair ({f!r}, {h!r})")

    for m in g.morphisms:
        if g.then(g.identity[m.src], m.id) != m.id or g.then(m.id, g.identity[m.dst]) != m.id:
            report.add(f"identity law fails for {m.id!r}")

    for m in g.morphisms:
        for h in g.out(m.dst):
            mh = g.then(m.id, h)
            for k in g.out(g.dst(h)):
                if g.then(mh, k) != g.then(m.id, g.then(h, k)):
                    report.add(f"associativity fails on ({m.id!r}, {h!r}, {k!r})")

    for m in g.morphisms:
        ident = g.identity[m.src]
        if not any(g.then(m.id, h) == ident and g.then(h, m.id) == g.identity[m.dst]
                   for h in g.hom(m.dst, m.src)):
            report.add(f"missing inverse for {m.id!r}")
    return report


def validate_functor(F: GFunctor) -> ValidationReport:
    """Check that F preserves endpoints, identities and composition"""
    report = ValidationReport()
    report.extend(validate_groupoid(F.source), prefix="source: ")
    report.extend(validate_groupoid(F.target), prefix="target: ")
    if report.structural:
        return report
    S, T = F.source, F.target
    for x in S.objects:
        if x not in F.on_objects or not T.has_object(F.on_objects[x]):
            report.add(f"structural: object {x!r} has no valid image")
    for m in S.morphisms:
        if m.id not in F.on_morphisms or not T.has_morphism(F.on_morphisms[m.id]):
            report.add(f"structural: morphism {m.id!r} has no valid image")
    if report.errors:
        report.structural = True
        return report

    for m in S.morphisms:
        image = F.on_morphisms[m.id]
        if T.src(image) != F.on_objects[m.src] or T.dst(image) != F.on_objects[m.dst]:
            report.add(f"endpoints not preserved by {m.id!r}")
    for x in S.objects:
        if F.on_morphisms[S.identity[x]] != T.identity[F.on_objects[x]]:
            report.add(f"identity not preserved at {x!r}")
    for m in S.morphisms:
        for h in S.out(m.dst):
            if F.on_morphisms[S.then(m.id, h)] != T.then(F.on_morphisms[m.id], F.on_morphisms[h]):
                report.add(f"composition not preserved on ({m.id!r}, {h!r})")
    return report


# Classes and automorphisms
def iso_classes(g: FiniteGroupoid) -> IsoClassPartition:
    """Connected components, ordered by their lowest object"""
    if g._classes is not None:
        return g._classes
    graph = nx.Graph()
    graph.add_nodes_from(range(len(g.objects)))
    graph.add_edges_from((g.object_index(m.src), g.object_index(m.dst)) for m in g.morphisms)
    components = sorted(sorted(c) for c in nx.connected_components(graph))
    classes = [[g.objects[i] for i in comp] for comp in components]
    partition = IsoClassPartition(classes=classes, representative=[c[0] for c in classes])
    partition.class_of = {x: i for i, c in enumerate(classes) for x in c}
    g._classes = partition
    return partition


def automorphism_group(g: FiniteGroupoid, x: ObjectId) -> AutGroup:
    if not g.has_object(x):
        raise StructuralError(f"unknown object {x!r}")
    return AutGroup(object=x, elements=list(g.loops(x)))


def cardinality(g: FiniteGroupoid) -> Rational:
    """Sum over iso classes of 1/|Aut(representative)|"""
    total = Rational(0)
    for rep in iso_classes(g).representative:
        total += Rational(1, len(g.loops(rep)))
    return total


def connecting_morphisms(g: FiniteGroupoid) -> Dict[ObjectId, MorphismId]:
    """One chosen iso rep(x) -> x per object"""
    partition = iso_classes(g)
    chosen = {}
    for rep, members in zip(partition.representative, partition.classes):
        for x in members:
            chosen[x] = g.identity[x] if x == rep else g.hom(rep, x)[0]
    return chosen


# Group isomorphism search
def element_order(g: FiniteGroupoid, k: MorphismId) -> int:
    ident = g.identity[g.src(k)]
    n, p = 1, k
    while p != ident:
        p = g.then(p, k)
        n += 1
    return n


def _closure(g: FiniteGroupoid, x: ObjectId, gens: Sequence[MorphismId]) -> set:
    seen = {g.identity[x]}
    queue = deque(seen)
    while queue:
        a = queue.popleft()
        for s in gens:
            b = g.then(a, s)
            if b not in seen:
                seen.add(b)
                queue.append(b)
    return seen


def generating_set(g: FiniteGroupoid, x: ObjectId) -> List[MorphismId]:
    """Greedy generators of Aut(x) in morphism order"""
    gens: List[MorphismId] = []
    span = {g.identity[x]}
    for k in g.loops(x):
        if k not in span:
            gens.append(k)
            span = _closure(g, x, gens)
    return gens


def _extend_hom(g1, x1, g2, x2, gens, images) -> Optional[Dict[MorphismId, MorphismId]]:
    phi = {g1.identity[x1]: g2.identity[x2]}
    queue = deque(phi)
    while queue:
        a = queue.popleft()
        for s, t in zip(gens, images):
            b = g1.then(a, s)
            expected = g2.then(phi[a], t)
            if b in phi:
                if phi[b] != expected:
                    return None
            else:
                phi[b] = expected
                queue.append(b)
    return phi


def group_isomorphism(g1: FiniteGroupoid, x1: ObjectId, g2: FiniteGroupoid, x2: ObjectId,
                      compatible: Optional[Callable[[MorphismId, MorphismId], bool]] = None,
                      budget: Optional[SearchBudget] = None) -> Optional[Dict[MorphismId, MorphismId]]:
    """
    Isomorphism Aut(x1) -> Aut(x2), or None.

    Backtracks over images of a greedy generating set, pruning by element
    order, by ``compatible(generator, image)`` and by consistency of the
    partial homomorphism. Deterministic in the loop order of both groupoids.
    """
    elems1, elems2 = g1.loops(x1), g2.loops(x2)
    if len(elems1) != len(elems2):
        return None
    gens = generating_set(g1, x1)
    if not gens:
        return {g1.identity[x1]: g2.identity[x2]}
    orders2: Dict[MorphismId, int] = {}
    candidates = []
    for s in gens:
        order = element_order(g1, s)
        options = []
        for t in elems2:
            if t not in orders2:
                orders2[t] = element_order(g2, t)
            if orders2[t] == order and (compatible is None or compatible(s, t)):
                options.append(t)
        if not options:
            return None
        candidates.append(options)

    def search(i: int, images: List[MorphismId]):
        tick(budget)
        if i and _extend_hom(g1, x1, g2, x2, gens[:i], images) is None:
            return None
        if i == len(gens):
            phi = _extend_hom(g1, x1, g2, x2, gens, images)
            if phi is not None and len(set(phi.values())) == len(elems1):
                return phi
            return None
        for t in candidates[i]:
            if t in images:
                continue
            found = search(i + 1, images + [t])
            if found is not None:
                return found
        return None

    return search(0, [])


# Isomorphism and equivalence search
def _invariants(g: FiniteGroupoid):
    partition = iso_classes(g)
    return (len(g.objects), len(g.morphisms), len(partition),
            sorted((len(c), len(g.loops(r))) for c, r in zip(partition.classes, partition.representative)))


def _match(left: Sequence[Any], right: Sequence[Any], edges: Iterable[Tuple[Any, Any]]) -> Optional[Dict[Any, Any]]:
    """Perfect matching left -> right by augmenting paths, in input order"""
    if len(left) != len(right):
        return None
    adjacency: Dict[Any, List[Any]] = defaultdict(list)
    for a, b in edges:
        adjacency[a].append(b)
    owner: Dict[Any, Any] = {}

    def augment(a, visited):
        for b in adjacency[a]:
            if b in visited:
                continue
            visited.add(b)
            if b not in owner or augment(owner[b], visited):
                owner[b] = a
                return True
        return False

    for a in left:
        if not augment(a, set()):
            return None
    return {a: b for b, a in owner.items()}


def find_isomorphism(g1: FiniteGroupoid, g2: FiniteGroupoid,
                     object_ok: Optional[Callable[[ObjectId, ObjectId], bool]] = None,
                     morphism_ok: Optional[Callable[[MorphismId, MorphismId], bool]] = None,
                     budget: Optional[SearchBudget] = None, name: str = "h") -> Optional[GFunctor]:
    """
    Groupoid isomorphism g1 -> g2 respecting optional constraints, or None.

    Constraints must be functorial (e.g. "same image under a leg"): they are
    only tested on a representative, its automorphism generators and one
    connecting arrow per object, and propagate to every morphism.
    """
    if _invariants(g1) != _invariants(g2):
        return None
    object_ok = object_ok or (lambda a, b: True)
    morphism_ok = morphism_ok or (lambda a, b: True)
    p1, p2 = iso_classes(g1), iso_classes(g2)
    conn1 = connecting_morphisms(g1)

    def component_iso(c1: int, c2: int):
        rep1, members1, members2 = p1.representative[c1], p1.classes[c1], p2.classes[c2]
        if len(members1) != len(members2) or len(g1.loops(rep1)) != len(g2.loops(p2.representative[c2])):
            return None
        for rep2 in members2:
            tick(budget)
            if not object_ok(rep1, rep2):
                continue
            arrows: Dict[Tuple[ObjectId, ObjectId], MorphismId] = {}
            for x in members1:
                if x == rep1:
                    continue
                for y in members2:
                    if y == rep2 or not object_ok(x, y):
                        continue
                    a = next((a for a in g2.hom(rep2, y) if morphism_ok(conn1[x], a)), None)
                    if a is not None:
                        arrows[(x, y)] = a
            rest1 = [x for x in members1 if x != rep1]
            rest2 = [y for y in members2 if y != rep2]
            matching = _match(rest1, rest2, arrows.keys())
            if matching is None:
                continue
            psi = group_isomorphism(g1, rep1, g2, rep2, compatible=morphism_ok, budget=budget)
            if psi is None:
                continue
            lifted = {rep1: g2.identity[rep2]}
            lifted.update({x: arrows[(x, y)] for x, y in matching.items()})
            objects = {rep1: rep2, **matching}
            return objects, lifted, psi
        return None

    found = {}
    edges = []
    for c1 in range(len(p1)):
        for c2 in range(len(p2)):
            local = component_iso(c1, c2)
            if local is not None:
                found[(c1, c2)] = local
                edges.append((c1, c2))
    assignment = _match(list(range(len(p1))), list(range(len(p2))), edges)
    if assignment is None:
        return None

    on_objects: Dict[ObjectId, ObjectId] = {}
    lifted: Dict[ObjectId, MorphismId] = {}
    psis: Dict[int, Dict] = {}
    for c1, c2 in assignment.items():
        objects, arrows, psi = found[(c1, c2)]
        on_objects.update(objects)
        lifted.update(arrows)
        psis[c1] = psi
    on_morphisms = {}
    for m in g1.morphisms:
        c = p1.class_of[m.src]
        k = g1.chain(conn1[m.src], m.id, g1.inverse(conn1[m.dst]))
        on_morphisms[m.id] = g2.chain(g2.inverse(lifted[m.src]), psis[c][k], lifted[m.dst])
    return GFunctor(g1, g2, on_objects, on_morphisms, name=name)


def groupoid_iso(g1: FiniteGroupoid, g2: FiniteGroupoid, budget: Optional[SearchBudget] = None) -> Optional[IsoWitness]:
    functor = find_isomorphism(g1, g2, budget=budget)
    return None if functor is None else IsoWitness(functor=functor)


def skeleton(g: FiniteGroupoid) -> Tuple[FiniteGroupoid, GFunctor]:
    """Full subgroupoid on representatives plus the retraction g -> skeleton"""
    partition = iso_classes(g)
    skel = g.full_subgroupoid(partition.representative, name=f"sk({g.name})")
    conn = connecting_morphisms(g)
    on_objects = {x: partition.representative[partition.class_of[x]] for x in g.objects}
    on_morphisms = {m.id: g.chain(conn[m.src], m.id, g.inverse(conn[m.dst])) for m in g.morphisms}
    return skel, GFunctor(g, skel, on_objects, on_morphisms, name=f"retract_{g.name}")


def groupoid_equivalence(g1: FiniteGroupoid, g2: FiniteGroupoid,
                         budget: Optional[SearchBudget] = None) -> Optional[EquivWitness]:
    """Equivalence via skeleton isomorphism: matched classes with isomorphic Aut groups"""
    p1, p2 = iso_classes(g1), iso_classes(g2)
    if sorted(len(g1.loops(r)) for r in p1.representative) != sorted(len(g2.loops(r)) for r in p2.representative):
        return None
    isos = {}
    edges = []
    for r1 in p1.representative:
        for r2 in p2.representative:
            if len(g1.loops(r1)) != len(g2.loops(r2)):
                continue
            psi = group_isomorphism(g1, r1, g2, r2, budget=budget)
            if psi is not None:
                isos[(r1, r2)] = psi
                edges.append((r1, r2))
    class_map = _match(p1.representative, p2.representative, edges)
    if class_map is None:
        return None
    group_isos = {r1: isos[(r1, r2)] for r1, r2 in class_map.items()}
    _, retraction = skeleton(g1)
    on_objects = {x: class_map[retraction.obj(x)] for x in g1.objects}
    on_morphisms = {m.id: group_isos[retraction.obj(m.src)][retraction.mor(m.id)] for m in g1.morphisms}
    functor = GFunctor(g1, g2, on_objects, on_morphisms, name="equiv")
    return EquivWitness(class_map=class_map, group_isos=group_isos, functor=functor)
