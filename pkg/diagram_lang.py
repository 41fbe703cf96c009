"""
String diagram language
Parser, typechecker and normalizer for oriented planar diagrams over the signs + and -,
with decategorification to matrices and evaluation into the span model
"""

import logging
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

from sympy import Poly, Symbol
from tqdm import tqdm

from degroupoidify import RationalMatrix, span_matrix
from fermion_model import FermionModel, build_model
from interchange import NormalFormRecord, NormalFormTerm
from span_calculus import (
    EQUIVALENCE, Span, SpanWitness, TwoMorphism, associator, compose_spans, compose_witnesses,
    direct_sum_2, horiz_compose_2, identity_2, identity_witness, left_unitor, reduce_2, right_unitor,
    transport_2, two_morphism_eq, vert_compose_2, whisker_witness, zero_2
)
from utils import (
    BoundaryMismatchError, ConfigManager, DiagramSyntaxError, DiagramTypeError, EvaluationError,
    RewriteError
)

logger = logging.getLogger(__name__)

c = Symbol('c')

FREE = "free"
SPAN = "span"
SEMANTICS = (FREE, SPAN)

# generator -> (domain, codomain); ";" stacks bottom to top
GENERATORS = {
    "eta": ("", "+-"),
    "eps": ("-+", ""),
    "etadag": ("+-", ""),
    "epsdag": ("", "-+"),
}


# AST
@dataclass(frozen=True)
class Generator:
    name: str
    pos: int = 0


@dataclass(frozen=True)
class Identity:
    signs: str
    pos: int = 0


@dataclass(frozen=True)
class Crossing:
    first: str
    second: str
    pos: int = 0


@dataclass(frozen=True)
class Seq:
    """lower first, then upper"""
    lower: "DiagramExpr"
    upper: "DiagramExpr"
    pos: int = 0


@dataclass(frozen=True)
class Tensor:
    left: "DiagramExpr"
    right: "DiagramExpr"
    pos: int = 0


@dataclass(frozen=True)
class Sum:
    first: "DiagramExpr"
    second: "DiagramExpr"
    pos: int = 0


@dataclass(frozen=True)
class Scale:
    factor: int
    body: "DiagramExpr"
    pos: int = 0


DiagramExpr = Union[Generator, Identity, Crossing, Seq, Tensor, Sum, Scale]


def count_nodes(e: DiagramExpr) -> int:
    if isinstance(e, (Seq, Tensor)):
        a, b = (e.lower, e.upper) if isinstance(e, Seq) else (e.left, e.right)
        return 1 + count_nodes(a) + count_nodes(b)
    if isinstance(e, Sum):
        return 1 + count_nodes(e.first) + count_nodes(e.second)
    if isinstance(e, Scale):
        return 1 + count_nodes(e.body)
    return 1


def count_generators(e: DiagramExpr) -> int:
    if isinstance(e, (Generator, Crossing)):
        return 1
    if isinstance(e, Identity):
        return 0
    if isinstance(e, Scale):
        return count_generators(e.body)
    children = {Seq: ("lower", "upper"), Tensor: ("left", "right"), Sum: ("first", "second")}[type(e)]
    return sum(count_generators(getattr(e, name)) for name in children)


def render_expr(e: DiagramExpr) -> str:
    """Concrete syntax, fully parenthesised"""
    if isinstance(e, Generator):
        return e.name
    if isinstance(e, Identity):
        return f"id({e.signs or '1'})"
    if isinstance(e, Crossing):
        return f"x({e.first},{e.second})"
    if isinstance(e, Seq):
        return f"({render_expr(e.lower)} ; {render_expr(e.upper)})"
    if isinstance(e, Tensor):
        return f"({render_expr(e.left)} * {render_expr(e.right)})"
    if isinstance(e, Sum):
        return f"({render_expr(e.first)} + {render_expr(e.second)})"
    return f"{e.factor} ({render_expr(e.body)})"


# Parser
class _Parser:
    """
    expr   := scaled ("+" scaled)*
    scaled := INT scaled | term
    term   := tensor (";" tensor)*
    tensor := atom ("*" atom)*
    """

    def __init__(self, text: str):
        self.text = text.replace("−", "-")
        self.i = 0

    def error(self, message: str):
        raise DiagramSyntaxError(message, self.i)

    def skip(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.i] if self.i < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.i += 1

    def parse(self) -> DiagramExpr:
        e = self.expr()
        if self.peek():
            self.error(f"unexpected {self.peek()!r}")
        return e

    def expr(self) -> DiagramExpr:
        e = self.scaled()
        while self.peek() == "+":
            pos = self.i
            self.i += 1
            e = Sum(e, self.scaled(), pos)
        return e

    def scaled(self) -> DiagramExpr:
        if self.peek().isdigit():
            pos = self.i
            start = self.i
            while self.i < len(self.text) and self.text[self.i].isdigit():
                self.i += 1
            return Scale(int(self.text[start:self.i]), self.scaled(), pos)
        return self.term()

    def term(self) -> DiagramExpr:
        e = self.tensor()
        while self.peek() == ";":
            pos = self.i
            self.i += 1
            e = Seq(e, self.tensor(), pos)
        return e

    def tensor(self) -> DiagramExpr:
        e = self.atom()
        while self.peek() == "*":
            pos = self.i
            self.i += 1
            e = Tensor(e, self.atom(), pos)
        return e

    def atom(self) -> DiagramExpr:
        ch = self.peek()
        pos = self.i
        if ch == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if not ch.isalpha():
            self.error("expected a generator, id(...), x(...) or '('" if ch else "unexpected end of input")
        start = self.i
        while self.i < len(self.text) and self.text[self.i].isalpha():
            self.i += 1
        word = self.text[start:self.i]
        if word in GENERATORS:
            return Generator(word, pos)
        if word == "id":
            self.expect("(")
            signs = self.signs()
            self.expect(")")
            return Identity(signs, pos)
        if word == "x":
            self.expect("(")
            first = self.sign()
            self.expect(",")
            second = self.sign()
            self.expect(")")
            return Crossing(first, second, pos)
        self.i = start
        self.error(f"unknown generator {word!r}")

    def sign(self) -> str:
        ch = self.peek()
        if ch not in ("+", "-"):
            self.error("expected a sign")
        self.i += 1
        return ch

    def signs(self) -> str:
        if self.peek() == "1":
            self.i += 1
            return ""
        out = []
        while self.peek() in ("+", "-") and self.peek():
            out.append(self.peek())
            self.i += 1
        return "".join(out)


def parse(text: str) -> DiagramExpr:
    return _Parser(text).parse()


def _expr(e: Union[str, DiagramExpr]) -> DiagramExpr:
    return parse(e) if isinstance(e, str) else e


# Typing
@dataclass(frozen=True)
class Boundary:
    domain: str
    codomain: str
    zero_object: bool = False


def is_zero_object(signs: str) -> bool:
    """Adjacent equal signs"""
    return any(a == b for a, b in zip(signs, signs[1:]))


def typecheck(e: Union[str, DiagramExpr]) -> Boundary:
    e = _expr(e)
    if isinstance(e, Generator):
        dom, cod = GENERATORS[e.name]
        return Boundary(dom, cod)
    if isinstance(e, Identity):
        return Boundary(e.signs, e.signs, is_zero_object(e.signs))
    if isinstance(e, Crossing):
        dom, cod = e.first + e.second, e.second + e.first
        return Boundary(dom, cod, is_zero_object(dom) or is_zero_object(cod))
    if isinstance(e, Seq):
        lower, upper = typecheck(e.lower), typecheck(e.upper)
        if lower.codomain != upper.domain:
            raise DiagramTypeError(f"cannot stack {_show(upper.domain)} on {_show(lower.codomain)}", e.pos)
        return Boundary(lower.domain, upper.codomain, lower.zero_object or upper.zero_object)
    if isinstance(e, Tensor):
        left, right = typecheck(e.left), typecheck(e.right)
        dom, cod = left.domain + right.domain, left.codomain + right.codomain
        return Boundary(dom, cod, left.zero_object or right.zero_object
                        or is_zero_object(dom) or is_zero_object(cod))
    if isinstance(e, Sum):
        first, second = typecheck(e.first), typecheck(e.second)
        if (first.domain, first.codomain) != (second.domain, second.codomain):
            raise DiagramTypeError(f"cannot add {_show(first.domain)}->{_show(first.codomain)} and "
                                   f"{_show(second.domain)}->{_show(second.codomain)}", e.pos)
        return Boundary(first.domain, first.codomain, first.zero_object or second.zero_object)
    body = typecheck(e.body)
    return body


def _show(signs: str) -> str:
    return signs or "1"


# Normal forms
Matching = Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class NormalForm:
    domain: str
    codomain: str
    terms: Tuple[Tuple[Matching, Poly], ...]
    mode: str

    @property
    def is_zero(self) -> bool:
        return not self.terms


def _poly(value) -> Poly:
    return Poly(value, c, domain='ZZ')


# Layered words: a cup inserts two strands at a gap, a cap removes two adjacent
# strands and a crossing swaps two. Positions count from the left of the row
# the layer is applied to.
CUPS = {"eta": "+-", "epsdag": "-+"}
CAPS = {"eps": "-+", "etadag": "+-"}
CROSSING = "x"

Layer = Tuple[str, int]


@dataclass(frozen=True)
class _Term:
    coefficient: Poly
    domain: str
    layers: Tuple[Layer, ...]


def _apply_layer(row: str, layer: Layer) -> str:
    name, p = layer
    if name in CUPS:
        return row[:p] + CUPS[name] + row[p:]
    if name in CAPS:
        return row[:p] + row[p + 2:]
    return row[:p] + row[p + 1] + row[p] + row[p + 2:]


def _rows(domain: str, layers: Sequence[Layer]) -> List[str]:
    rows = [domain]
    for layer in layers:
        rows.append(_apply_layer(rows[-1], layer))
    return rows


def _expand(e: DiagramExpr) -> List[_Term]:
    """One layered word per choice of summand"""
    if isinstance(e, Generator):
        return [_Term(_poly(1), GENERATORS[e.name][0], ((e.name, 0),))]
    if isinstance(e, Identity):
        return [_Term(_poly(1), e.signs, ())]
    if isinstance(e, Crossing):
        return [_Term(_poly(1), e.first + e.second, ((CROSSING, 0),))]
    if isinstance(e, Scale):
        return [_Term(t.coefficient * e.factor, t.domain, t.layers) for t in _expand(e.body)]
    if isinstance(e, Sum):
        return _expand(e.first) + _expand(e.second)
    if isinstance(e, Seq):
        return [_Term(a.coefficient * b.coefficient, a.domain, a.layers + b.layers)
                for a in _expand(e.lower) for b in _expand(e.upper)]
    width = len(typecheck(e.left).codomain)
    return [_Term(a.coefficient * b.coefficient, a.domain + b.domain,
                  a.layers + tuple((name, p + width) for name, p in b.layers))
            for a in _expand(e.left) for b in _expand(e.right)]


def face_label(s: int, signs: str) -> Optional[int]:
    """
    Label of the leftmost face given the rightmost face label s, scanning
    right to left: + needs 0 and turns it to 1, - needs 1 and turns it to 0.
    """
    for ch in reversed(signs):
        if ch == "+":
            if s != 0:
                return None
            s = 1
        else:
            if s != 1:
                return None
            s = 0
    return s


def _labels(term: _Term) -> Optional[set]:
    """Rightmost face labels every row admits, None when some row admits none"""
    common = {0, 1}
    for row in _rows(term.domain, term.layers):
        admitted = {s for s in (0, 1) if face_label(s, row) is not None}
        if not admitted:
            return None
        common &= admitted
    return common


def _swap(first: Layer, second: Layer) -> Optional[Tuple[Layer, Layer]]:
    """Exchange the heights of two consecutive layers, or None when they touch"""
    (n1, p1), (n2, p2) = first, second
    if CROSSING in (n1, n2):
        return None
    if n1 in CUPS and n2 in CUPS:
        if p2 <= p1:
            return (n2, p2), (n1, p1 + 2)
        if p2 >= p1 + 2:
            return (n2, p2 - 2), (n1, p1)
        return None
    if n1 in CUPS:
        if p2 + 1 < p1:
            return (n2, p2), (n1, p1 - 2)
        if p2 > p1 + 1:
            return (n2, p2 - 2), (n1, p1)
        return None
    if n2 in CUPS:
        # a cup on the gap a cap leaves behind slides to the left of the cap
        if p2 <= p1:
            return (n2, p2), (n1, p1 + 2)
        return (n2, p2 + 2), (n1, p1)
    if p2 + 1 < p1:
        return (n2, p2), (n1, p1 - 2)
    if p2 >= p1:
        return (n2, p2 + 2), (n1, p1)
    return None


def _bubble(layers: List[Layer], k: int, target: int) -> Optional[List[Layer]]:
    layers = list(layers)
    while k != target:
        a = k - 1 if target < k else k
        swapped = _swap(layers[a], layers[a + 1])
        if swapped is None:
            return None
        layers[a], layers[a + 1] = swapped
        k += -1 if target < k else 1
    return layers


def _bring_together(layers: List[Layer], i: int, j: int) -> Optional[Tuple[List[Layer], int, int]]:
    """Move the layers between i and j out of the way, below i or above j"""
    while j - i > 1:
        for k in range(i + 1, j):
            moved = _bubble(layers, k, i)
            if moved is not None:
                layers, i = moved, i + 1
                break
        else:
            for k in range(j - 1, i, -1):
                moved = _bubble(layers, k, j)
                if moved is not None:
                    layers, j = moved, j - 1
                    break
            else:
                return None
    return layers, i, j


def _strands(term: _Term) -> Tuple[Dict[int, int], List[Tuple[int, ...]]]:
    """Cup that created each strand, and the strands each layer creates or consumes"""
    row = list(range(len(term.domain)))
    fresh = len(row)
    created: Dict[int, int] = {}
    touched: List[Tuple[int, ...]] = []
    for k, (name, p) in enumerate(term.layers):
        if name in CUPS:
            pair = (fresh, fresh + 1)
            fresh += 2
            row[p:p] = pair
            created.update({pair[0]: k, pair[1]: k})
        elif name in CAPS:
            pair = tuple(row[p:p + 2])
            del row[p:p + 2]
        else:
            pair = ()
            row[p], row[p + 1] = row[p + 1], row[p]
        touched.append(pair)
    return created, touched


def _faces(term: _Term) -> Tuple[Dict[int, int], Dict[int, int]]:
    """Face below each cup and face above each cap"""
    parent = list(range(len(term.domain) + 1))

    def find(f: int) -> int:
        while parent[f] != f:
            parent[f] = parent[parent[f]]
            f = parent[f]
        return f

    gaps = list(parent)
    below: Dict[int, int] = {}
    above: Dict[int, int] = {}
    for k, (name, p) in enumerate(term.layers):
        if name in CUPS:
            inside = len(parent)
            parent.append(inside)
            below[k] = gaps[p]
            gaps[p + 1:p + 1] = [inside, gaps[p]]
        elif name in CAPS:
            parent[find(gaps[p + 2])] = find(gaps[p])
            del gaps[p + 1:p + 3]
            above[k] = gaps[p]
    return {k: find(f) for k, f in below.items()}, {k: find(f) for k, f in above.items()}


def _redexes(term: _Term, mode: str) -> List[tuple]:
    """Candidate rewrites in leftmost order; pairs may still fail to come together"""
    if any(name == CROSSING for name, _ in term.layers):
        return [("crossing",)]
    labels = _labels(term)
    found: List[tuple] = []
    if labels is None or (mode == SPAN and not labels):
        found.append(("zero",))
    pairs = set()
    created, touched = _strands(term)
    for j, (name, _) in enumerate(term.layers):
        if name in CAPS:
            pairs.update((created[s], j) for s in touched[j] if s in created)
    below, above = _faces(term)
    for cap, face in above.items():
        for cup, other in below.items():
            if face == other and CAPS[term.layers[cap][0]] == CUPS[term.layers[cup][0]] \
                    and not set(touched[cup]) & set(touched[cap]):
                pairs.add((min(cap, cup), max(cap, cup)))
    found.extend(("pair", i, j) for i, j in sorted(pairs))
    if mode == SPAN and term.coefficient.degree() >= 2:
        found.append(("reduce",))
    return found


def _loop_factor(term: _Term, layers: List[Layer], i: int, mode: str) -> Poly:
    """Value of the closed loop whose cup is layers[i]: c clockwise, 1 - c counterclockwise"""
    name, g = layers[i]
    clockwise = CUPS[name] == "+-"
    if mode == FREE:
        return _poly(c) if clockwise else _poly(1 - c)
    rows = _rows(term.domain, layers)
    # label the outer face needs, carried to the rightmost face across the strands to its right
    required = int(clockwise) ^ ((len(rows[i]) - g) % 2)
    boundary = term.domain or rows[-1]
    if boundary:
        forced = 0 if boundary[-1] == "+" else 1
        return _poly(int(forced == required))
    return _poly(c) if required else _poly(1 - c)


def _apply(term: _Term, redex: tuple, mode: str) -> Optional[List[_Term]]:
    """Rewritten terms, or None when the redex cannot be brought into shape"""
    kind = redex[0]
    if kind in ("crossing", "zero"):
        return []
    if kind == "reduce":
        coefficient = term.coefficient.rem(_poly(c ** 2 - c))
        return [_Term(coefficient, term.domain, term.layers)] if not coefficient.is_zero else []
    together = _bring_together(list(term.layers), redex[1], redex[2])
    if together is None:
        return None
    layers, i, j = together
    (first, p), (second, q) = layers[i], layers[j]
    coefficient = term.coefficient
    if first in CUPS and second in CAPS:
        if q == p:
            coefficient = coefficient * _loop_factor(term, layers, i, mode)
        elif abs(q - p) == 2 and CUPS[first] != CAPS[second]:
            return None
        elif abs(q - p) > 2:
            return None
    elif not (first in CAPS and second in CUPS and p == q and CAPS[first] == CUPS[second]):
        return None
    if coefficient.is_zero:
        return []
    return [_Term(coefficient, term.domain, tuple(layers[:i] + layers[j + 1:]))]


def termination_measure(terms: Sequence[_Term]) -> Tuple[int, int, int, int]:
    """Crossings, then cups and caps, then terms, then total coefficient degree"""
    crossings = sum(1 for t in terms for name, _ in t.layers if name == CROSSING)
    bends = sum(1 for t in terms for name, _ in t.layers if name != CROSSING)
    degree = sum(t.coefficient.degree() for t in terms)
    return crossings, bends, len(terms), degree


def check_decrease(before: Tuple[int, ...], after: Tuple[int, ...], rule: str):
    if not after < before:
        raise RewriteError(f"rule {rule} took the termination measure from {before} to {after}")


def _rewrite(terms: List[_Term], mode: str, rng: Optional[random.Random]) -> List[_Term]:
    measure = termination_measure(terms)
    while True:
        redexes = [(k, redex) for k, term in enumerate(terms) for redex in _redexes(term, mode)]
        if rng is not None:
            rng.shuffle(redexes)
        for k, redex in redexes:
            replacement = _apply(terms[k], redex, mode)
            if replacement is not None:
                break
        else:
            return terms
        terms = terms[:k] + replacement + terms[k + 1:]
        after = termination_measure(terms)
        check_decrease(measure, after, redex[0])
        measure = after


def _word_matching(term: _Term) -> Matching:
    """Endpoints joined by an irreducible word; bottom 0..n-1, top n..n+m-1"""
    n = len(term.domain)
    row = list(range(n))
    fresh = n
    lower: Dict[int, Tuple[str, int]] = {i: ("end", i) for i in range(n)}
    upper: Dict[int, Tuple[str, int]] = {}
    for name, p in term.layers:
        if name in CUPS:
            a, b = fresh, fresh + 1
            fresh += 2
            lower[a], lower[b] = ("strand", b), ("strand", a)
            row[p:p] = [a, b]
        else:
            a, b = row[p], row[p + 1]
            upper[a], upper[b] = ("strand", b), ("strand", a)
            del row[p:p + 2]
    for j, s in enumerate(row):
        upper[s] = ("end", n + j)
    seen = set()

    def walk(s: int, up: bool) -> int:
        while True:
            seen.add(s)
            kind, v = (upper if up else lower)[s]
            if kind == "end":
                return v
            s, up = v, not up

    pairs = {tuple(sorted((i, walk(i, True)))) for i in range(n)}
    pairs |= {tuple(sorted((n + j, walk(s, False)))) for j, s in enumerate(row)}
    if len(seen) != fresh:
        raise RewriteError("a closed loop survived rewriting")
    return tuple(sorted(pairs))


@lru_cache(maxsize=None)
def planar_matchings(dom: str, cod: str) -> Tuple[Matching, ...]:
    """
    Every orientation-valid non-crossing matching of a boundary, sorted.

    Endpoints are numbered bottom left to right, then top left to right.
    Strands pair opposite charges (bottom + and top - carry +1); planarity
    is tested on the circle that runs along the bottom and back along the top.
    """
    n, m = len(dom), len(cod)
    charge = [1 if s == "+" else -1 for s in dom] + [-1 if s == "+" else 1 for s in cod]
    circle = tuple(range(n)) + tuple(n + (m - 1 - j) for j in range(m))

    def pairings(points: Tuple[int, ...]) -> List[Matching]:
        if not points:
            return [()]
        first, found = points[0], []
        for k in range(1, len(points), 2):
            if charge[points[k]] != -charge[first]:
                continue
            pair = (first, points[k]) if first < points[k] else (points[k], first)
            for inside in pairings(points[1:k]):
                for outside in pairings(points[k + 1:]):
                    found.append(tuple(sorted((pair,) + inside + outside)))
        return found

    return tuple(sorted(pairings(circle)))


def canonical_matching(dom: str, cod: str) -> Optional[Matching]:
    """Lexicographically least valid matching, or None"""
    matchings = planar_matchings(dom, cod)
    return matchings[0] if matchings else None


def representative_matching(dom: str, cod: str) -> Optional[Matching]:
    """Valid matching with the most through strands, ties to the lexicographically least"""
    n = len(dom)
    matchings = planar_matchings(dom, cod)
    if not matchings:
        return None
    return min(matchings, key=lambda m: (-sum(1 for a, b in m if a < n <= b), m))


def _render_layers(domain: str, layers: Sequence[Layer]) -> str:
    if not layers:
        return f"id({_show(domain)})"
    parts, row = [], domain
    for name, p in layers:
        rest = row[p + 2:] if name in CAPS else row[p:]
        pieces = ([f"id({row[:p]})"] if p else []) + [name] + ([f"id({rest})"] if rest else [])
        parts.append(" * ".join(pieces))
        row = _apply_layer(row, (name, p))
    return " ; ".join(parts)


def render_matching(dom: str, cod: str, matching: Matching) -> str:
    """Diagram text drawing a matching: caps innermost first, through strands, then cups"""
    n = len(dom)
    partner: Dict[int, int] = {}
    for a, b in matching:
        partner[a], partner[b] = b, a

    def peel(row: List[int], signs: str, offset: int, names: Dict[str, str]) -> List[Layer]:
        peeled = []
        while True:
            p = next((p for p in range(len(row) - 1) if partner[row[p]] == row[p + 1]), None)
            if p is None:
                return peeled
            peeled.append((names[signs[row[p] - offset]], p))
            del row[p:p + 2]

    caps = peel(list(range(n)), dom, 0, {"-": "eps", "+": "etadag"})
    cups = peel(list(range(n, n + len(cod))), cod, n, {"+": "eta", "-": "epsdag"})
    return _render_layers(dom, caps + cups[::-1])


def _collect(terms: List[_Term], domain: str, codomain: str, mode: str) -> NormalForm:
    if mode == SPAN:
        for t in terms:
            _word_matching(t)
        total = sum((t.coefficient for t in terms), _poly(0)).rem(_poly(c ** 2 - c))
        if total.is_zero:
            return NormalForm(domain, codomain, (), SPAN)
        matching = representative_matching(domain, codomain) if domain or codomain else ()
        if matching is None:
            raise RewriteError(f"nonzero diagram on {_show(domain)} -> {_show(codomain)} has no valid matching")
        return NormalForm(domain, codomain, ((matching, total),), SPAN)
    combined: Dict[Matching, Poly] = {}
    for t in terms:
        matching = _word_matching(t)
        combined[matching] = combined.get(matching, _poly(0)) + t.coefficient
    kept = [(m, p) for m, p in combined.items() if not p.is_zero]
    return NormalForm(domain, codomain, tuple(sorted(kept, key=lambda t: t[0])), FREE)


def normalize(e: Union[str, DiagramExpr], mode: Optional[str] = None,
              rng: Optional[random.Random] = None) -> NormalForm:
    """
    Normal form of a well-typed diagram.

    The expression is flattened into a sum of layered words that are rewritten
    until no rule applies: crossings and rows through zero objects vanish,
    zigzags straighten, closed loops become c or 1 - c, a cap under a cup of
    the same signs in one face becomes identity strands, and in span semantics
    coefficients are reduced modulo c^2 - c. ``rng`` picks the redex at every
    step; without it the leftmost redex is taken.
    """
    e = _expr(e)
    mode = mode or ConfigManager.get('default_semantics')
    if mode not in SEMANTICS:
        raise ValueError(f"unknown semantics {mode!r}")
    boundary = typecheck(e)
    terms = [t for t in _expand(e) if not t.coefficient.is_zero]
    return _collect(_rewrite(terms, mode, rng), boundary.domain, boundary.codomain, mode)


def diagram_eq(e1: Union[str, DiagramExpr], e2: Union[str, DiagramExpr], mode: Optional[str] = None) -> bool:
    b1, b2 = typecheck(e1), typecheck(e2)
    if (b1.domain, b1.codomain) != (b2.domain, b2.codomain):
        raise BoundaryMismatchError(f"diagrams have boundaries {_show(b1.domain)}->{_show(b1.codomain)} "
                                    f"and {_show(b2.domain)}->{_show(b2.codomain)}")
    return normalize(e1, mode) == normalize(e2, mode)


def render_normal_form(nf: NormalForm) -> str:
    lines = [f"boundary: {_show(nf.domain)} -> {_show(nf.codomain)}", f"mode: {nf.mode}"]
    if nf.is_zero:
        lines.append("terms: 0")
        return "\n".join(lines)
    lines.append("terms:")
    for matching, coefficient in nf.terms:
        pairs = ", ".join(f"({a}, {b})" for a, b in matching)
        lines.append(f"  - pairs: [{pairs}]")
        lines.append(f"    diagram: {render_matching(nf.domain, nf.codomain, matching)}")
        lines.append(f"    coefficient: {coefficient.as_expr()}")
    return "\n".join(lines)


def normal_form_to_record(nf: NormalForm) -> NormalFormRecord:
    terms = [NormalFormTerm(pairs=list(m), diagram=render_matching(nf.domain, nf.codomain, m),
                            coefficient=str(p.as_expr())) for m, p in nf.terms]
    return NormalFormRecord(domain=nf.domain, codomain=nf.codomain, mode=nf.mode, terms=terms)


# Decategorification
@lru_cache(maxsize=None)
def _k0_generators(group: str) -> Tuple[RationalMatrix, RationalMatrix]:
    model = build_model(group)
    return span_matrix(model.fdag), span_matrix(model.f)


def k0_object(signs: str, group: str = "Z1") -> RationalMatrix:
    """[Q_+] is the matrix of Fdag, [Q_-] that of F, juxtaposition multiplies left to right"""
    plus, minus = _k0_generators(group)
    result = RationalMatrix.identity(plus.rows)
    for s in signs:
        result = result @ (plus if s == "+" else minus)
    return result


def k0_matrix(x: Union[str, Sequence[str], DiagramExpr], group: str = "Z1"):
    """
    Class in the Grothendieck group: a sign word gives its matrix, a list of
    words their direct sum, an expression the classes of its boundary.
    """
    if isinstance(x, str) and (not x or set(x) <= {"+", "-", "1"}):
        return k0_object(x.replace("1", ""), group)
    if isinstance(x, (list, tuple)):
        plus, _ = _k0_generators(group)
        total = RationalMatrix.zero(plus.rows, plus.cols)
        for word in x:
            total = total + k0_object(word, group)
        return total
    b = typecheck(x)
    return k0_object(b.domain, group), k0_object(b.codomain, group)


# Evaluation into the span model
class SpanEvaluator:
    """
    Evaluates crossing-free diagrams over alternating boundaries to
    2-morphisms whose boundaries are the canonical spans E(s1)∘(E(s2)∘(...)),
    with E(+) = Fdag, E(-) = F and E(1) = id.
    """

    def __init__(self, model: FermionModel):
        self.model = model
        self._spans: Dict[str, Span] = {"": model.id_psi, "+": model.fdag, "-": model.f,
                                        "+-": model.fdag_f, "-+": model.f_fdag}
        self._witnesses: Dict[Tuple[str, str], SpanWitness] = {}
        self._generators = {"eta": model.eta, "eps": model.eps, "etadag": model.etadag, "epsdag": model.epsdag}

    def span(self, signs: str) -> Span:
        if signs not in self._spans:
            self._spans[signs] = compose_spans(self.span(signs[0]), self.span(signs[1:]), name=f"E({signs})")
        return self._spans[signs]

    def rebracket(self, s1: str, s2: str) -> SpanWitness:
        """Witness E(s1)∘E(s2) -> E(s1 s2)"""
        key = (s1, s2)
        if key in self._witnesses:
            return self._witnesses[key]
        if not s1:
            w = left_unitor(self.span(s2))
        elif not s2:
            w = right_unitor(self.span(s1))
        elif len(s1) == 1:
            w = identity_witness(self.span(s1 + s2))
        else:
            head, rest = s1[0], s1[1:]
            w = compose_witnesses(whisker_witness(self.span(head), self.rebracket(rest, s2)),
                                  associator(self.span(head), self.span(rest), self.span(s2)))
        self._witnesses[key] = w
        return w

    def evaluate(self, e: DiagramExpr) -> TwoMorphism:
        if isinstance(e, Generator):
            return self._generators[e.name]
        if isinstance(e, Identity):
            return identity_2(self.span(e.signs))
        if isinstance(e, Crossing):
            raise EvaluationError(f"crossing at position {e.pos} has no counterpart in the span model")
        if isinstance(e, Seq):
            lower, upper = self.evaluate(e.lower), self.evaluate(e.upper)
            return reduce_2(vert_compose_2(reduce_2(upper), reduce_2(lower)))
        if isinstance(e, Tensor):
            left, right = typecheck(e.left), typecheck(e.right)
            juxtaposed = horiz_compose_2(self.evaluate(e.left), self.evaluate(e.right))
            return reduce_2(transport_2(juxtaposed, self.rebracket(left.domain, right.domain),
                                        self.rebracket(left.codomain, right.codomain)))
        if isinstance(e, Sum):
            return direct_sum_2(self.evaluate(e.first), self.evaluate(e.second))
        if e.factor < 0:
            raise EvaluationError("negative multiples have no counterpart in the span model")
        body = self.evaluate(e.body)
        if e.factor == 0:
            return zero_2(body.from_span, body.to_span)
        result = body
        for _ in range(e.factor - 1):
            result = direct_sum_2(result, body)
        return result


def _check_evaluable(e: DiagramExpr):
    b = typecheck(e)
    if b.zero_object:
        raise EvaluationError("boundary is not alternating")
    if isinstance(e, Crossing):
        raise EvaluationError(f"crossing at position {e.pos} has no counterpart in the span model")
    for child in _children(e):
        _check_evaluable(child)


def _children(e: DiagramExpr) -> List[DiagramExpr]:
    if isinstance(e, Seq):
        return [e.lower, e.upper]
    if isinstance(e, Tensor):
        return [e.left, e.right]
    if isinstance(e, Sum):
        return [e.first, e.second]
    if isinstance(e, Scale):
        return [e.body]
    return []


@lru_cache(maxsize=8)
def _evaluator(group: str) -> SpanEvaluator:
    return SpanEvaluator(build_model(group))


def evaluate_to_span(e: Union[str, DiagramExpr], group: Union[str, FermionModel] = "Z2") -> TwoMorphism:
    e = _expr(e)
    _check_evaluable(e)
    evaluator = SpanEvaluator(group) if isinstance(group, FermionModel) else _evaluator(group)
    return evaluator.evaluate(e)


# Sampling harnesses
def _alternating(signs: str) -> bool:
    return not is_zero_object(signs)


def random_expression(rng: random.Random, max_generators: int = 12, crossings: bool = True,
                      alternating: bool = False, sums: bool = True) -> DiagramExpr:
    """
    Random well-typed diagram built layer by layer: each layer places a cup,
    cap or crossing at some position between identity strands.
    """
    width = rng.choice([0, 1, 2, 3])
    start = rng.choice("+-")
    signs = "".join(start if i % 2 == 0 else ("-" if start == "+" else "+") for i in range(width))
    if not alternating and width >= 2 and rng.random() < 0.1:
        signs = signs[:-1] + signs[-2]
    expr: DiagramExpr = Identity(signs)
    used = 0
    target = rng.randint(1, max(1, max_generators))
    while used < target:
        options = []
        for p in range(len(signs) + 1):
            options.append(("eta", p, signs[:p] + "+-" + signs[p:]))
            options.append(("epsdag", p, signs[:p] + "-+" + signs[p:]))
        for p in range(len(signs) - 1):
            pair = signs[p:p + 2]
            if pair == "-+":
                options.append(("eps", p, signs[:p] + signs[p + 2:]))
            if pair == "+-":
                options.append(("etadag", p, signs[:p] + signs[p + 2:]))
            if crossings:
                options.append(("x", p, signs[:p] + pair[::-1] + signs[p + 2:]))
        if alternating:
            options = [o for o in options if _alternating(o[2])]
        if len(signs) > 4:
            options = [o for o in options if len(o[2]) <= len(signs)] or options
        if not options:
            break
        name, p, new_signs = rng.choice(options)
        if name == "x":
            gen: DiagramExpr = Crossing(signs[p], signs[p + 1])
            width_used = 2
        else:
            gen = Generator(name)
            width_used = len(GENERATORS[name][0])
        layer = gen
        if p > 0:
            layer = Tensor(Identity(signs[:p]), layer)
        if p + width_used < len(signs):
            layer = Tensor(layer, Identity(signs[p + width_used:]))
        expr = Seq(expr, layer)
        signs = new_signs
        used += 1

    if sums and used < max_generators and rng.random() < 0.3:
        loop = Seq(Generator("eta"), Generator("etadag")) if rng.random() < 0.5 else \
            Seq(Generator("epsdag"), Generator("eps"))
        if used + 2 <= max_generators:
            expr = Sum(expr, Tensor(expr, loop)) if 2 * used + 2 <= max_generators else Tensor(expr, loop)
    if sums and rng.random() < 0.1:
        expr = Scale(rng.randint(0, 3), expr)
    return expr


@dataclass
class Discrepancy:
    expression: str
    first: NormalForm
    second: NormalForm


def confluence_sample(samples: Optional[int] = None, max_generators: Optional[int] = None,
                      mode: Optional[str] = None, seed: int = 0, orders: int = 3,
                      progress: bool = False) -> List[Discrepancy]:
    """Normalize random expressions under several random rewrite orders and report disagreements"""
    samples = ConfigManager.get('confluence_samples') if samples is None else samples
    max_generators = ConfigManager.get('confluence_max_generators') if max_generators is None else max_generators
    mode = mode or ConfigManager.get('default_semantics')
    rng = random.Random(seed)
    found: List[Discrepancy] = []
    for _ in tqdm(range(samples), desc=f"confluence ({mode})", disable=not progress):
        e = random_expression(rng, max_generators)
        reference = normalize(e, mode)
        for _ in range(orders):
            other = normalize(e, mode, rng=random.Random(rng.random()))
            if other != reference:
                found.append(Discrepancy(render_expr(e), reference, other))
                break
    logger.info(f"Confluence sampling ({mode}): {samples} expressions, {len(found)} discrepancies")
    return found


@dataclass
class OracleResult:
    diagram_equal: bool
    span_equivalent: bool

    @property
    def agree(self) -> bool:
        return self.diagram_equal == self.span_equivalent


def oracle_check(e1: Union[str, DiagramExpr], e2: Union[str, DiagramExpr], group: str = "Z2") -> OracleResult:
    """Compare span-mode diagram equality with equivalence of the evaluated 2-morphisms"""
    e1, e2 = _expr(e1), _expr(e2)
    equal = diagram_eq(e1, e2, SPAN)
    witness = two_morphism_eq(evaluate_to_span(e1, group), evaluate_to_span(e2, group), mode=EQUIVALENCE)
    result = OracleResult(diagram_equal=equal, span_equivalent=witness is not None)
    if not result.agree:
        logger.warning(f"Oracle disagreement on {render_expr(e1)} vs {render_expr(e2)}")
    return result
