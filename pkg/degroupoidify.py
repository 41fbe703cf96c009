"""
Degroupoidification
Turns spans of groupoids into exact rational matrices and states into column vectors
"""

import logging
from typing import Any, Dict, List, Sequence, Union

from sympy import Matrix, Rational, zeros

from groupoid_core import FiniteGroupoid, iso_classes
from span_calculus import Span
from utils import BoundaryMismatchError, StructuralError, format_rational

logger = logging.getLogger(__name__)


class RationalMatrix:
    """Exact matrix whose rows and columns are labelled by iso-class representatives"""

    def __init__(self, rows: Sequence[Any], cols: Sequence[Any], entries: Matrix = None):
        self.rows = list(rows)
        self.cols = list(cols)
        self.entries = zeros(len(self.rows), len(self.cols)) if entries is None else Matrix(entries)
        if self.entries.shape != (len(self.rows), len(self.cols)):
            raise StructuralError(f"matrix of shape {self.entries.shape} does not fit "
                                  f"{len(self.rows)}x{len(self.cols)} basis")

    @classmethod
    def identity(cls, basis: Sequence[Any]) -> "RationalMatrix":
        m = cls(basis, basis)
        for i in range(len(m.rows)):
            m.entries[i, i] = 1
        return m

    @classmethod
    def zero(cls, rows: Sequence[Any], cols: Sequence[Any]) -> "RationalMatrix":
        return cls(rows, cols)

    @property
    def shape(self):
        return self.entries.shape

    def entry(self, row: Any, col: Any) -> Rational:
        return Rational(self.entries[self.rows.index(row), self.cols.index(col)])

    def is_zero(self) -> bool:
        return all(e == 0 for e in self.entries)

    def column(self, j: int = 0) -> List[Rational]:
        return [Rational(self.entries[i, j]) for i in range(len(self.rows))]

    def __matmul__(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.cols != other.rows:
            raise BoundaryMismatchError(f"cannot multiply: columns {self.cols} vs rows {other.rows}")
        return RationalMatrix(self.rows, other.cols, self.entries * other.entries)

    def __add__(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.rows != other.rows or self.cols != other.cols:
            raise BoundaryMismatchError("cannot add matrices over different bases")
        return RationalMatrix(self.rows, self.cols, self.entries + other.entries)

    def __mul__(self, scalar: Union[int, Rational]) -> "RationalMatrix":
        return RationalMatrix(self.rows, self.cols, self.entries * Rational(scalar))

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RationalMatrix):
            return NotImplemented
        return self.rows == other.rows and self.cols == other.cols and self.entries == other.entries

    def __repr__(self):
        return f"RationalMatrix({self.to_record()['entries']})"

    def to_record(self) -> Dict[str, Any]:
        return {
            'rows': [str(r) for r in self.rows],
            'cols': [str(c) for c in self.cols],
            'entries': [[format_rational(self.entries[i, j]) for j in range(len(self.cols))]
                        for i in range(len(self.rows))],
        }


def basis(g: FiniteGroupoid) -> List[Any]:
    """Iso-class representatives, in class order"""
    return list(iso_classes(g).representative)


def span_matrix(S: Span) -> RationalMatrix:
    """
    Entry ([b], [a]) is |Aut(a)| times the sum of 1/|Aut(m)| over apex
    classes [m] with rightLeg(m) ≅ a and leftLeg(m) ≅ b.
    """
    A, B, M = S.source, S.target, S.apex
    pA, pB = iso_classes(A), iso_classes(B)
    matrix = RationalMatrix(pB.representative, pA.representative)
    for m in iso_classes(M).representative:
        ia = pA.class_of[S.right.obj(m)]
        ib = pB.class_of[S.left.obj(m)]
        matrix.entries[ib, ia] += Rational(len(A.loops(pA.representative[ia])), len(M.loops(m)))
    logger.debug(f"Degroupoidified {S.name or 'span'} to a {matrix.shape[0]}x{matrix.shape[1]} matrix")
    return matrix


def _is_terminal(g: FiniteGroupoid) -> bool:
    return len(g.objects) == 1 and len(g.morphisms) == 1


def state_vector(S: Span) -> RationalMatrix:
    """Column vector of a span out of the terminal groupoid"""
    if not _is_terminal(S.source):
        raise BoundaryMismatchError(f"state {S.name or '?'} does not start at the terminal groupoid")
    return span_matrix(S)


def inner_product(v: RationalMatrix, w: RationalMatrix) -> Rational:
    if v.shape[1] != 1 or w.shape[1] != 1:
        raise BoundaryMismatchError("inner product needs column vectors")
    if v.rows != w.rows:
        raise BoundaryMismatchError(f"inner product over different bases: {v.rows} vs {w.rows}")
    return Rational((v.entries.T * w.entries)[0, 0]) if v.rows else Rational(0)


def history_counts(S: Span) -> RationalMatrix:
    """For a span of sets: entry (j, i) counts histories from i to j"""
    for g in (S.source, S.target, S.apex):
        if len(g.morphisms) != len(g.objects):
            raise StructuralError(f"{g.name or 'groupoid'} is not discrete; history counts need a span of sets")
    counts = RationalMatrix(S.target.objects, S.source.objects)
    for m in S.apex.objects:
        counts.entries[S.target.object_index(S.left.obj(m)), S.source.object_index(S.right.obj(m))] += 1
    return counts
