"""Exact measure algebra on the dyadic sequence space.

Points are one-sided infinite 0/1 sequences.  A *word* ``w`` (a string of
``0``/``1`` of length ``d``) stands for the cylinder of all sequences whose
first ``d`` coordinates spell ``w``.  Coordinates are 1-based in the
documentation; ``w[i]`` in code is coordinate ``i + 1``.

All measures are product measures with rational weights and an eventually
periodic weight schedule, so every cylinder measure, Radon-Nikodym ratio
and saturation computed here is an exact :class:`fractions.Fraction`.
Almost-everywhere statements of the underlying theory are replaced by
exact statements on the cylinder algebra at a working depth; exceptional
regions are carried around explicitly as :class:`CylinderSet` remainders.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Iterator, Sequence

from .errors import DepthMismatch

Word = str

ZERO = Fraction(0)
ONE = Fraction(1)


def all_words(depth: int) -> Iterator[Word]:
    """Yield all 0/1 words of the given depth in lexicographic order."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    for bits in product("01", repeat=depth):
        yield "".join(bits)


def check_word(w: Word) -> Word:
    if any(c not in "01" for c in w):
        raise ValueError(f"not a 0/1 word: {w!r}")
    return w


def extensions(w: Word, depth: int) -> Iterator[Word]:
    """All depth-`depth` words extending `w` (lexicographic)."""
    if depth < len(w):
        raise DepthMismatch(f"cannot refine word of depth {len(w)} to depth {depth}")
    for tail in all_words(depth - len(w)):
        yield w + tail


WeightPair = tuple[Fraction, Fraction]


def _as_pair(p: Sequence) -> WeightPair:
    p0, p1 = Fraction(p[0]), Fraction(p[1])
    if p0 <= 0 or p1 <= 0:
        raise ValueError("weights must be strictly positive")
    if p0 + p1 != 1:
        raise ValueError(f"weights must sum to 1, got {p0} + {p1}")
    return (p0, p1)


@dataclass(frozen=True)
class ProductMeasure:
    """Product measure with an eventually periodic rational weight schedule.

    ``head`` lists the weight pairs of the first coordinates, after which the
    pairs in ``cycle`` repeat forever.  ``weight(i, b)`` is the mass the
    i-th coordinate (1-based) gives to symbol ``b``.
    """

    head: tuple[WeightPair, ...]
    cycle: tuple[WeightPair, ...]

    def __post_init__(self):
        if not self.cycle:
            raise ValueError("cycle must contain at least one weight pair")

    @staticmethod
    def uniform() -> "ProductMeasure":
        half = Fraction(1, 2)
        return ProductMeasure(head=(), cycle=(((half, half)),))

    @staticmethod
    def iid(p0) -> "ProductMeasure":
        p0 = Fraction(p0)
        return ProductMeasure(head=(), cycle=((p0, 1 - p0),))

    @staticmethod
    def from_schedule(head: Sequence[Sequence], cycle: Sequence[Sequence]) -> "ProductMeasure":
        return ProductMeasure(
            head=tuple(_as_pair(p) for p in head),
            cycle=tuple(_as_pair(p) for p in cycle),
        )

    def weight(self, i: int, bit: str) -> Fraction:
        if i < 1:
            raise ValueError("coordinates are 1-based")
        if i <= len(self.head):
            pair = self.head[i - 1]
        else:
            pair = self.cycle[(i - len(self.head) - 1) % len(self.cycle)]
        return pair[0] if bit == "0" else pair[1]

    def cylinder(self, w: Word) -> Fraction:
        """Measure of the cylinder named by `w`."""
        m = ONE
        for i, bit in enumerate(check_word(w), start=1):
            m *= self.weight(i, bit)
        return m

    def ratio(self, x: Word, y: Word) -> Fraction:
        """Radon-Nikodym ratio prod_i weight(i, y_i) / weight(i, x_i).

        For a tail-preserving map sending the cylinder of ``x`` onto the
        cylinder of ``y`` this is the derivative d(mu o map)/d(mu) on ``x``.
        Both words must have the same depth.
        """
        if len(x) != len(y):
            raise DepthMismatch(f"ratio needs equal depths, got {len(x)} and {len(y)}")
        r = ONE
        for i, (bx, by) in enumerate(zip(check_word(x), check_word(y)), start=1):
            if bx != by:
                r *= self.weight(i, by) / self.weight(i, bx)
        return r

    def shift(self, n: int) -> "ProductMeasure":
        """The product measure seen by coordinates beyond the n-th."""
        if n < 0:
            raise ValueError("shift must be >= 0")
        if n <= len(self.head):
            return ProductMeasure(head=self.head[n:], cycle=self.cycle)
        k = (n - len(self.head)) % len(self.cycle)
        return ProductMeasure(head=(), cycle=self.cycle[k:] + self.cycle[:k])

    def class_of(self, w: Word, n: int) -> list[Word]:
        """The finite equivalence class of `w` at level `n`: all words that
        agree with `w` beyond coordinate `n` (2^n words, lexicographic)."""
        if len(w) < n:
            raise DepthMismatch(f"word of depth {len(w)} has no level-{n} class")
        return [p + w[n:] for p in all_words(n)]

    def schedule_key(self) -> tuple:
        """Hashable canonical form (used in reports)."""
        return (
            tuple((str(a), str(b)) for a, b in self.head),
            tuple((str(a), str(b)) for a, b in self.cycle),
        )


# ---------------------------------------------------------------------------
# Cylinder sets
# ---------------------------------------------------------------------------

def _normalize(words: Iterable[Word]) -> tuple[Word, ...]:
    """Canonical form: drop words nested inside others, merge full sibling
    pairs bottom-up, sort lexicographically with shorter words first."""
    ws = sorted(set(check_word(w) for w in words), key=lambda w: (len(w), w))
    # drop nested words (any word with a strict prefix already present)
    kept: list[Word] = []
    for w in ws:
        if not any(w.startswith(p) for p in kept if len(p) < len(w)):
            kept.append(w)
    # merge sibling pairs until stable
    merged = True
    current = set(kept)
    while merged:
        merged = False
        for w in sorted(current, key=len, reverse=True):
            if w and w in current:
                sib = w[:-1] + ("1" if w[-1] == "0" else "0")
                if sib in current:
                    current.discard(w)
                    current.discard(sib)
                    current.add(w[:-1])
                    merged = True
    return tuple(sorted(current, key=lambda w: (len(w), w)))


def _split(words: Sequence[Word]) -> tuple[list[Word], list[Word]]:
    """Split a prefix-free word list into the 0-branch and 1-branch,
    stripping the leading symbol.  The caller guarantees '' is absent."""
    zero = [w[1:] for w in words if w[0] == "0"]
    one = [w[1:] for w in words if w[0] == "1"]
    return zero, one


def _union(a: Sequence[Word], b: Sequence[Word]) -> list[Word]:
    if not a:
        return list(b)
    if not b:
        return list(a)
    if "" in a or "" in b:
        return [""]
    a0, a1 = _split(a)
    b0, b1 = _split(b)
    r0 = _union(a0, b0)
    r1 = _union(a1, b1)
    if r0 == [""] and r1 == [""]:
        return [""]
    return ["0" + w for w in r0] + ["1" + w for w in r1]


def _intersection(a: Sequence[Word], b: Sequence[Word]) -> list[Word]:
    if not a or not b:
        return []
    if "" in a:
        return list(b)
    if "" in b:
        return list(a)
    a0, a1 = _split(a)
    b0, b1 = _split(b)
    return ["0" + w for w in _intersection(a0, b0)] + ["1" + w for w in _intersection(a1, b1)]


def _difference(a: Sequence[Word], b: Sequence[Word]) -> list[Word]:
    if not a or not b:
        return list(a)
    if "" in b:
        return []
    if "" in a:
        a = ["0", "1"]
    a0, a1 = _split(a)
    b0, b1 = _split(b)
    r0 = _difference(a0, b0)
    r1 = _difference(a1, b1)
    if r0 == [""] and r1 == [""]:
        return [""]
    return ["0" + w for w in r0] + ["1" + w for w in r1]


@dataclass(frozen=True)
class CylinderSet:
    """A finite union of cylinders in canonical prefix-free form.

    The empty tuple is the empty set; the tuple ``("",)`` is the whole
    space.  All boolean operations are exact and return canonical forms,
    so equality of sets is equality of the ``words`` tuples.
    """

    words: tuple[Word, ...]

    @staticmethod
    def of(words: Iterable[Word]) -> "CylinderSet":
        return CylinderSet(_normalize(words))

    @staticmethod
    def empty() -> "CylinderSet":
        return CylinderSet(())

    @staticmethod
    def full() -> "CylinderSet":
        return CylinderSet(("",))

    def is_empty(self) -> bool:
        return not self.words

    def is_full(self) -> bool:
        return self.words == ("",)

    @property
    def max_depth(self) -> int:
        return max((len(w) for w in self.words), default=0)

    def measure(self, mu: ProductMeasure) -> Fraction:
        return sum((mu.cylinder(w) for w in self.words), ZERO)

    def union(self, other: "CylinderSet") -> "CylinderSet":
        return CylinderSet(tuple(sorted(_union(self.words, other.words), key=lambda w: (len(w), w))))

    def intersection(self, other: "CylinderSet") -> "CylinderSet":
        return CylinderSet.of(_intersection(self.words, other.words))

    def difference(self, other: "CylinderSet") -> "CylinderSet":
        return CylinderSet.of(_difference(self.words, other.words))

    def complement(self) -> "CylinderSet":
        return CylinderSet.full().difference(self)

    def symmetric_difference(self, other: "CylinderSet") -> "CylinderSet":
        return self.difference(other).union(other.difference(self))

    def covers(self, w: Word) -> bool:
        """True when the cylinder of `w` is contained in this set."""
        check_word(w)
        return any(w.startswith(p) for p in self.words if len(p) <= len(w))

    def words_at(self, depth: int) -> list[Word]:
        """The set as a disjoint list of depth-`depth` words (all member
        cylinders must fit, i.e. depth >= max_depth)."""
        if depth < self.max_depth:
            raise DepthMismatch(
                f"set has cylinders of depth {self.max_depth}, cannot list at {depth}")
        out: list[Word] = []
        for w in self.words:
            out.extend(extensions(w, depth))
        return sorted(out)

    def saturate(self, n: int) -> "CylinderSet":
        """Hull under the level-`n` relation: free the first n coordinates.

        Any member cylinder of depth <= n saturates to the whole space.
        """
        if self.is_empty():
            return self
        if any(len(w) <= n for w in self.words):
            return CylinderSet.full()
        suffixes = CylinderSet.of(w[n:] for w in self.words)
        return CylinderSet.of(p + s for p in all_words(n) for s in suffixes.words)

    def suffix_part(self, n: int) -> "CylinderSet":
        """For a set invariant under the level-`n` relation, the set of its
        suffixes beyond coordinate n (a cylinder set of the shifted space)."""
        if self.saturate(n) != self:
            raise ValueError(f"set is not invariant at level {n}")
        if self.is_full():
            return CylinderSet.full()
        return CylinderSet.of(w[n:] for w in self.words)

    def prepend_free(self, n: int) -> "CylinderSet":
        """Embed a suffix-space set into the full space by freeing the first
        n coordinates (inverse of :meth:`suffix_part`)."""
        if self.is_empty():
            return self
        if self.is_full():
            return self
        return CylinderSet.of(p + s for p in all_words(n) for s in self.words)

    def to_csv(self, mu: ProductMeasure) -> str:
        """Rows word,depth,numerator,denominator of the member cylinders."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["word", "depth", "numerator", "denominator"])
        for w in self.words:
            m = mu.cylinder(w)
            writer.writerow([w, len(w), m.numerator, m.denominator])
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "CylinderSet":
        rows = list(csv.reader(io.StringIO(text)))
        return CylinderSet.of(r[0] for r in rows[1:] if r)
