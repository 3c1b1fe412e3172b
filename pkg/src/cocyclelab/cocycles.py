"""Group-valued step functions on the sequence space and their cocycles.

A step function assigns a group element to every word of a fixed depth;
its coboundary increments f(sigma x) f(x)^-1 along the generators are
partial step functions, undefined exactly on the generators' truncation
remainders.  Undefined mass is always carried along explicitly so that
predicates can report it instead of silently passing.

Kernels package the induced two-point cocycle c(a, b) on pairs of words
in a common finite class; the three kernel laws (reflexivity, antisymmetry,
the chain rule) are checked exhaustively on small instances.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import DepthExhausted, DepthMismatch, PostconditionFailure, SizeGuard
from .groups import GroupModel, Element, RationalRatioGroup
from .measure import ONE, ZERO, CylinderSet, ProductMeasure, Word, all_words
from .odometer import GammaAction, PiecewiseCylinderMap, orbit_overflow

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class StepFunction:
    """A total map from depth-`depth` words to group elements."""

    model: GroupModel
    depth: int
    table: Mapping[Word, Element]

    def __post_init__(self):
        expected = 1 << self.depth
        if len(self.table) != expected:
            raise DepthMismatch(
                f"table has {len(self.table)} entries, needs {expected} at depth {self.depth}")
        for w in self.table:
            if len(w) != self.depth:
                raise DepthMismatch(f"table key {w!r} does not have depth {self.depth}")

    @staticmethod
    def constant(model: GroupModel, value: Element, depth: int = 0) -> "StepFunction":
        return StepFunction(model, depth, {w: value for w in all_words(depth)})

    def at(self, w: Word) -> Element:
        if len(w) < self.depth:
            raise DepthMismatch(f"word of depth {len(w)} too shallow for depth {self.depth}")
        return self.table[w[: self.depth]]

    def value_set(self) -> tuple:
        seen = {self.model.key(v): v for v in self.table.values()}
        return tuple(seen[k] for k in sorted(seen))

    def values_on(self, s: CylinderSet) -> tuple:
        depth = max(self.depth, s.max_depth)
        seen = {}
        for w in s.words_at(depth):
            v = self.at(w)
            seen.setdefault(self.model.key(v), v)
        return tuple(seen[k] for k in sorted(seen))

    def refine(self, depth: int) -> "StepFunction":
        if depth < self.depth:
            raise DepthMismatch("cannot coarsen a step function")
        if depth == self.depth:
            return self
        return StepFunction(self.model, depth, {w: self.at(w) for w in all_words(depth)})

    def right_translate_on(self, s: CylinderSet, g: Element) -> "StepFunction":
        """f(x) g on `s`, f(x) elsewhere."""
        depth = max(self.depth, s.max_depth)
        table = {}
        for w in all_words(depth):
            v = self.at(w)
            table[w] = self.model.mul(v, g) if s.covers(w) else v
        return StepFunction(self.model, depth, table)

    def level_set(self, value: Element) -> CylinderSet:
        return CylinderSet.of(w for w, v in self.table.items() if v == value)

    def disagreement(self, other: "StepFunction") -> CylinderSet:
        if other.model is not self.model and other.model.name != self.model.name:
            raise ValueError("step functions live over different group models")
        depth = max(self.depth, other.depth)
        return CylinderSet.of(w for w in all_words(depth) if self.at(w) != other.at(w))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["word", "value"])
        for w in sorted(self.table):
            writer.writerow([w, self.model.format(self.table[w])])
        return buf.getvalue()

    @staticmethod
    def from_csv(model: GroupModel, text: str) -> "StepFunction":
        rows = list(csv.reader(io.StringIO(text)))
        table = {w: model.parse(v) for w, v in rows[1:] if w or v}
        depth = max((len(w) for w in table), default=0)
        return StepFunction(model, depth, table)


@dataclass(frozen=True)
class PartialStepFunction:
    """A step function defined off an explicit cylinder region.

    Serves two roles: truncation remainders of coboundary increments
    (the undefined part is genuinely unknown there), and step functions
    with an absorbing marker on an excluded set (the marker region is
    known, just outside the group).  `at` returns None on the region
    either way; predicates must consult `undefined` and report it.
    """

    model: GroupModel
    depth: int
    table: Mapping[Word, Element]
    undefined: CylinderSet

    def __post_init__(self):
        if self.undefined.max_depth > self.depth:
            raise DepthMismatch("undefined region deeper than the table")
        defined = CylinderSet.of(self.table)
        if defined.union(self.undefined) != CylinderSet.full() or \
                not defined.intersection(self.undefined).is_empty():
            raise PostconditionFailure(
                "partial-table", "table and undefined region must partition the space")
        for w in self.table:
            if len(w) != self.depth:
                raise DepthMismatch(f"table key {w!r} does not have depth {self.depth}")

    @staticmethod
    def total(f: StepFunction) -> "PartialStepFunction":
        return PartialStepFunction(f.model, f.depth, dict(f.table), CylinderSet.empty())

    @staticmethod
    def masked(f: StepFunction, region: CylinderSet) -> "PartialStepFunction":
        """`f` with the given region carved out (the marker use)."""
        depth = max(f.depth, region.max_depth)
        table = {w: f.at(w) for w in all_words(depth) if not region.covers(w)}
        return PartialStepFunction(f.model, depth, table, region)

    def at(self, w: Word) -> Optional[Element]:
        if len(w) < self.depth:
            raise DepthMismatch(f"word of depth {len(w)} too shallow for depth {self.depth}")
        return self.table.get(w[: self.depth])

    def defined_set(self) -> CylinderSet:
        return self.undefined.complement()

    def undefined_measure(self, mu: ProductMeasure) -> Fraction:
        return self.undefined.measure(mu)

    def value_set(self) -> tuple:
        seen = {self.model.key(v): v for v in self.table.values()}
        return tuple(seen[k] for k in sorted(seen))

    def refine(self, depth: int) -> "PartialStepFunction":
        if depth < self.depth:
            raise DepthMismatch("cannot coarsen a partial step function")
        if depth == self.depth:
            return self
        table = {}
        for w in all_words(depth):
            v = self.table.get(w[: self.depth])
            if v is not None or not self.undefined.covers(w):
                table[w] = self.table[w[: self.depth]]
        return PartialStepFunction(self.model, depth, table, self.undefined)


def coboundary_increment(
    f: StepFunction,
    sigma: PiecewiseCylinderMap,
    depth: Optional[int] = None,
) -> PartialStepFunction:
    """The increment x -> f(sigma x) f(x)^-1, undefined on the remainder
    of the truncated `sigma`."""
    e = max(f.depth, sigma.max_depth, depth or 0)
    table = {}
    for w in all_words(e):
        img = sigma.apply(w)
        if img is not None:
            table[w] = f.model.mul(f.at(img), f.model.inv(f.at(w)))
    return PartialStepFunction(f.model, e, table, sigma.remainder())


@dataclass(frozen=True)
class IncrementFamily:
    """The per-generator increments of one step function, in the action's
    enumeration order."""

    f: StepFunction
    action: GammaAction
    parts: tuple[tuple[str, PartialStepFunction], ...]

    @staticmethod
    def of(f: StepFunction, action: GammaAction, depth: Optional[int] = None) -> "IncrementFamily":
        parts = tuple(
            (label, coboundary_increment(f, g, depth)) for label, g in action.generators)
        return IncrementFamily(f, action, parts)

    def labels(self) -> list[str]:
        return [label for label, _ in self.parts]

    def value_report(self) -> dict:
        return {label: part.value_set() for label, part in self.parts}


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CocycleKernel:
    """The two-point cocycle c(a, b) on depth-`depth` words that agree
    beyond coordinate `class_depth`.

    Kinds: "coboundary" (c = f(a) f(b)^-1 for the stored potential),
    "trivial", "ratio" (measure ratios valued in the positive rationals),
    and "explicit" (a literal table, used for negative controls).
    """

    model: GroupModel
    depth: int
    class_depth: int
    kind: str
    potential: Optional[StepFunction] = None
    mu: Optional[ProductMeasure] = None
    table: Optional[Mapping[tuple[Word, Word], Element]] = None

    def __post_init__(self):
        if not 0 <= self.class_depth <= self.depth:
            raise DepthMismatch("need 0 <= class_depth <= depth")
        if self.kind == "coboundary" and (self.potential is None
                                          or self.potential.depth > self.depth):
            raise ValueError("coboundary kernel needs a potential within its depth")
        if self.kind == "ratio" and self.mu is None:
            raise ValueError("ratio kernel needs a measure")
        if self.kind == "explicit" and self.table is None:
            raise ValueError("explicit kernel needs a table")

    @staticmethod
    def coboundary(f: StepFunction, class_depth: int,
                   depth: Optional[int] = None) -> "CocycleKernel":
        d = max(f.depth, depth or 0, class_depth)
        return CocycleKernel(f.model, d, class_depth, "coboundary", potential=f)

    @staticmethod
    def trivial(model: GroupModel, depth: int, class_depth: int) -> "CocycleKernel":
        return CocycleKernel(model, depth, class_depth, "trivial")

    @staticmethod
    def ratio(mu: ProductMeasure, depth: int, class_depth: int) -> "CocycleKernel":
        return CocycleKernel(RationalRatioGroup(), depth, class_depth, "ratio", mu=mu)

    @staticmethod
    def explicit(model: GroupModel, depth: int, class_depth: int,
                 table: Mapping[tuple[Word, Word], Element]) -> "CocycleKernel":
        return CocycleKernel(model, depth, class_depth, "explicit", table=dict(table))

    def admissible(self, a: Word, b: Word) -> bool:
        return (len(a) == len(b) == self.depth
                and a[self.class_depth:] == b[self.class_depth:])

    def value(self, a: Word, b: Word) -> Element:
        if not self.admissible(a, b):
            raise DepthMismatch(f"({a!r}, {b!r}) is not an admissible kernel pair")
        if self.kind == "coboundary":
            return self.model.mul(self.potential.at(a), self.model.inv(self.potential.at(b)))
        if self.kind == "trivial":
            return self.model.identity()
        if self.kind == "ratio":
            return self.mu.ratio(b, a)
        return self.table[(a, b)]

    def classes(self) -> Iterable[list[Word]]:
        for suffix in all_words(self.depth - self.class_depth):
            yield [p + suffix for p in all_words(self.class_depth)]

    def pair_count(self) -> int:
        return (1 << (self.depth - self.class_depth)) * (1 << self.class_depth) ** 2

    def materialize(self, guard: int = 1 << 16) -> dict:
        if self.pair_count() > guard:
            raise SizeGuard(f"kernel with {self.pair_count()} pairs exceeds guard {guard}")
        return {(a, b): self.value(a, b)
                for cls in self.classes() for a in cls for b in cls}

    def corrupted(self, pair: tuple[Word, Word], value: Element,
                  guard: int = 1 << 16) -> "CocycleKernel":
        """Copy of this kernel with one entry overridden (negative control)."""
        table = self.materialize(guard)
        if pair not in table:
            raise DepthMismatch(f"{pair} is not an admissible kernel pair")
        table[pair] = value
        return CocycleKernel.explicit(self.model, self.depth, self.class_depth, table)

    def to_csv(self, guard_depth: int = 12) -> str:
        if self.depth > guard_depth:
            raise SizeGuard(f"kernel export limited to depth {guard_depth}, have {self.depth}")
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["source", "target", "value"])
        for (a, b), v in sorted(self.materialize().items()):
            writer.writerow([a, b, self.model.format(v)])
        return buf.getvalue()


@dataclass(frozen=True)
class KernelCheck:
    ok: bool
    failure: Optional[dict] = None


def cocycle_check(kernel: CocycleKernel, triple_budget: int = 1 << 21) -> KernelCheck:
    """Exhaustively verify the three kernel laws; a violation is returned
    as a value, never raised."""
    class_size = 1 << kernel.class_depth
    triples = (1 << (kernel.depth - kernel.class_depth)) * class_size ** 3
    if triples > triple_budget:
        raise SizeGuard(f"{triples} kernel triples exceed budget {triple_budget}")
    one = kernel.model.identity()
    for cls in kernel.classes():
        values = {(a, b): kernel.value(a, b) for a in cls for b in cls}
        for a in cls:
            if values[(a, a)] != one:
                return KernelCheck(False, {"law": "reflexive", "at": (a,),
                                           "value": kernel.model.format(values[(a, a)])})
        for a in cls:
            for b in cls:
                if kernel.model.mul(values[(a, b)], values[(b, a)]) != one:
                    return KernelCheck(False, {"law": "antisymmetric", "at": (a, b)})
        for a in cls:
            for b in cls:
                ab = values[(a, b)]
                for c in cls:
                    if kernel.model.mul(ab, values[(b, c)]) != values[(a, c)]:
                        return KernelCheck(False, {"law": "chain", "at": (a, b, c)})
    return KernelCheck(True)


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InnerCheck:
    ok: bool
    level: int
    offending: CylinderSet
    undecided: CylinderSet


def trivial_on_overflow(f: StepFunction, action: GammaAction, level: int) -> InnerCheck:
    """Check that `f` is the identity wherever some generator moves a
    point out of its level-`level` class.

    Decides from the truncated overflow: identity on both the provable
    overflow and the undecided remainder passes; a non-identity value on
    the provable part fails; a non-identity value only on the undecided
    remainder raises :class:`DepthExhausted` (the truncation cannot
    certify either way).
    """
    over = orbit_overflow(action, level)
    one = f.model.identity()

    def dirty(region: CylinderSet) -> CylinderSet:
        depth = max(f.depth, region.max_depth)
        return CylinderSet.of(
            w for w in region.words_at(depth) if f.at(w) != one)

    bad_known = dirty(over.known)
    if not bad_known.is_empty():
        return InnerCheck(False, level, bad_known, over.unknown)
    bad_unknown = dirty(over.unknown.difference(over.known))
    if not bad_unknown.is_empty():
        raise DepthExhausted(
            f"cannot certify level-{level} innerness: non-identity values on the "
            f"undecided remainder {bad_unknown.words}")
    return InnerCheck(True, level, CylinderSet.empty(), over.unknown)


@dataclass(frozen=True)
class IncrementCheck:
    ok: bool
    violations: Mapping[str, CylinderSet]
    undecided: Mapping[str, CylinderSet]

    def violation_measure(self, mu: ProductMeasure) -> Fraction:
        total = CylinderSet.empty()
        for s in self.violations.values():
            total = total.union(s)
        return total.measure(mu)


def increments_within(
    f: StepFunction,
    action: GammaAction,
    allowed: Iterable[Element],
    depth: Optional[int] = None,
) -> IncrementCheck:
    """Check that every defined increment value lies in {identity} + allowed;
    truncation remainders are reported per generator, not judged."""
    keys = {f.model.key(f.model.identity())}
    keys.update(f.model.key(h) for h in allowed)
    violations: dict[str, CylinderSet] = {}
    undecided: dict[str, CylinderSet] = {}
    for label, g in action.generators:
        part = coboundary_increment(f, g, depth)
        bad = [w for w, v in part.table.items() if f.model.key(v) not in keys]
        if bad:
            violations[label] = CylinderSet.of(bad)
        if not part.undefined.is_empty():
            undecided[label] = part.undefined
    return IncrementCheck(not violations, violations, undecided)


@dataclass(frozen=True)
class DistResult:
    """Exact distance between two per-generator increment families.

    ``value`` integrates the truncated metric where both sides are
    defined; ``undefined_bound`` is the worst case of the undefined
    mass; ``truncation`` bounds the generators beyond the compared
    prefix (zero for fully enumerated finite families)."""

    value: Fraction
    undefined_bound: Fraction
    truncation: Fraction

    def upper(self) -> Fraction:
        return self.value + self.undefined_bound + self.truncation


def cocycle_distance(
    first: Sequence[PartialStepFunction],
    second: Sequence[PartialStepFunction],
    mu: ProductMeasure,
    infinite_tail: bool = False,
) -> DistResult:
    """Sum over generators j of 2^-j times the expected truncated metric
    between the j-th increments, computed exactly on the cylinder algebra."""
    if len(first) != len(second):
        raise DepthMismatch(
            f"families enumerate {len(first)} and {len(second)} generators")
    value = ZERO
    undefined_bound = ZERO
    weight = ONE
    for u1, u2 in zip(first, second):
        weight *= HALF
        if u1.model.name != u2.model.name:
            raise ValueError("increment families live over different group models")
        depth = max(u1.depth, u2.depth)
        integral = ZERO
        unknown = u1.undefined.union(u2.undefined)
        for w in all_words(depth):
            if unknown.covers(w):
                continue
            a, b = u1.at(w), u2.at(w)
            integral += min(ONE, u1.model.metric(a, b)) * mu.cylinder(w)
        value += weight * integral
        undefined_bound += weight * unknown.measure(mu)
    truncation = weight if infinite_tail else ZERO
    return DistResult(value, undefined_bound, truncation)


@dataclass(frozen=True)
class AgreementCheck:
    agreement: CylinderSet
    undecided: CylinderSet

    def measure(self, mu: ProductMeasure) -> Fraction:
        return self.agreement.measure(mu)


def increment_agreement(
    old: StepFunction,
    new: StepFunction,
    action: GammaAction,
    depth: Optional[int] = None,
) -> AgreementCheck:
    """The set where every generator's increment of `new` is defined and
    equals that of `old`; undecided truncation mass is excluded from the
    agreement set (conservative) and reported."""
    agreement = CylinderSet.full()
    undecided = CylinderSet.empty()
    for _, g in action.generators:
        u_old = coboundary_increment(old, g, depth)
        u_new = coboundary_increment(new, g, depth)
        e = max(u_old.depth, u_new.depth)
        same = [w for w in all_words(e)
                if u_old.at(w) is not None and u_old.at(w) == u_new.at(w)]
        agreement = agreement.intersection(CylinderSet.of(same))
        undecided = undecided.union(u_old.undefined).union(u_new.undefined)
    return AgreementCheck(agreement, undecided)


# ---------------------------------------------------------------------------
# Approximating sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApproximantRound:
    """One stage of the recursive approximation: the function, its
    tolerance, its innerness level, and the per-generator change sets
    against the previous stage."""

    f: StepFunction
    eps: Fraction
    level: int
    agreement_measure: Optional[Fraction]
    change_sets: Mapping[str, CylinderSet]


@dataclass(frozen=True)
class CocycleApproximant:
    action: GammaAction
    rounds: tuple[ApproximantRound, ...]

    def terminal(self) -> StepFunction:
        return self.rounds[-1].f

    def check_schedule(self) -> None:
        for a, b in zip(self.rounds, self.rounds[1:]):
            if not b.eps < a.eps / 2:
                raise PostconditionFailure(
                    "eps-halving", f"{b.eps} is not below {a.eps}/2")
            if not b.level > a.level:
                raise PostconditionFailure(
                    "level-growth", f"levels {a.level} -> {b.level} do not increase")

    def tail_bound(self, n: int) -> Fraction:
        """Sum of the tolerances of the rounds after the n-th (1-based)."""
        return sum((r.eps for r in self.rounds[n:]), ZERO)

    def stabilization_union(self, label: str, n: int) -> CylinderSet:
        """Union of the change sets of generator `label` after round n."""
        out = CylinderSet.empty()
        for r in self.rounds[n:]:
            out = out.union(r.change_sets.get(label, CylinderSet.empty()))
        return out
