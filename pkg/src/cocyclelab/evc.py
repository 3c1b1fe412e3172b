"""Essential-value certificates and the skew-product connectivity oracle.

A witness for the quantitative essential-value condition consists of a
part B of the base set and a finite-depth transformation moving B inside
the base with kernel values in the target set and derivative close to 1.
Witnesses are always re-validated from scratch before being returned, and
carry exact slacks plus a robustness reserve: how much disagreement mass
a perturbed kernel may introduce before the witness (with a trimmed B)
stops satisfying the condition.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .cocycles import CocycleKernel
from .errors import PostconditionFailure, SearchExhausted, SizeGuard
from .groups import Cover, Element, GroupModel, covering_number
from .measure import ONE, ZERO, CylinderSet, ProductMeasure, Word, all_words
from .odometer import FiniteDepthMap


def target_set(model: GroupModel, g: Element, u_index: int) -> tuple:
    """The translate U g of the u_index-th identity neighborhood, as an
    explicit element tuple sorted by canonical key."""
    out = {model.key(model.mul(u, g)): model.mul(u, g)
           for u in model.neighborhood(u_index)}
    return tuple(out[k] for k in sorted(out))


def delta_for(model: GroupModel, g: Element, u_index: int) -> tuple[Fraction, Cover]:
    """The tolerance 1/(3 * covering number) attached to (g, U)."""
    cover = covering_number(model, g, u_index)
    return Fraction(1, 3 * cover.number), cover


@dataclass(frozen=True)
class WitnessValidation:
    ok: bool
    clause: Optional[str]
    detail: Optional[str]
    measure_slack: Fraction
    derivative_slack: Fraction
    membership_margin: Fraction


@dataclass(frozen=True)
class EvcWitness:
    """A validated witness: the part, the transformation, and the slacks
    by which each inequality holds.

    membership_margin is the separation of the witnessed kernel values
    from the complement of the target set; all shipped group models are
    uniformly discrete with gap 1, so it is 1 on success.
    """

    base: CylinderSet
    part: CylinderSet
    theta: FiniteDepthMap
    delta: Fraction
    target: tuple
    measure_slack: Fraction
    derivative_slack: Fraction
    membership_margin: Fraction

    @property
    def reserve(self) -> Fraction:
        """Disagreement mass a perturbed kernel may introduce while the
        witness still verifies: trimming B by the bad set and its theta
        image costs twice the mass, and half the slack is kept spare."""
        return self.measure_slack / 4


def validate_witness(
    kernel: CocycleKernel,
    base: CylinderSet,
    target: Sequence[Element],
    delta: Fraction,
    mu: ProductMeasure,
    part: CylinderSet,
    theta: FiniteDepthMap,
) -> WitnessValidation:
    """Re-check every clause of the condition from scratch, trusting only
    (part, theta) and the kernel itself."""
    model = kernel.model
    delta = Fraction(delta)

    def failed(clause: str, detail: str,
               measure_slack: Fraction = ZERO,
               derivative_slack: Fraction = ZERO) -> WitnessValidation:
        return WitnessValidation(False, clause, detail, measure_slack,
                                 derivative_slack, ZERO)

    if not part.difference(base).is_empty():
        return failed("part-inside", "B is not contained in A")
    image = theta.image_of(part)
    if not image.difference(base).is_empty():
        return failed("image-inside", "theta(B) is not contained in A")
    mass = part.measure(mu)
    need = delta * base.measure(mu)
    if not mass > need:
        return failed("mass", f"mu(B) = {mass} is not above {need}")
    level = max(kernel.depth, part.max_depth, theta.depth)
    worst_derivative = ZERO
    target_keys = {model.key(t) for t in target}
    for w in part.words_at(level):
        img = theta.apply(w)
        if img[kernel.class_depth:] != w[kernel.class_depth:]:
            return failed("class", f"theta throws {w} out of its kernel class",
                          mass - need)
        value = kernel.value(img[: kernel.depth], w[: kernel.depth])
        if model.key(value) not in target_keys:
            return failed("membership",
                          f"kernel value {model.format(value)} at {w} "
                          "is outside the target set", mass - need)
        worst_derivative = max(worst_derivative, abs(mu.ratio(w, img) - 1))
    if not worst_derivative < delta:
        return failed("derivative",
                      f"derivative deviation {worst_derivative} is not below "
                      f"{delta}", mass - need, delta - worst_derivative)
    return WitnessValidation(True, None, None, mass - need,
                             delta - worst_derivative, ONE)


def check_evc(
    kernel: CocycleKernel,
    base: CylinderSet,
    target: Sequence[Element],
    delta: Fraction,
    mu: ProductMeasure,
    search_depth: int = 14,
) -> EvcWitness:
    """Find and validate a witness, or raise :class:`SearchExhausted`
    with the best margins reached.

    The search assembles involutions from pairings within kernel classes
    of the base set, matching words whose kernel value lands in the
    target (grouped by potential value for coboundary kernels), largest
    measure first, and deepens the word level when the mass threshold is
    out of reach at the current one.
    """
    delta = Fraction(delta)
    model = kernel.model
    target = tuple(target)
    target_keys = {model.key(t) for t in target}
    if base.is_empty():
        raise SearchExhausted("the base set is empty", best={})

    if model.key(model.identity()) in target_keys and delta < 1:
        theta = FiniteDepthMap.identity(kernel.depth)
        check = validate_witness(kernel, base, target, delta, mu, base, theta)
        if check.ok:
            return EvcWitness(base, base, theta, delta, target,
                              check.measure_slack, check.derivative_slack,
                              check.membership_margin)

    need = delta * base.measure(mu)
    best_mass = ZERO
    start = max(kernel.depth, base.max_depth)
    if start > search_depth:
        raise SearchExhausted(
            f"kernel depth {start} already exceeds search depth {search_depth}",
            best={"required_mass": str(need)})
    for level in range(start, search_depth + 1):
        pairs, b_words, mass = _pair_search(kernel, base, target, target_keys,
                                            delta, mu, level, need)
        best_mass = max(best_mass, mass)
        if mass > need:
            theta = FiniteDepthMap.from_pairs(level, pairs)
            part = CylinderSet.of(b_words)
            check = validate_witness(kernel, base, target, delta, mu, part, theta)
            if not check.ok:
                raise PostconditionFailure(
                    check.clause or "unknown",
                    f"search produced an invalid witness: {check.detail}")
            return EvcWitness(base, part, theta, delta, target,
                              check.measure_slack, check.derivative_slack,
                              check.membership_margin)
    raise SearchExhausted(
        f"no witness with mass above {need} within depth {search_depth}",
        best={"required_mass": str(need), "achieved_mass": str(best_mass)})


def _pair_search(
    kernel: CocycleKernel,
    base: CylinderSet,
    target: tuple,
    target_keys: set,
    delta: Fraction,
    mu: ProductMeasure,
    level: int,
    need: Fraction,
) -> tuple[list, list, Fraction]:
    """Greedy disjoint pairing at one word level.  A pair (x, y) admits x
    into B when the kernel value of (y, x) is a target and the x-side
    derivative is within delta; both sides may qualify.  Returns (pairs,
    B-words, B-mass); stops early once the mass threshold is crossed."""
    by_class: dict[Word, list[Word]] = {}
    for w in base.words_at(level):
        by_class.setdefault(w[kernel.class_depth:], []).append(w)
    pairs: list[tuple[Word, Word]] = []
    b_words: list[Word] = []
    mass = ZERO
    for cls_key in sorted(by_class):
        members = sorted(by_class[cls_key], key=lambda w: (-mu.cylinder(w), w))
        if kernel.kind == "coboundary":
            found = _match_by_value(kernel, members, target, target_keys, delta, mu)
        else:
            found = _match_generic(kernel, members, target_keys, delta, mu)
        for x, y, x_ok, y_ok in found:
            pairs.append((x, y))
            if x_ok:
                b_words.append(x)
                mass += mu.cylinder(x)
            if y_ok:
                b_words.append(y)
                mass += mu.cylinder(y)
        if mass > need:
            break
    return pairs, b_words, mass


def _match_generic(kernel, members, target_keys, delta, mu):
    """Quadratic scan; fine for the small classes of non-coboundary kernels."""
    model = kernel.model
    used: set[Word] = set()
    out = []
    for i, x in enumerate(members):
        if x in used:
            continue
        for y in members[i + 1:]:
            if y in used:
                continue
            forward = kernel.value(y[: kernel.depth], x[: kernel.depth])
            x_ok = (model.key(forward) in target_keys
                    and abs(mu.ratio(x, y) - 1) < delta)
            y_ok = (model.key(model.inv(forward)) in target_keys
                    and abs(mu.ratio(y, x) - 1) < delta)
            if x_ok or y_ok:
                used.update((x, y))
                out.append((x, y, x_ok, y_ok))
                break
    return out


def _match_by_value(kernel, members, target, target_keys, delta, mu):
    """Pairing for coboundary kernels via potential-value lookup: the
    value of (y, x) lands in the target iff f(y) lies in target * f(x)."""
    model = kernel.model
    pot = {w: kernel.potential.at(w[: kernel.depth]) for w in members}
    groups: dict = {}
    for w in members:
        groups.setdefault(model.key(pot[w]), []).append(w)
    used: set[Word] = set()
    out = []
    for x in members:
        if x in used:
            continue
        for t in target:
            for y in groups.get(model.key(model.mul(t, pot[x])), ()):
                if y in used or y == x:
                    continue
                if not abs(mu.ratio(x, y) - 1) < delta:
                    continue
                back = model.mul(pot[x], model.inv(pot[y]))
                y_ok = (model.key(back) in target_keys
                        and abs(mu.ratio(y, x) - 1) < delta)
                used.update((x, y))
                out.append((x, y, True, y_ok))
                break
            if x in used:
                break
    return out


# ---------------------------------------------------------------------------
# Essential-value reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvcEntry:
    base: CylinderSet
    u_index: int
    delta: Fraction
    ok: bool
    witness: Optional[EvcWitness]
    failure: Optional[str]


@dataclass(frozen=True)
class EssentialValueReport:
    candidate: Element
    entries: tuple[EvcEntry, ...]
    verdict: str  # "certified" | "inconclusive"

    def failing(self) -> list[EvcEntry]:
        return [e for e in self.entries if not e.ok]


def essential_value_certificate(
    kernel: CocycleKernel,
    g: Element,
    mu: ProductMeasure,
    base_sets: Sequence[CylinderSet],
    u_indices: Sequence[int],
    search_depth: int = 14,
) -> EssentialValueReport:
    """Check the quantitative condition for every scheduled (base, U)
    pair with the tolerance 1/(3 * covering number); the verdict is
    certified only if all pairs verify."""
    model = kernel.model
    entries: list[EvcEntry] = []
    for k in u_indices:
        delta, _ = delta_for(model, g, k)
        target = target_set(model, g, k)
        for base in base_sets:
            if base.is_empty():
                continue
            try:
                witness = check_evc(kernel, base, target, delta, mu, search_depth)
                entries.append(EvcEntry(base, k, delta, True, witness, None))
            except SearchExhausted as exc:
                entries.append(EvcEntry(base, k, delta, False, None, str(exc)))
    verdict = "certified" if all(e.ok for e in entries) else "inconclusive"
    return EssentialValueReport(g, tuple(entries), verdict)


# ---------------------------------------------------------------------------
# Skew-product connectivity
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.count = n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]
        self.count -= 1


@dataclass(frozen=True)
class ConnectivityReport:
    depth: int
    group_order: int
    components: int
    representatives: tuple


def skew_connectivity(
    kernel: CocycleKernel,
    depth: Optional[int] = None,
    budget: int = 1 << 18,
    exhaustive: bool = False,
) -> ConnectivityReport:
    """Exact component count of the product graph on (depth words x group).

    An edge joins (w, g) to (w', v g) for every value v the kernel
    attains between extensions of w' and w; when the vertex depth equals
    the kernel depth the value is unique per pair, while a shallower
    vertex depth projects the deeper structure onto coarser words, which
    is where a run's increments can fuse the group fibers into one
    component.  `exhaustive` walks every word pair instead of a spanning
    chain; both give the same components (the relation is transitive)
    and small instances use it as an oracle.
    """
    model = kernel.model
    elements = model.elements()
    if elements is None:
        raise SizeGuard("connectivity needs a finite group model")
    elements = sorted(elements, key=model.key)
    index = {model.key(e): i for i, e in enumerate(elements)}
    level = kernel.depth if depth is None else depth
    if not 0 < level <= kernel.depth:
        raise SizeGuard(f"vertex depth must lie in 1..{kernel.depth}")
    n_words = 1 << level
    if n_words * len(elements) > budget:
        raise SizeGuard(
            f"{n_words * len(elements)} skew vertices exceed budget {budget}")
    tails = list(all_words(kernel.depth - level))
    word_index = {w: i for i, w in enumerate(all_words(level))}
    uf = _UnionFind(n_words * len(elements))

    def vertex(w: Word, gi: int) -> int:
        return word_index[w] * len(elements) + gi

    # trivial kernels take the identity between any same-class words, so
    # no extension enumeration is needed for them either
    fast = (kernel.kind == "trivial"
            or (kernel.kind == "coboundary"
                and kernel.class_depth == kernel.depth))
    if not fast and len(tails) ** 2 * n_words > budget:
        raise SizeGuard("extension pairs exceed budget; deepen the vertices")

    if kernel.class_depth < level:
        groups: dict[Word, list[Word]] = {}
        for w in word_index:
            groups.setdefault(w[kernel.class_depth:], []).append(w)
        classes = [sorted(g) for _, g in sorted(groups.items())]
    else:
        classes = [sorted(word_index)]

    def values_between(first: Word, second: Word) -> set:
        if kernel.kind == "trivial":
            return {model.identity()}
        if fast:
            firsts = {model.key(kernel.potential.at(first + t)): kernel.potential.at(first + t)
                      for t in tails}
            seconds = {model.key(kernel.potential.at(second + t)): kernel.potential.at(second + t)
                       for t in tails}
            return {model.mul(a, model.inv(b))
                    for a in firsts.values() for b in seconds.values()}
        out = set()
        for a in tails:
            for b in tails:
                if kernel.admissible(first + a, second + b):
                    out.add(kernel.value(first + a, second + b))
        return out

    for cls in classes:
        if exhaustive:
            edges = [(a, b) for i, a in enumerate(cls) for b in cls[i + 1:]]
        else:
            edges = list(zip(cls, cls[1:]))
        for second, first in edges:
            for value in values_between(first, second):
                for gi, g in enumerate(elements):
                    moved = index[model.key(model.mul(value, g))]
                    uf.union(vertex(second, gi), vertex(first, moved))

    reps: dict[int, tuple] = {}
    for w in sorted(word_index):
        for gi, g in enumerate(elements):
            root = uf.find(vertex(w, gi))
            reps.setdefault(root, (w, model.format(g)))
    return ConnectivityReport(level, len(elements), uf.count,
                              tuple(sorted(reps.values())))
