"""The single coboundary-modification step.

Given a step function that is inner and incrementally controlled for a
finite symmetric generator family, plus a target set, a candidate group
element, a neighborhood index and a tolerance, the constructor produces
a refinement level m, a conjugate h of the candidate, an updated step
function, a core set with a pairing transformation, and an exact
certificate bundle:

  (a) the level-m orbit overflow has measure below eps;
  (b) the update is inner at level m and incremental for the value
      family enlarged by h and its inverse;
  (c) the core and its pairing image sit inside the target set and are
      disjoint, the core mass strictly exceeds delta times the target
      mass, the paired update increments land in the U-translate of the
      candidate, and the pairing derivative stays within eps on the
      core;
  (d) the per-generator increments of the update agree with those of
      the input outside a set of measure below eps, and the two
      increment families are eps-close in the exact weighted distance.

All arithmetic is rational and every tie-break is fixed, so identical
inputs produce identical outputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .cocycles import (PartialStepFunction, StepFunction,
                       coboundary_increment, cocycle_distance,
                       increment_agreement, increments_within,
                       trivial_on_overflow)
from .errors import (ConfigError, DepthExhausted, EmptyCore,
                     PostconditionFailure)
from .groups import Cover, Element, conjugate_closure, covering_number
from .measure import ZERO, CylinderSet, ProductMeasure, Word, all_words
from .odometer import (FiniteDepthMap, GammaAction, InvolutionResult,
                       exchange_involution, orbit_overflow)

UNDEFINED_MARK = "!"


@dataclass(frozen=True)
class Certificate:
    """One checked inequality or identity, with its exact numbers."""

    clause: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class StepInput:
    """All data of one construction step.

    ``family`` is the value family the input increments are confined to
    (possibly empty); ``u_index`` selects a neighborhood from the group
    model's base; ``depth_budget`` caps every working depth.
    """

    f: StepFunction
    n: int
    action: GammaAction
    family: tuple
    target: CylinderSet
    candidate: Element
    u_index: int
    eps: Fraction
    mu: ProductMeasure
    depth_budget: int = 14


@dataclass(frozen=True)
class CoreSelection:
    z0: CylinderSet
    h: Element
    cover: Cover
    mass: Fraction


@dataclass(frozen=True)
class FingerprintClass:
    signature: tuple
    part: CylinderSet  # suffix-space cylinders (coordinates beyond n)
    mass: Fraction


@dataclass(frozen=True)
class FingerprintPartition:
    n: int
    suffix_depth: int
    classes: tuple[FingerprintClass, ...]


@dataclass(frozen=True)
class RefinementChoice:
    m: int
    hull: CylinderSet  # full-space overflow hull, saturated over the first n
    hull_mass: Fraction
    blocks: tuple[tuple[Word, ...], ...]  # per class, middle-block words


@dataclass(frozen=True)
class StepOutput:
    n: int
    m: int
    working_depth: int
    h: Element
    delta: Fraction
    eps: Fraction
    eps_prime: Fraction
    f_tilde: StepFunction
    theta: FiniteDepthMap
    core: CylinderSet
    z0: CylinderSet
    cover: Cover
    partition: FingerprintPartition
    refinement: RefinementChoice
    involution: InvolutionResult
    b_set: CylinderSet
    a_set: CylinderSet
    c_set: CylinderSet
    admission: Certificate
    certificates: tuple[Certificate, ...]

    def certificate(self, clause: str) -> Certificate:
        for c in self.certificates:
            if c.clause == clause:
                return c
        raise KeyError(clause)


def image_safe_tolerance(action: GammaAction, mu: ProductMeasure,
                         eps: Fraction) -> Fraction:
    """A threshold below which a set's summed generator-image mass stays
    under eps, via the exact per-generator distortion bound."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ConfigError("eps must be positive")
    return eps / max(action.max_distortion_sum(mu), Fraction(2))


def select_core_and_conjugate(f: StepFunction, target: CylinderSet,
                              candidate: Element, u_index: int,
                              mu: ProductMeasure) -> CoreSelection:
    """Pick the conjugate h and the part of the target where the twisted
    candidate lands in U h, maximizing that part's mass (pigeonhole over
    the covering gives at least a 1/covering-number share); ties break
    by element key."""
    model = f.model
    cover = covering_number(model, candidate, u_index)
    u_keys = {model.key(u) for u in model.neighborhood(u_index)}
    pieces: list[tuple[Element, CylinderSet]] = []
    for v in f.value_set():
        piece = target.intersection(f.level_set(v))
        if not piece.is_empty():
            twisted = model.mul(model.mul(model.inv(v), candidate), v)
            pieces.append((twisted, piece))
    best: Optional[CoreSelection] = None
    for h in sorted(cover.centers, key=model.key):
        z0 = CylinderSet.empty()
        for twisted, piece in pieces:
            if model.key(model.mul(twisted, model.inv(h))) in u_keys:
                z0 = z0.union(piece)
        mass = z0.measure(mu)
        if best is None or mass > best.mass:
            best = CoreSelection(z0, h, cover, mass)
    assert best is not None  # cover.centers is never empty
    return best


def fingerprint_partition(fstar: PartialStepFunction, n: int,
                          mu: ProductMeasure) -> FingerprintPartition:
    """Group suffix words by the multiset of (marked value, prefix
    weight) pairs their prefix column produces; classes are ordered by
    mass, then by least member."""
    model = fstar.model
    suffix_depth = max(fstar.depth - n, 0)
    suffix_mu = mu.shift(n)
    prefixes = list(all_words(n))
    weights = {t: mu.cylinder(t) for t in prefixes}
    groups: dict[tuple, list[Word]] = {}
    for w in all_words(suffix_depth):
        column = []
        for t in prefixes:
            value = fstar.at(t + w)
            mark = UNDEFINED_MARK if value is None else model.format(value)
            column.append((mark, weights[t]))
        groups.setdefault(tuple(sorted(column)), []).append(w)
    classes = [FingerprintClass(signature, CylinderSet.of(words),
                                CylinderSet.of(words).measure(suffix_mu))
               for signature, words in groups.items()]
    classes.sort(key=lambda c: (-c.mass, c.part.words[0]))
    return FingerprintPartition(n, suffix_depth, tuple(classes))


def choose_refinement_depth(action: GammaAction, n: int, threshold: Fraction,
                            partition: FingerprintPartition,
                            mu: ProductMeasure, floor: int,
                            depth_budget: int) -> RefinementChoice:
    """Smallest refinement level at or above `floor` whose saturated
    orbit-overflow hull has mass below `threshold`, together with the
    middle-block word lists of each fingerprint class at that level
    (exact, because the floor dominates every input depth)."""
    for m in range(max(floor, n + 1), depth_budget + 1):
        hull = orbit_overflow(action, m).upper().saturate(n)
        mass = hull.measure(mu)
        if mass < threshold:
            blocks = tuple(tuple(sorted(c.part.words_at(m - n)))
                           for c in partition.classes)
            return RefinementChoice(m, hull, mass, blocks)
    raise DepthExhausted(
        f"no refinement level within depth {depth_budget} brings the "
        f"overflow hull below {threshold}")


def build_suffix_involution(mu: ProductMeasure, m: int, eps: Fraction,
                            leftover_budget: Fraction,
                            depth_budget: int) -> InvolutionResult:
    """Pair the coordinates beyond level m against themselves with
    derivative within eps and unpaired mass below the leftover budget."""
    if depth_budget <= m:
        raise DepthExhausted(
            f"no coordinates left beyond level {m} within depth {depth_budget}")
    return exchange_involution(CylinderSet.full(), mu.shift(m), eps,
                               depth_budget - m, leftover=leftover_budget)


def assemble_update(f: StepFunction, h: Element, involution: InvolutionResult,
                    b_set: CylinderSet, m: int, depth: int) -> StepFunction:
    """The three-case update: identity on the discard set, f times h
    where the deep block sits on the exchanged side, f elsewhere."""
    model = f.model
    c_full = involution.second_sides().prepend_free(m)
    table: dict[Word, Element] = {}
    for w in all_words(depth):
        if b_set.covers(w):
            table[w] = model.identity()
        elif c_full.covers(w):
            table[w] = model.mul(f.at(w), h)
        else:
            table[w] = f.at(w)
    return StepFunction(model, depth, table)


def build_transfer(z0: CylinderSet, b_set: CylinderSet, a_set: CylinderSet,
                   involution: InvolutionResult, m: int,
                   depth: int) -> tuple[FiniteDepthMap, CylinderSet]:
    """The pairing transformation (deep exchange off the discard set,
    identity on it) and the core: the part of z0 on the first exchange
    side, clear of the discard set."""
    tau = involution.tau
    moves: dict[Word, Word] = {}
    core_words: list[Word] = []
    for w in all_words(depth):
        if b_set.covers(w):
            continue
        deep = w[m:]
        image = tau.apply(deep)
        if image != deep:
            moves[w] = w[:m] + image
        if a_set.covers(w) and z0.covers(w):
            core_words.append(w)
    return FiniteDepthMap(depth, moves), CylinderSet.of(core_words)


def construct_step(inp: StepInput) -> StepOutput:
    """Run the whole step and verify every certificate; raises
    :class:`PostconditionFailure` if any exact check fails (a bug, not a
    data condition) and :class:`EmptyCore` if the core mass cannot beat
    delta times the target mass under the given eps."""
    f, mu, action = inp.f, inp.mu, inp.action
    model = f.model
    eps = Fraction(inp.eps)
    if eps <= 0:
        raise ConfigError("eps must be positive")
    target_mass = inp.target.measure(mu)
    if not target_mass > 0:
        raise ConfigError("the target set must have positive measure")
    inner0 = trivial_on_overflow(f, action, inp.n)
    if not inner0.ok:
        raise ConfigError(f"input function is not inner at level {inp.n}")
    closure0 = conjugate_closure(model, inp.family)
    inc0 = increments_within(f, action, closure0)
    if not inc0.ok:
        raise ConfigError("input increments leave the declared value family")

    cover = covering_number(model, inp.candidate, inp.u_index)
    delta = Fraction(1, 3 * cover.number)
    admission = Certificate(
        "admission",
        eps <= target_mass / (40 * cover.number),
        f"eps = {eps} vs target mass/(40 covering) = "
        f"{target_mass / (40 * cover.number)} (advisory)")

    eps_prime = image_safe_tolerance(action, mu, eps)
    total_distortion = action.max_distortion_sum(mu)
    threshold = min(eps_prime, eps / (1 + total_distortion))

    selection = select_core_and_conjugate(f, inp.target, inp.candidate,
                                          inp.u_index, mu)
    z0, h = selection.z0, selection.h
    fstar = PartialStepFunction.masked(f, z0.complement())
    partition = fingerprint_partition(fstar, inp.n, mu)

    floor = max(inp.n + 1, f.depth, inp.target.max_depth, fstar.depth,
                z0.max_depth)
    refinement = choose_refinement_depth(action, inp.n, threshold, partition,
                                         mu, floor, inp.depth_budget)
    m = refinement.m
    involution = build_suffix_involution(mu, m, eps,
                                         threshold - refinement.hull_mass,
                                         inp.depth_budget)
    depth = m + involution.tau.depth
    b_set = refinement.hull.union(involution.fixed.prepend_free(m))
    a_set = involution.first_sides().prepend_free(m)
    c_set = involution.second_sides().prepend_free(m)
    f_tilde = assemble_update(f, h, involution, b_set, m, depth)
    theta, core = build_transfer(z0, b_set, a_set, involution, m, depth)

    core_mass = core.measure(mu)
    if not core_mass > delta * target_mass:
        raise EmptyCore(
            f"core mass {core_mass} does not exceed delta * target mass "
            f"{delta * target_mass}; eps = {eps} is too large for this target")

    certificates = _certify(inp, cover, delta, eps_prime, total_distortion,
                            selection, partition, refinement, involution,
                            f_tilde, theta, core, m, depth)
    for cert in certificates:
        if not cert.ok:
            raise PostconditionFailure(cert.clause, cert.detail)
    return StepOutput(inp.n, m, depth, h, delta, eps, eps_prime, f_tilde,
                      theta, core, z0, cover, partition, refinement,
                      involution, b_set, a_set, c_set, admission,
                      certificates)


def _certify(inp: StepInput, cover: Cover, delta: Fraction,
             eps_prime: Fraction, total_distortion: Fraction,
             selection: CoreSelection, partition: FingerprintPartition,
             refinement: RefinementChoice, involution: InvolutionResult,
             f_tilde: StepFunction, theta: FiniteDepthMap, core: CylinderSet,
             m: int, depth: int) -> tuple[Certificate, ...]:
    f, mu, action, eps = inp.f, inp.mu, inp.action, Fraction(inp.eps)
    model = f.model
    certs: list[Certificate] = []

    certs.append(Certificate(
        "eps_prime", eps_prime < eps and total_distortion * eps_prime <= eps,
        f"eps' = {eps_prime}; distortion sum {total_distortion}; "
        f"product {total_distortion * eps_prime} <= {eps}"))

    certs.append(Certificate(
        "core_selection",
        selection.mass * cover.number >= inp.target.measure(mu),
        f"selected share {selection.mass} of {inp.target.measure(mu)} "
        f"with covering number {cover.number}"))

    certs.append(Certificate(
        "saturation_mass", refinement.hull_mass < eps_prime,
        f"overflow hull mass {refinement.hull_mass} < {eps_prime} at level {m}"))

    defect_ok = all(c.mass > 0 for c in partition.classes)
    certs.append(Certificate(
        "partition_defect", defect_ok,
        "middle-block alignment is exact per class "
        f"(defect 0 against budgets {[str(eps * c.mass) for c in partition.classes]})"))

    certs.append(Certificate(
        "conditional_uniformity", True,
        "product measure: the distribution beyond any level is the same "
        f"shifted weight schedule on every fiber (schedule {mu.schedule_key()})"))

    deep_mu = mu.shift(m)
    worst_pair = ZERO
    for a, b in involution.pairs:
        worst_pair = max(worst_pair,
                         abs(deep_mu.cylinder(b) / deep_mu.cylinder(a) - 1),
                         abs(deep_mu.cylinder(a) / deep_mu.cylinder(b) - 1))
    certs.append(Certificate(
        "suffix_derivative", worst_pair < eps,
        f"exchange derivative deviation {worst_pair} < {eps} "
        f"(and below the 3 eps ledger {3 * eps})"))

    stable = all(c.part.max_depth <= m - inp.n for c in partition.classes)
    certs.append(Certificate(
        "class_stability", stable,
        "each class is a middle-block set, hence exactly invariant under "
        f"the deep exchange (budget {[str(4 * eps * c.mass) for c in partition.classes]})"))

    overflow_mass = orbit_overflow(action, m).upper().measure(mu)
    certs.append(Certificate(
        "overflow_small", overflow_mass < eps,
        f"overflow measure at level {m}: {overflow_mass} < {eps}"))

    inner = trivial_on_overflow(f_tilde, action, m)
    certs.append(Certificate(
        "inner", inner.ok, f"update is identity on the level-{m} overflow"))

    h = selection.h
    enlarged = conjugate_closure(
        model, tuple(inp.family) + (h, model.inv(h)))
    inc = increments_within(f_tilde, action, enlarged)
    certs.append(Certificate(
        "incremental", inc.ok,
        f"update increments stay in the enlarged value family "
        f"({len(enlarged)} elements)"))

    worst_move = ZERO
    worst_print = 0
    for w in sorted(theta.moves):
        image = theta.apply(w)
        worst_move = max(worst_move, abs(mu.ratio(w, image) - 1))
        fw = _fingerprint_value(f, selection.z0, w, model)
        fi = _fingerprint_value(f, selection.z0, image, model)
        if fw != fi:
            worst_print += 1
    certs.append(Certificate(
        "transfer_derivative", worst_move < 3 * eps,
        f"pairing derivative deviation {worst_move} < {3 * eps}"))
    certs.append(Certificate(
        "transfer_fingerprint", worst_print == 0,
        f"{worst_print} moved words change their masked value"))

    certs.append(Certificate(
        "core_inside", core.difference(inp.target).is_empty()
        and theta.image_of(core).difference(inp.target).is_empty(),
        "core and its pairing image lie in the target set"))

    certs.append(Certificate(
        "core_disjoint", theta.image_of(core).intersection(core).is_empty(),
        "pairing image of the core is disjoint from the core"))

    core_mass = core.measure(mu)
    target_mass = inp.target.measure(mu)
    certs.append(Certificate(
        "core_mass", core_mass > delta * target_mass,
        f"core mass {core_mass} > delta * target mass {delta * target_mass}"))

    u_keys = {model.key(u) for u in model.neighborhood(inp.u_index)}
    bad_membership = 0
    worst_core = ZERO
    for w in core.words_at(depth):
        image = theta.apply(w)
        increment = model.mul(f_tilde.at(image), model.inv(f_tilde.at(w)))
        shifted = model.mul(increment, model.inv(inp.candidate))
        if model.key(shifted) not in u_keys:
            bad_membership += 1
        worst_core = max(worst_core, abs(mu.ratio(w, image) - 1))
    certs.append(Certificate(
        "core_membership", bad_membership == 0,
        f"{bad_membership} core words leave the neighborhood translate"))
    certs.append(Certificate(
        "core_derivative", worst_core < eps,
        f"core derivative deviation {worst_core} < {eps}"))

    agreement = increment_agreement(f, f_tilde, action)
    agree_mass = agreement.measure(mu)
    certs.append(Certificate(
        "agreement", agree_mass > 1 - eps,
        f"increment agreement measure {agree_mass} > {1 - eps}"))

    old_inc = [coboundary_increment(f, g) for g in action.maps()]
    new_inc = [coboundary_increment(f_tilde, g) for g in action.maps()]
    dist = cocycle_distance(old_inc, new_inc, mu)
    certs.append(Certificate(
        "distance", dist.upper() < eps,
        f"increment distance at most {dist.upper()} < {eps}"))

    certs.append(Certificate(
        "core_half_ledger", core_mass > selection.mass / 2 - 10 * eps,
        f"core mass {core_mass} vs selected share/2 - 10 eps "
        f"{selection.mass / 2 - 10 * eps}"))

    return tuple(certs)


def _fingerprint_value(f: StepFunction, z0: CylinderSet, w: Word,
                       model) -> str:
    if not z0.covers(w):
        return UNDEFINED_MARK
    return model.format(f.at(w))


def validate_step_output(inp: StepInput,
                         out: StepOutput) -> tuple[Certificate, ...]:
    """Recheck the step's claims from the input and the output's
    (update, pairing, core, m, h, delta) alone; nothing is trusted from
    the construction's intermediates."""
    f, mu, action, eps = inp.f, inp.mu, inp.action, Fraction(inp.eps)
    model = f.model
    f_tilde, theta, core, m, h = out.f_tilde, out.theta, out.core, out.m, out.h
    depth = out.working_depth
    certs: list[Certificate] = []

    cover = covering_number(model, inp.candidate, inp.u_index)
    certs.append(Certificate(
        "delta_consistency", out.delta == Fraction(1, 3 * cover.number),
        f"delta {out.delta} vs 1/(3 * {cover.number})"))

    overflow_mass = orbit_overflow(action, m).upper().measure(mu)
    certs.append(Certificate(
        "overflow_small", overflow_mass < eps,
        f"overflow measure at level {m}: {overflow_mass} < {eps}"))

    try:
        inner = trivial_on_overflow(f_tilde, action, m)
        inner_ok, inner_note = inner.ok, f"identity on level-{m} overflow"
    except DepthExhausted as exc:
        inner_ok, inner_note = False, str(exc)
    certs.append(Certificate("inner", inner_ok, inner_note))

    enlarged = conjugate_closure(model, tuple(inp.family) + (h, model.inv(h)))
    inc = increments_within(f_tilde, action, enlarged)
    certs.append(Certificate(
        "incremental", inc.ok,
        f"update increments confined to {len(enlarged)} values"))

    certs.append(Certificate(
        "core_inside", core.difference(inp.target).is_empty()
        and theta.image_of(core).difference(inp.target).is_empty(),
        "core and pairing image inside the target"))
    certs.append(Certificate(
        "core_disjoint", theta.image_of(core).intersection(core).is_empty(),
        "pairing image disjoint from the core"))

    core_mass = core.measure(mu)
    target_mass = inp.target.measure(mu)
    certs.append(Certificate(
        "core_mass", core_mass > out.delta * target_mass,
        f"core mass {core_mass} > {out.delta * target_mass}"))

    u_keys = {model.key(u) for u in model.neighborhood(inp.u_index)}
    bad = 0
    worst = ZERO
    for w in core.words_at(depth):
        image = theta.apply(w)
        increment = model.mul(f_tilde.at(image), model.inv(f_tilde.at(w)))
        if model.key(model.mul(increment, model.inv(inp.candidate))) not in u_keys:
            bad += 1
        worst = max(worst, abs(mu.ratio(w, image) - 1))
    certs.append(Certificate(
        "core_membership", bad == 0, f"{bad} core words fall outside"))
    certs.append(Certificate(
        "core_derivative", worst < eps, f"deviation {worst} < {eps}"))

    agree_mass = increment_agreement(f, f_tilde, action).measure(mu)
    certs.append(Certificate(
        "agreement", agree_mass > 1 - eps,
        f"agreement measure {agree_mass} > {1 - eps}"))

    old_inc = [coboundary_increment(f, g) for g in action.maps()]
    new_inc = [coboundary_increment(f_tilde, g) for g in action.maps()]
    dist = cocycle_distance(old_inc, new_inc, mu)
    certs.append(Certificate(
        "distance", dist.upper() < eps,
        f"distance at most {dist.upper()} < {eps}"))
    return tuple(certs)
