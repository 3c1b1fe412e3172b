"""Exact product-measure arithmetic and cylinder set algebra.

Oracle policy: expected masses are recomputed here by direct weight
products, never copied from the implementation.
"""
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocyclelab.measure import (ONE, ZERO, CylinderSet, ProductMeasure,
                                all_words)

UNIFORM = ProductMeasure.uniform()
BIASED = ProductMeasure.iid(Fraction(1, 3))
PERIOD2 = ProductMeasure.from_schedule(
    (), [(Fraction(1, 2), Fraction(1, 2)), (Fraction(1, 3), Fraction(2, 3))])
SCHEDULES = [UNIFORM, BIASED, PERIOD2]


def naive_mass(mu: ProductMeasure, w: str) -> Fraction:
    out = ONE
    for i, bit in enumerate(w):
        out *= mu.weight(i + 1, bit)
    return out


def random_words(count: int, max_len: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        k = rng.randint(0, max_len)
        out.append("".join(rng.choice("01") for _ in range(k)))
    return out


class TestExactArithmetic:
    """The acceptance-criterion batch: 1000 random words, three weight
    schedules, additivity and chain rule with zero tolerance."""

    WORDS = random_words(1000, 12, seed=20240817)

    @pytest.mark.parametrize("mu", SCHEDULES, ids=["uniform", "iid13", "period2"])
    def test_refinement_additivity_exact(self, mu):
        for w in self.WORDS:
            assert mu.cylinder(w) == mu.cylinder(w + "0") + mu.cylinder(w + "1")
            assert mu.cylinder(w) == naive_mass(mu, w)

    @pytest.mark.parametrize("mu", SCHEDULES, ids=["uniform", "iid13", "period2"])
    def test_ratio_chain_rule_exact(self, mu):
        rng = random.Random(99)
        for w in self.WORDS:
            if not w:
                continue
            y = "".join(rng.choice("01") for _ in w)
            z = "".join(rng.choice("01") for _ in w)
            assert mu.ratio(w, y) * mu.ratio(y, z) == mu.ratio(w, z)
            assert mu.ratio(w, y) == mu.cylinder(y) / mu.cylinder(w)
            assert mu.ratio(w, w) == ONE


def test_total_mass_is_one():
    for mu in SCHEDULES:
        for depth in range(5):
            assert sum(mu.cylinder(w) for w in all_words(depth)) == ONE


def test_biased_weights():
    assert BIASED.cylinder("0") == Fraction(1, 3)
    assert BIASED.cylinder("10") == Fraction(2, 3) * Fraction(1, 3)
    assert PERIOD2.cylinder("11") == Fraction(1, 2) * Fraction(2, 3)


def test_shift_drops_coordinates():
    nu = PERIOD2.shift(1)
    # coordinate i of the shifted measure is coordinate i+1 of the original
    assert nu.cylinder("0") == Fraction(1, 3)
    assert nu.cylinder("00") == Fraction(1, 3) * Fraction(1, 2)


def test_schedule_key_distinguishes():
    assert UNIFORM.schedule_key() != BIASED.schedule_key()
    assert PERIOD2.schedule_key() == ProductMeasure.from_schedule(
        (), [(Fraction(1, 2), Fraction(1, 2)),
             (Fraction(1, 3), Fraction(2, 3))]).schedule_key()


words_strategy = st.lists(st.text(alphabet="01", max_size=6), max_size=8)


@st.composite
def cylinder_sets(draw):
    return CylinderSet.of(draw(words_strategy))


@settings(max_examples=150, deadline=None)
@given(cylinder_sets(), cylinder_sets())
def test_de_morgan(a, b):
    lhs = a.union(b).complement()
    rhs = a.complement().intersection(b.complement())
    assert lhs.words == rhs.words


@settings(max_examples=150, deadline=None)
@given(cylinder_sets(), cylinder_sets())
def test_measure_inclusion_exclusion(a, b):
    for mu in SCHEDULES:
        assert (a.union(b).measure(mu) + a.intersection(b).measure(mu)
                == a.measure(mu) + b.measure(mu))


@settings(max_examples=150, deadline=None)
@given(cylinder_sets())
def test_complement_involution(a):
    assert a.complement().complement().words == a.words
    for mu in SCHEDULES:
        assert a.measure(mu) + a.complement().measure(mu) == ONE


@settings(max_examples=100, deadline=None)
@given(cylinder_sets(), st.integers(min_value=0, max_value=4))
def test_saturate_contains_and_is_free(a, n):
    sat = a.saturate(n)
    assert a.difference(sat).is_empty()
    # saturation is determined by the suffix beyond n
    for w in sat.words:
        if len(w) <= n:
            continue
        for other in all_words(n):
            assert sat.covers(other + w[n:])


@settings(max_examples=100, deadline=None)
@given(cylinder_sets(), st.integers(min_value=1, max_value=3))
def test_prepend_free_measure(a, n):
    lifted = a.prepend_free(n)
    assert lifted.measure(UNIFORM) == a.measure(UNIFORM)
    shifted = UNIFORM.shift(n)
    assert lifted.measure(UNIFORM) == a.measure(shifted)


def test_words_at_partitions():
    s = CylinderSet.of(["0", "10"])
    assert s.words_at(2) == ["00", "01", "10"]
    assert s.words_at(3) == ["000", "001", "010", "011", "100", "101"]


def test_canonical_merge():
    # both children present collapses to the parent
    assert CylinderSet.of(["00", "01"]).words == ("0",)
    assert CylinderSet.of(["0", "1"]).words == ("",)
    assert CylinderSet.full().is_full()
    assert CylinderSet.empty().is_empty()


def test_csv_round_trip():
    s = CylinderSet.of(["0", "110"])
    text = s.to_csv(BIASED)
    assert CylinderSet.from_csv(text).words == s.words
