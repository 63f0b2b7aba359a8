from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import canonical, full_branch_nice_sets
from pimtower.core.intervals import Interval
from pimtower.core.maps import affine_map
from pimtower.errors import NoStationaryDensity, NotMarkov, PreconditionUnverified, ZeroBaseMass
from pimtower.inducing import build_canonical_scheme, certify_nice, dyadic_counterexample_scheme
from pimtower.measure import (
    KAC_TOLERANCE,
    TV_TOLERANCE,
    RationalMeasure,
    atomic_uniqueness,
    check_invariance,
    dump_measure,
    induce,
    kac_roundtrip_check,
    lift_measure,
    lift_to_tower,
    markov_invariant_density,
    measure_of_set,
    parse_measure,
    pushforward,
)
from pimtower.reports import Verdict
from pimtower.tower import build_tower

F = Fraction
V = Interval(F(1, 3), F(2, 3))
PERIOD3 = RationalMeasure.uniform_atoms([F(1, 7), F(2, 7), F(4, 7)])


def pieces(mu):
    return [(iv.closure_key, h) for iv, h in mu.density_pieces]


def test_invariant_density_doubling(d):
    assert pieces(markov_invariant_density(d)) == [((0, 1), 1)]


def test_invariant_density_markov(m):
    assert pieces(markov_invariant_density(m)) == [((0, F(1, 2)), F(4, 3)), ((F(1, 2), 1), F(2, 3))]


def test_invariant_density_degenerate():
    with pytest.raises(NoStationaryDensity):
        markov_invariant_density(affine_map([0, 1], [1], [0]))


def test_invariant_density_needs_markov_map():
    tent = affine_map([0, F(1, 2), 1], [F(3, 2), F(-3, 2)], [0, F(3, 2)])
    with pytest.raises(NotMarkov):
        markov_invariant_density(tent)


def test_measure_of_set(m):
    assert measure_of_set(RationalMeasure.lebesgue(Interval(0, 1)), [V]) == F(1, 3)
    assert measure_of_set(markov_invariant_density(m), [Interval(0, F(1, 2))]) == F(2, 3)
    on_edge = RationalMeasure.uniform_atoms([F(1, 3), F(2, 3)])
    assert measure_of_set(on_edge, [V]) == 0


def test_pushforward_keeps_invariant_measures(d, m):
    for fmap in (d, m):
        mu = markov_invariant_density(fmap)
        assert pushforward(fmap, mu) == mu
    assert pushforward(d, PERIOD3) == PERIOD3


def test_invariance_report(d):
    assert check_invariance(d, PERIOD3).ok
    bad = check_invariance(d, RationalMeasure.dirac(F(1, 6)))
    assert bad.verdict is Verdict.FAIL
    assert bad.witness == {"atom": F(1, 6), "mu": 1, "pushforward": 0}


def test_lift_counterexample_fixed_point(d):
    s = dyadic_counterexample_scheme(d, 3)
    res = lift_measure(s, RationalMeasure.dirac(F(1, 3)), d)
    assert res.Q == 2
    assert res.measure.atoms == ((F(1, 3), F(1, 2)), (F(2, 3), F(1, 2)))


def test_lift_period_three(d):
    s = canonical(d, F(1, 3), F(2, 3), 3)
    res = lift_measure(s, RationalMeasure.dirac(F(4, 7)), d)
    assert res.Q == 3 and not res.truncated
    assert res.measure == PERIOD3


def test_lift_lebesgue_deep(d):
    s = canonical(d, F(1, 3), F(2, 3), 12)
    nu = RationalMeasure.lebesgue(V)
    res = lift_measure(s, nu, d)
    assert res.measure.total_mass == 1
    assert res.uncaptured == s.mass_deficit / V.length
    # Q partial sum: each level n >= 2 holds two elements of length (1/3) 2^-n
    want = sum(n * 2 * F(1, 3) / 2**n for n in range(2, 13)) / V.length
    assert res.Q == want


def test_lift_rejects_mass_outside_base(d_scheme, d):
    with pytest.raises(ValueError):
        lift_measure(d_scheme, RationalMeasure.dirac(F(1, 7)), d)


def test_tower_lift_of_markov_density(m):
    t = build_tower(m, 5)
    lift = lift_to_tower(m, t, markov_invariant_density(m))
    assert lift.element_measure(0).total_mass + lift.element_measure(1).total_mass == 1
    projected = lift.element_measure(0) + lift.element_measure(1)
    assert projected == markov_invariant_density(m)


def test_induce_lebesgue(d):
    s = canonical(d, F(1, 3), F(2, 3), 6)
    ind = induce(s, build_tower(d, 5), d, RationalMeasure.lebesgue(Interval(0, 1)))
    assert ind.nu == RationalMeasure.lebesgue(V)
    assert ind.kac_target == 3


def test_induce_period_three(d):
    s = canonical(d, F(1, 3), F(2, 3), 6)
    ind = induce(s, build_tower(d, 5), d, PERIOD3)
    assert ind.nu == RationalMeasure.dirac(F(4, 7))


def test_induce_zero_base_mass(d):
    s = canonical(d, F(1, 3), F(2, 3), 6)
    mu = RationalMeasure.uniform_atoms([F(1, 3), F(2, 3)])
    with pytest.raises(ZeroBaseMass):
        induce(s, build_tower(d, 5), d, mu)


def test_induce_rejects_non_invariant(d):
    s = canonical(d, F(1, 3), F(2, 3), 6)
    with pytest.raises(PreconditionUnverified) as info:
        induce(s, build_tower(d, 5), d, RationalMeasure.dirac(F(1, 6)))
    assert info.value.report.condition == "Invariance"


def test_kac_atomic_exact(d):
    s = canonical(d, F(1, 3), F(2, 3), 12)
    rep = kac_roundtrip_check(s, build_tower(d, 5), d, PERIOD3)
    assert rep.verdict is Verdict.PASS
    assert rep.info["Q"] == 3 and rep.info["tv"] == 0


def test_kac_lebesgue(d):
    s = canonical(d, F(1, 3), F(2, 3), 12)
    rep = kac_roundtrip_check(s, build_tower(d, 5), d, RationalMeasure.lebesgue(Interval(0, 1)))
    assert rep.verdict is Verdict.PASS_AT_DEPTH
    assert 3 - KAC_TOLERANCE <= rep.info["Q"] <= 3
    assert rep.info["tv"] <= TV_TOLERANCE
    assert rep.info["deficit"] == F(1, 3) / 2**11


def test_kac_shallow_truncation_is_inconclusive(d):
    s = canonical(d, F(1, 3), F(2, 3), 4)
    rep = kac_roundtrip_check(s, build_tower(d, 5), d, RationalMeasure.lebesgue(Interval(0, 1)))
    assert rep.verdict is Verdict.INCONCLUSIVE and rep.info["reason"] == "truncation"


def test_kac_markov_map_converges(m):
    s = canonical(m, F(1, 6), F(1, 3), 10)
    rep = kac_roundtrip_check(s, build_tower(m, 5), m, markov_invariant_density(m))
    assert rep.verdict is not Verdict.FAIL
    assert rep.info["target"] == F(9, 2)
    assert rep.info["Q"] <= F(9, 2)


def test_atomic_uniqueness(d):
    s = canonical(d, F(1, 3), F(2, 3), 6)
    cycles, unique = atomic_uniqueness(s, d, PERIOD3)
    assert cycles == [(F(4, 7),)] and unique


def test_measure_round_trip(m):
    for mu in (markov_invariant_density(m), PERIOD3, RationalMeasure.lebesgue(V)):
        assert parse_measure(dump_measure(mu)) == mu


@st.composite
def full_branch_scheme(draw):
    fmap, W = draw(full_branch_nice_sets())
    N = draw(st.integers(2, 4))
    return fmap, build_canonical_scheme(fmap, certify_nice(fmap, W, 8), N)


@settings(max_examples=100, deadline=None)
@given(full_branch_scheme())
def test_lift_normalized(case):
    fmap, s = case
    if not s.elements:
        return
    nu = RationalMeasure.lebesgue(s.base)
    res = lift_measure(s, nu, fmap)
    assert res.measure.total_mass == 1
    assert res.Q >= 1 - res.uncaptured
    assert res.Q_lower >= res.Q
    assert all(h > 0 for _, h in res.measure.density_pieces)
    # every element contributes a copy of nu restricted to it at time 0
    for e in s.elements:
        assert measure_of_set(res.measure, [e.interval]) >= nu.mass([e.interval]) / res.Q
