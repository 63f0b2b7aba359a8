import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import canonical, full_branch_nice_sets
from pimtower.core.intervals import Interval
from pimtower.core.maps import affine_map
from pimtower.inducing import build_canonical_scheme, certify_nice, scheme_from_elements
from pimtower.reports import Verdict
from pimtower.thermo import (
    AffinePotential,
    ConstantPotential,
    LogLinear,
    NegLogDerivative,
    check_H2,
    cylinder,
    enumerate_cylinders,
    holder_fit,
    induced_potential,
    recc_summability,
    variation_Vn,
)

F = Fraction


def element(scheme, lo, hi):
    return next(e for e in scheme.elements if e.interval.closure_key == (lo, hi))


def test_length_one_cylinder(d_scheme, d):
    c = cylinder(d_scheme, d, [0])
    assert c.interval.closure_key == (F(1, 3), F(5, 12)) and c.diameter == F(1, 12)


def test_length_two_cylinder(d_scheme, d):
    c = cylinder(d_scheme, d, [0, 0])
    assert c.interval.closure_key == (F(1, 3), F(17, 48)) and c.diameter == F(1, 48)
    assert c.render() == "cyl 0,0 1/3..17/48 diam=1/48"


def test_empty_cylinder(d):
    # J0=(1/8,1/4) maps onto (1/4,1/2), which misses both elements
    elems = [(Interval(F(1, 8), F(1, 4)), 1), (Interval(0, F(1, 8)), 2)]
    s = scheme_from_elements(d, Interval(0, F(1, 2)), elems)
    assert cylinder(s, d, [0, 1]).empty and cylinder(s, d, [0, 0]).empty
    assert cylinder(s, d, [0, 1]).render() == "cyl 0,1 empty diam=0/1"
    assert cylinder(s, d, [1, 0]).interval.closure_key == (F(1, 32), F(1, 16))
    rep = check_H2(s, d, 2)
    assert rep.verdict is Verdict.FAIL and rep.witness["cylinder"] == "empty"


def test_H2_canonical(d_scheme, d):
    rep = check_H2(d_scheme, d, 4)
    assert rep.verdict is Verdict.PASS_AT_DEPTH
    assert rep.numeric_data == [F(1, 12), F(1, 48), F(1, 192), F(1, 768)]
    assert all(v <= F(1, 3) / 4**n for n, v in enumerate(rep.numeric_data, start=1))


def test_H2_single_isometric_element():
    ident = affine_map([0, 1], [1], [0])
    s = scheme_from_elements(ident, Interval(0, 1), [(Interval(0, 1), 1)])
    rep = check_H2(s, ident, 4)
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.numeric_data == [1, 1, 1, 1]


def test_H2_depth_one_is_the_elements(d_scheme, d):
    levels, _ = enumerate_cylinders(d_scheme, d, 1)
    assert [c.interval for c in levels[1]] == [e.interval for e in d_scheme.elements]


def test_induced_constant(d_scheme, d):
    J = element(d_scheme, F(13, 24), F(7, 12))
    assert induced_potential(d_scheme, d, ConstantPotential(2), J, F(4, 7)) == 6


def test_induced_neglog(d_scheme, d):
    J = element(d_scheme, F(13, 24), F(7, 12))
    v = induced_potential(d_scheme, d, NegLogDerivative(F(3, 2)), J, F(4, 7))
    assert v == LogLinear(F(0), ((2, F(-9, 2)),))
    assert str(v) == "-9/2*log(2)"
    assert math.isclose(float(v), -4.5 * math.log(2))


def test_induced_identity_orbit_sum(d_scheme, d):
    J = element(d_scheme, F(13, 24), F(7, 12))
    assert induced_potential(d_scheme, d, AffinePotential.identity(d), J, F(4, 7)) == 1


def test_induced_potential_rejects_outside_point(d_scheme, d):
    J = element(d_scheme, F(13, 24), F(7, 12))
    with pytest.raises(ValueError):
        induced_potential(d_scheme, d, ConstantPotential(1), J, F(1, 2))


@pytest.mark.parametrize("phi", [ConstantPotential(F(5, 3)), NegLogDerivative(1), NegLogDerivative(F(1, 2))])
def test_variation_vanishes(d_scheme, d, phi):
    assert [variation_Vn(d_scheme, d, phi, n).value for n in range(1, 5)] == [0, 0, 0, 0]


def test_variation_identity_decays(d_scheme, d):
    vs = [variation_Vn(d_scheme, d, AffinePotential.identity(d), n) for n in range(1, 5)]
    assert [v.value for v in vs] == [F(7, 24), F(7, 96), F(7, 384), F(7, 1536)]
    fit = holder_fit(vs)
    assert fit.fitted_gamma <= 0.25 + 0.05 and fit.verdict == "consistent"
    assert all(float(v.value) <= fit.fitted_A * fit.fitted_gamma**v.n * (1 + 1e-9) for v in vs)


@pytest.mark.parametrize("N", [3, 5, 8])
def test_first_sum_neglog(d, N):
    s = canonical(d, F(1, 3), F(2, 3), N)
    sum1, sum2 = recc_summability(s, d, NegLogDerivative(1), F(1, 10), 0.0, N)
    assert sum1.partial == 1 - F(1, 2 ** (N - 1))
    assert sum1.tail == F(1, 2 ** (N - 1))
    assert sum1.verdict is Verdict.PASS
    assert sum1.render() == f"sum1 N={N} partial={sum1.partial} tail={sum1.tail} verdict=pass"
    # the second sum is reported numerically: 2 n 2^-n e^(n/10) summed over n = 2..N
    want = sum(2 * n * 2.0**-n * math.exp(n / 10) for n in range(2, N + 1))
    assert math.isclose(float(sum2.partial), want, rel_tol=1e-12)


def test_first_sum_zero_potential_grows(d):
    s = canonical(d, F(1, 3), F(2, 3), 6)
    sum1, _ = recc_summability(s, d, ConstantPotential(0), F(1, 10), 0.0, 6)
    assert sum1.partial == 2 * (6 - 1)
    assert sum1.verdict is Verdict.FAIL


def test_first_sum_half_power_inconclusive(d):
    s = canonical(d, F(1, 3), F(2, 3), 6)
    sum1, _ = recc_summability(s, d, NegLogDerivative(F(1, 2)), F(1, 10), 0.0, 6)
    assert sum1.verdict is Verdict.INCONCLUSIVE


def test_loglinear_arithmetic():
    a = LogLinear.log_of(F(12))
    assert a == LogLinear(F(0), ((2, F(2)), (3, F(1))))
    assert (a + LogLinear(F(1), ())).scaled(2).exp_exact() is None
    assert LogLinear(F(0), ((2, F(-3)),)).exp_exact() == F(1, 8)


@st.composite
def small_schemes(draw):
    fmap, W = draw(full_branch_nice_sets())
    return fmap, build_canonical_scheme(fmap, certify_nice(fmap, W, 8), draw(st.integers(2, 3)))


@settings(max_examples=100, deadline=None)
@given(small_schemes())
def test_cylinder_nesting(case):
    fmap, s = case
    if not s.elements:
        return
    levels, _ = enumerate_cylinders(s, fmap, 3, word_budget=4000)
    by_word = {c.word: c for cyls in levels.values() for c in cyls}
    for word, c in by_word.items():
        if len(word) == 1 or c.empty:
            continue
        parent = by_word.get(word[:-1])
        if parent is None:
            continue
        assert not parent.empty
        assert parent.interval.closure_contains(c.interval)
        assert c.diameter <= parent.diameter
        assert s.elements[word[0]].interval.closure_contains(c.interval)
