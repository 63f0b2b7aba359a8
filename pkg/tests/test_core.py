import math
from fractions import Fraction

import pytest
from hypothesis import given, settings

from conftest import expanding_maps
from oracles import DOUBLING, MARKOV, lap_counts
from pimtower.core import (
    Interval,
    check_P1_P2,
    dump_map,
    eval_map,
    inverse_branch,
    lap_entropy,
    parse_map,
    refine_partition,
)
from pimtower.core.maps import affine_map, logistic_map
from pimtower.errors import BoundaryHit, ExactModeRequired, ParseError
from pimtower.reports import Verdict

F = Fraction


def identity_map():
    return affine_map([0, 1], [1], [0])


def test_eval_map_orbit(d):
    assert eval_map(d, F(1, 3), 2) == F(1, 3)
    assert eval_map(d, F(2, 7), 0) == F(2, 7)


def test_eval_map_boundary_hit(d):
    with pytest.raises(BoundaryHit) as info:
        eval_map(d, F(1, 4), 1)
    assert info.value.step == 1


def test_inverse_branch(d):
    V = Interval(F(1, 3), F(2, 3))
    assert inverse_branch(d, 0, V) == Interval(F(1, 6), F(1, 3))
    assert inverse_branch(d, 1, V) == Interval(F(2, 3), F(5, 6))
    assert inverse_branch(d, 0, None) is None


def test_refine_doubling(d):
    p2 = refine_partition(d, 2)
    assert [c.closure_key for c in p2.cells] == [(F(k, 4), F(k + 1, 4)) for k in range(4)]
    assert p2.max_diameter == F(1, 4)
    p1 = refine_partition(d, 1)
    assert [c.closure_key for c in p1.cells] == [(0, F(1, 2)), (F(1, 2), 1)]
    assert p1.max_diameter == F(1, 2)


def test_refine_markov(m):
    p2 = refine_partition(m, 2)
    assert [c.closure_key for c in p2.cells] == [(0, F(1, 4)), (F(1, 4), F(1, 2)), (F(1, 2), 1)]
    assert p2.max_diameter == F(1, 2)


def test_lap_entropy_doubling(d):
    recs = lap_entropy(d, 5)
    assert [r.lap_count for r in recs] == [2**n for n in range(1, 6)]
    assert all(math.isclose(r.quotient, math.log(2)) for r in recs)


def test_lap_entropy_markov_matches_brute_force(m):
    recs = lap_entropy(m, 8)
    assert [r.lap_count for r in recs] == lap_counts(MARKOV, 8)
    golden = (1 + 5**0.5) / 2
    assert abs(recs[-1].quotient - math.log(golden)) < 0.1


def test_lap_entropy_identity():
    recs = lap_entropy(identity_map(), 4)
    assert [r.lap_count for r in recs] == [1, 1, 1, 1]
    assert all(r.quotient == 0 for r in recs)


def test_P1_P2_doubling(d):
    p1, p2 = check_P1_P2(d, 10)
    assert p1.verdict is Verdict.PASS
    assert p1.info["orbit_closed"]
    assert p1.info["delta_orbit"] == [0, 1]
    assert p2.verdict is Verdict.PASS_AT_DEPTH
    assert p2.numeric_data == [F(1, 2**n) for n in range(1, 11)]


def test_P1_P2_markov(m):
    p1, p2 = check_P1_P2(m, 10)
    assert p1.verdict is Verdict.PASS
    assert p2.verdict is Verdict.PASS_AT_DEPTH
    assert all(dm <= F(1, 2 ** (n // 2)) for n, dm in enumerate(p2.numeric_data, start=1))


def test_P1_identity_floor_not_met():
    p1, _ = check_P1_P2(identity_map(), 6)
    assert p1.verdict is Verdict.INCONCLUSIVE
    assert p1.info["reason"] == "entropy-floor-not-met"


def test_numeric_mode_is_downgraded():
    p1, p2 = check_P1_P2(logistic_map(), 4)
    assert p1.verdict in (Verdict.INCONCLUSIVE_NUMERIC, Verdict.INCONCLUSIVE)
    assert p2.verdict in (Verdict.INCONCLUSIVE_NUMERIC, Verdict.INCONCLUSIVE)
    with pytest.raises(ExactModeRequired):
        dump_map(logistic_map())


def test_map_round_trip(d, m):
    for fmap in (d, m):
        assert parse_map(dump_map(fmap)) == fmap


@pytest.mark.parametrize("text", [
    "ambient = 0..1\nbranch = 0 1/2 2\n",
    "ambient = 0..1\nbranch = 0 1/2 2 0.5\n",
    "ambient = 0..1\nbogus = 1\n",
    "branch = 0 1 2 0\n",
])
def test_parse_map_rejects(text):
    with pytest.raises(ParseError):
        parse_map(text)


@settings(max_examples=100, deadline=None)
@given(expanding_maps())
def test_refinement_nesting(fmap):
    parts = [refine_partition(fmap, n) for n in range(1, 4)]
    for coarse, fine in zip(parts, parts[1:]):
        for cell in fine.cells:
            assert any(c.closure_contains(cell) for c in coarse.cells)
        assert sum(c.length for c in fine.cells) == 1
        assert fine.max_diameter <= coarse.max_diameter


@settings(max_examples=100, deadline=None)
@given(expanding_maps())
def test_lap_submultiplicative(fmap):
    laps = [r.lap_count for r in lap_entropy(fmap, 6)]
    for a in range(1, 6):
        for b in range(1, 7 - a):
            assert laps[a + b - 1] <= laps[a - 1] * laps[b - 1]


@settings(max_examples=50, deadline=None)
@given(expanding_maps())
def test_lap_counts_match_brute_force(fmap):
    branches = [(b.domain.lo, b.domain.hi, b.slope, b.offset) for b in fmap.branches]
    assert [r.lap_count for r in lap_entropy(fmap, 5)] == lap_counts(branches, 5)


def test_doubling_oracle_table_agrees(d):
    assert [r.lap_count for r in lap_entropy(d, 6)] == lap_counts(DOUBLING, 6)
