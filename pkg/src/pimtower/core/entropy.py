"""Lap-count entropy and the (P1)/(P2) surrogate diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from ..reports import ConditionReport, Verdict
from .maps import PiecewiseMap
from .partition import DEFAULT_CELL_BUDGET, iter_levels

DEFAULT_ENTROPY_FLOOR = 0.05
NUMERIC_TOLERANCE = 1e-12


@dataclass(frozen=True)
class LapRecord:
    n: int
    lap_count: int
    quotient: float


def lap_entropy(fmap: PiecewiseMap, n_max: int, cell_budget: int = DEFAULT_CELL_BUDGET) -> list[LapRecord]:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    return [
        LapRecord(n, len(pieces), math.log(len(pieces)) / n)
        for n, pieces in iter_levels(fmap, n_max, cell_budget)
    ]


def boundary_orbit(fmap: PiecewiseMap, n_max: int) -> tuple[list[Fraction], bool]:
    """Forward orbit of ΔP for up to ``n_max`` steps.

    Points of ∂P continue through every one-sided branch touching them.
    Returns the orbit set and whether it closed up (no new points) in time.
    """
    orbit = set(fmap.boundary_images())
    frontier = set(orbit)
    for _ in range(n_max):
        nxt = set()
        for y in frontier:
            i = fmap.branch_index(y)
            if i is not None:
                nxt.add(fmap.branches[i].apply(y))
                continue
            for b in fmap.branches:
                if b.domain.lo == y or b.domain.hi == y:
                    nxt.add(b.apply(y))
        frontier = nxt - orbit
        orbit |= frontier
        if not frontier:
            return sorted(orbit), True
    return sorted(orbit), False


def check_P1_P2(
    fmap: PiecewiseMap,
    n_max: int,
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR,
    diameter_rate: Fraction = Fraction(1, 2),
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> tuple[ConditionReport, ConditionReport]:
    """Finite-depth surrogates for (P1) and (P2).

    (P1) passes when the ΔP orbit closes into a finite set (zero entropy) and the
    lap-entropy quotient at ``n_max`` exceeds ``entropy_floor``.  (P2) passes at
    depth when the maximal cell diameter never grows and ends below
    ``|I| * diameter_rate ** (n_max // 2)``.
    """
    laps = []
    diameters = []
    for n, pieces in iter_levels(fmap, n_max, cell_budget):
        laps.append(LapRecord(n, len(pieces), math.log(len(pieces)) / n))
        diameters.append(max(p.cell.length for p in pieces))

    orbit, closed = boundary_orbit(fmap, n_max)
    h_est = laps[-1].quotient
    info = {"delta_orbit": orbit, "orbit_closed": closed, "h_lap": h_est, "entropy_floor": entropy_floor}
    data = [r.quotient for r in laps]
    if closed and h_est > entropy_floor:
        p1 = ConditionReport("P1", Verdict.PASS, n_max, numeric_data=data, info=info)
    else:
        reason = "entropy-floor-not-met" if closed else "boundary-orbit-open"
        p1 = ConditionReport("P1", Verdict.INCONCLUSIVE, n_max, numeric_data=data, info={**info, "reason": reason})

    threshold = fmap.ambient.length * diameter_rate ** (n_max // 2)
    monotone = all(b <= a for a, b in zip(diameters, diameters[1:]))
    p2_info = {"max_diameter": diameters[-1], "threshold": threshold}
    if monotone and diameters[-1] <= threshold:
        p2 = ConditionReport("P2", Verdict.PASS_AT_DEPTH, n_max, numeric_data=diameters, info=p2_info)
    else:
        p2 = ConditionReport("P2", Verdict.INCONCLUSIVE, n_max, numeric_data=diameters, info=p2_info)

    if not fmap.exact:
        return p1.downgraded(NUMERIC_TOLERANCE), p2.downgraded(NUMERIC_TOLERANCE)
    return p1, p2
