"""Exact invariant measures, the lift operator, and inducing through the tower.

Measures are piecewise-constant densities plus finitely many atoms with
rational data.  This class is closed under restriction and affine push
forward, which is all the lift operator needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import sympy

from .core.intervals import Interval, format_rational, merge_closures, parse_rational, to_rational
from .core.maps import Branch, PiecewiseMap
from .core.partition import iter_levels, refine_partition
from .errors import (
    BoundaryHit,
    NoStationaryDensity,
    NotMarkov,
    ParseError,
    PreconditionUnverified,
    ZeroBaseMass,
)
from .inducing import InducingScheme, check_conditions, reached_elements
from .reports import ConditionReport, Verdict
from .tower import Tower, successor, tower_step

DEFAULT_TEST_DEPTH = 6
KAC_TOLERANCE = Fraction(1, 2**10)
TV_TOLERANCE = Fraction(1, 2**9)
MAX_MARKOV_POINTS = 4096


@dataclass(frozen=True)
class RationalMeasure:
    """Density pieces (open, sorted, disjoint, merged) plus atoms, all exact."""

    density_pieces: tuple[tuple[Interval, Fraction], ...] = ()
    atoms: tuple[tuple[Fraction, Fraction], ...] = ()
    total_mass: Fraction = Fraction(0)

    @classmethod
    def build(
        cls,
        pieces: Iterable[tuple[Interval, Fraction]] = (),
        atoms: Iterable[tuple[Fraction, Fraction]] = (),
    ) -> "RationalMeasure":
        """Canonical form: overlapping pieces add up, equal neighbours merge, zeros vanish."""
        events: dict[Fraction, Fraction] = {}
        for iv, h in pieces:
            h = to_rational(h)
            if h < 0:
                raise ValueError("densities must be nonnegative")
            events[iv.lo] = events.get(iv.lo, Fraction(0)) + h
            events[iv.hi] = events.get(iv.hi, Fraction(0)) - h
        merged: list[list] = []
        level = Fraction(0)
        points = sorted(events)
        for a, b in zip(points, points[1:]):
            level += events[a]
            if level == 0:
                continue
            if merged and merged[-1][1] == a and merged[-1][2] == level:
                merged[-1][1] = b
            else:
                merged.append([a, b, level])
        dens = tuple((Interval(a, b), h) for a, b, h in merged)
        mass: dict[Fraction, Fraction] = {}
        for x, w in atoms:
            x, w = to_rational(x), to_rational(w)
            if w < 0:
                raise ValueError("atom masses must be nonnegative")
            mass[x] = mass.get(x, Fraction(0)) + w
        at = tuple(sorted((x, w) for x, w in mass.items() if w != 0))
        total = sum((iv.length * h for iv, h in dens), Fraction(0)) + sum((w for _, w in at), Fraction(0))
        return cls(dens, at, total)

    @classmethod
    def lebesgue(cls, iv: Interval, normalized: bool = True) -> "RationalMeasure":
        return cls.build([(iv.interior(), 1 / iv.length if normalized else Fraction(1))])

    @classmethod
    def dirac(cls, x) -> "RationalMeasure":
        return cls.build(atoms=[(to_rational(x), Fraction(1))])

    @classmethod
    def uniform_atoms(cls, points: Sequence) -> "RationalMeasure":
        pts = [to_rational(p) for p in points]
        return cls.build(atoms=[(p, Fraction(1, len(pts))) for p in pts])

    @property
    def is_atomic(self) -> bool:
        return not self.density_pieces

    def density_at(self, x: Fraction) -> Fraction:
        for iv, h in self.density_pieces:
            if iv.contains_in_interior(x):
                return h
        return Fraction(0)

    def atom_at(self, x: Fraction) -> Fraction:
        return dict(self.atoms).get(x, Fraction(0))

    def mass(self, sets: Sequence[Interval]) -> Fraction:
        return measure_of_set(self, sets)

    def scaled(self, c: Fraction) -> "RationalMeasure":
        return RationalMeasure.build(
            [(iv, h * c) for iv, h in self.density_pieces], [(x, w * c) for x, w in self.atoms]
        )

    def normalized(self) -> "RationalMeasure":
        if self.total_mass == 0:
            raise ZeroDivisionError("cannot normalize the zero measure")
        return self.scaled(1 / self.total_mass)

    def restricted(self, iv: Interval) -> "RationalMeasure":
        pieces = []
        for p, h in self.density_pieces:
            sub = p.intersect(iv)
            if sub is not None:
                pieces.append((sub, h))
        return RationalMeasure.build(pieces, [(x, w) for x, w in self.atoms if iv.contains(x)])

    def __add__(self, other: "RationalMeasure") -> "RationalMeasure":
        return RationalMeasure.build(
            self.density_pieces + other.density_pieces, self.atoms + other.atoms
        )

    def push_branch(self, b: Branch) -> "RationalMeasure":
        """Push the part of the measure on ``b.domain`` forward through ``b``."""
        part = self.restricted(b.domain)
        return RationalMeasure.build(
            [(b.image(iv), h / abs(b.slope)) for iv, h in part.density_pieces],
            [(b.apply(x), w) for x, w in part.atoms],
        )


def measure_of_set(measure: RationalMeasure, sets: Sequence[Interval]) -> Fraction:
    """Exact mass of a union of intervals; atoms count according to endpoint openness."""
    total = Fraction(0)
    for lo, hi in merge_closures(sets):
        for iv, h in measure.density_pieces:
            a, b = max(lo, iv.lo), min(hi, iv.hi)
            if a < b:
                total += (b - a) * h
    for x, w in measure.atoms:
        if any(s.contains(x) for s in sets):
            total += w
    return total


def pushforward(fmap: PiecewiseMap, measure: RationalMeasure) -> RationalMeasure:
    for x, _ in measure.atoms:
        if fmap.branch_index(x) is None:
            raise BoundaryHit(0, x)
    out = RationalMeasure()
    for b in fmap.branches:
        out = out + measure.push_branch(b)
    return out


def tv_on_partition(a: RationalMeasure, b: RationalMeasure, cells: Sequence[Interval]) -> tuple[Fraction, Optional[Interval]]:
    """Total variation of the two measures seen through the cells and the points between them.

    Returns the distance and the cell with the largest discrepancy.
    """
    diff = Fraction(0)
    worst, worst_cell = Fraction(-1), None
    for c in cells:
        d = abs(measure_of_set(a, [c]) - measure_of_set(b, [c]))
        diff += d
        if d > worst:
            worst, worst_cell = d, c
    outside = {x for x, _ in a.atoms + b.atoms if not any(c.contains(x) for c in cells)}
    for x in outside:
        diff += abs(a.atom_at(x) - b.atom_at(x))
    return diff / 2, worst_cell


def check_invariance(fmap: PiecewiseMap, mu: RationalMeasure, depth: int = DEFAULT_TEST_DEPTH) -> ConditionReport:
    """Compare f_*μ with μ on the cells of the depth-``depth`` partition and on every atom."""
    try:
        pushed = pushforward(fmap, mu)
    except BoundaryHit as exc:
        return ConditionReport("Invariance", Verdict.FAIL, depth, witness={"atom": exc.point, "reason": "on-boundary"})
    for x in sorted({x for x, _ in mu.atoms + pushed.atoms}):
        if mu.atom_at(x) != pushed.atom_at(x):
            return ConditionReport(
                "Invariance", Verdict.FAIL, depth,
                witness={"atom": x, "mu": mu.atom_at(x), "pushforward": pushed.atom_at(x)},
            )
    for cell in refine_partition(fmap, depth).cells:
        a, b = measure_of_set(mu, [cell]), measure_of_set(pushed, [cell])
        if a != b:
            return ConditionReport(
                "Invariance", Verdict.FAIL, depth, witness={"cell": cell, "mu": a, "pushforward": b}
            )
    return ConditionReport("Invariance", Verdict.PASS_AT_DEPTH, depth)


# -- Markov densities --------------------------------------------------------------


def _is_markov(fmap: PiecewiseMap) -> bool:
    return all(
        fmap.on_boundary(b.image(b.domain).lo) and fmap.on_boundary(b.image(b.domain).hi) for b in fmap.branches
    )


def _eventually_expanding(fmap: PiecewiseMap) -> bool:
    for _, pieces in iter_levels(fmap, 2 * len(fmap.branches) + 2):
        if all(abs(p.slope) > 1 for p in pieces):
            return True
    return False


def markov_invariant_density(fmap: PiecewiseMap) -> RationalMeasure:
    """Stationary piecewise-constant density for a map Markov on its branch partition."""
    fmap.require_exact("invariant density")
    if not _is_markov(fmap):
        raise NotMarkov("some branch image is not a union of branch domains")
    if not _eventually_expanding(fmap):
        raise NoStationaryDensity("the map is not eventually expanding; no unique density")
    s = len(fmap.branches)
    T = sympy.zeros(s, s)
    for i, bi in enumerate(fmap.branches):
        img = bi.image(bi.domain)
        for j, bj in enumerate(fmap.branches):
            if img.closure_contains(bj.domain):
                T[j, i] = sympy.Rational(1) / _sym(abs(bi.slope))
    null = (T - sympy.eye(s)).nullspace()
    if len(null) != 1:
        raise NoStationaryDensity(f"stationary densities form a space of dimension {len(null)}")
    v = [_frac(c) for c in null[0]]
    if all(c <= 0 for c in v):
        v = [-c for c in v]
    if any(c < 0 for c in v):
        raise NoStationaryDensity("stationary vector changes sign")
    total = sum(c * b.domain.length for c, b in zip(v, fmap.branches))
    return RationalMeasure.build([(b.domain, c / total) for c, b in zip(v, fmap.branches)])


def _sym(q: Fraction) -> sympy.Rational:
    return sympy.Rational(q.numerator, q.denominator)


def _frac(r) -> Fraction:
    r = sympy.Rational(r)
    return Fraction(int(r.p), int(r.q))


# -- lift operator -----------------------------------------------------------------


@dataclass(frozen=True)
class LiftResult:
    """𝓛(ν) for a truncated scheme.

    ``Q`` is the partial sum over stored elements.  ``uncaptured`` is the ν
    mass in the base outside every stored element; such points have inducing
    time above tau_max, so ``Q_lower`` is a certified lower bound for the
    full-scheme Q_ν.
    """

    measure: RationalMeasure
    Q: Fraction
    support_set_X: tuple[Interval, ...]
    uncaptured: Fraction
    tau_max: int

    @property
    def Q_lower(self) -> Fraction:
        return self.Q + (self.tau_max + 1) * self.uncaptured

    @property
    def truncated(self) -> bool:
        return self.uncaptured > 0


def lift_measure(scheme: InducingScheme, nu: RationalMeasure, fmap: PiecewiseMap) -> LiftResult:
    """𝓛(ν)(E) = (1/Q) Σ_J Σ_{k<τ(J)} ν(f⁻ᵏE ∩ J), pushing ν|J along each element's word."""
    fmap.require_exact("measure lifting")
    outside = nu.total_mass - measure_of_set(nu, [scheme.base])
    if outside != 0:
        raise ValueError(f"measure puts mass {outside} outside the base")
    total = RationalMeasure()
    Q = Fraction(0)
    captured = Fraction(0)
    X = []
    for e in scheme.elements:
        part = nu.restricted(e.interval)
        w = part.total_mass
        iv = e.interval
        for k, b in enumerate(e.branch_word):
            X.append(iv)
            if w:
                total = total + part
                part = part.push_branch(fmap.branches[b])
            iv = fmap.branches[b].image(iv)
        Q += e.tau * w
        captured += w
    if Q == 0:
        raise ZeroBaseMass("the measure gives no mass to the stored elements")
    merged = tuple(Interval(a, b) for a, b in merge_closures(X))
    return LiftResult(total.scaled(1 / Q), Q, merged, nu.total_mass - captured, scheme.tau_max)


# -- inducing through the tower ----------------------------------------------------


@dataclass(frozen=True)
class TowerLift:
    """μ̌ on a finite tower: per element, a density on cells plus atoms."""

    density: dict  # (element id, Interval cell) -> height
    atoms: dict  # (element id, point) -> mass

    def element_measure(self, eid: int) -> RationalMeasure:
        return RationalMeasure.build(
            [(c, h) for (e, c), h in self.density.items() if e == eid],
            [(x, w) for (e, x), w in self.atoms.items() if e == eid],
        )


def _markov_points(fmap: PiecewiseMap, tower: Tower, mu: RationalMeasure) -> list[Fraction]:
    """Smallest forward-closed point set containing ∂P, element ends and μ's breakpoints."""
    pts = set(fmap.boundary)
    for e in tower.elements:
        pts.update(e.key)
    for iv, _ in mu.density_pieces:
        pts.update((iv.lo, iv.hi))
    frontier = list(pts)
    while frontier:
        nxt = []
        for z in frontier:
            for b in fmap.branches:
                if b.domain.contains_in_closure(z):
                    y = b.apply(z)
                    if y not in pts:
                        pts.add(y)
                        nxt.append(y)
        if len(pts) > MAX_MARKOV_POINTS:
            raise PreconditionUnverified("measure breakpoints do not close up into a finite Markov partition")
        frontier = nxt
    return sorted(pts)


def _lift_density(fmap: PiecewiseMap, tower: Tower, mu: RationalMeasure) -> dict:
    pts = _markov_points(fmap, tower, mu)
    cells = [Interval(a, b) for a, b in zip(pts, pts[1:])]
    unknowns = [(e.id, c) for e in tower.elements for c in cells if e.interval.closure_contains(c)]
    index = {u: k for k, u in enumerate(unknowns)}
    n = len(unknowns)
    rows, rhs = [], []
    # invariance: each (element, cell) collects mass from the cells mapping over it
    incoming: dict[tuple[int, Interval], list[tuple[int, Fraction]]] = {u: [] for u in unknowns}
    for (eid, c), k in index.items():
        i = fmap.branch_index(c.midpoint)
        b = fmap.branches[i]
        target = successor(tower, fmap, eid, i)
        img = b.image(c)
        for c2 in cells:
            if img.closure_contains(c2):
                incoming[(target, c2)].append((k, 1 / abs(b.slope)))
    for u, srcs in incoming.items():
        row = [sympy.Integer(0)] * n
        row[index[u]] -= 1
        for k, w in srcs:
            row[k] += _sym(w)
        rows.append(row)
        rhs.append(0)
    # projection: the copies over each cell add up to μ's density there
    for c in cells:
        row = [sympy.Integer(0)] * n
        for e in tower.elements:
            if (e.id, c) in index:
                row[index[e.id, c]] = sympy.Integer(1)
        rows.append(row)
        rhs.append(_sym(mu.density_at(c.midpoint)))
    A = sympy.Matrix(rows)
    bvec = sympy.Matrix(rhs)
    try:
        sol, params = A.gauss_jordan_solve(bvec)
    except ValueError:
        raise PreconditionUnverified("the density does not lift to the tower") from None
    if params.shape[0]:
        raise PreconditionUnverified("the tower lift of the density is not unique")
    vals = [_frac(v) for v in sol]
    if any(v < 0 for v in vals):
        raise PreconditionUnverified("the tower lift of the density is not positive")
    return {u: v for u, v in zip(unknowns, vals) if v}


def _lift_atoms(fmap: PiecewiseMap, tower: Tower, mu: RationalMeasure) -> dict:
    """Spread each periodic orbit's mass uniformly over the tower cycle it falls into."""
    out: dict = {}
    done: set = set()
    for x0, _ in mu.atoms:
        if x0 in done:
            continue
        orbit = [x0]
        y = fmap.apply(x0)
        while y != x0:
            if len(orbit) > len(mu.atoms) or mu.atom_at(y) == 0:
                raise PreconditionUnverified(f"atom {x0} is not on a periodic orbit carried by the measure")
            orbit.append(y)
            y = fmap.apply(y)
        done.update(orbit)
        weight = sum(mu.atom_at(p) for p in orbit)
        cycles = set()
        for start in orbit:
            state = (start, 0)
            seen: dict = {}
            while state not in seen:
                seen[state] = len(seen)
                state = tower_step(tower, fmap, state)
            first = seen[state]
            cycles.add(frozenset(s for s, k in seen.items() if k >= first))
        if len(cycles) != 1:
            raise PreconditionUnverified(f"orbit of {x0} lifts to {len(cycles)} tower cycles")
        cycle = next(iter(cycles))
        for x, eid in cycle:
            out[eid, x] = out.get((eid, x), Fraction(0)) + weight / len(cycle)
    return out


def lift_to_tower(fmap: PiecewiseMap, tower: Tower, mu: RationalMeasure) -> TowerLift:
    dens = _lift_density(fmap, tower, mu) if mu.density_pieces else {}
    atoms = _lift_atoms(fmap, tower, mu) if mu.atoms else {}
    return TowerLift(dens, atoms)


@dataclass(frozen=True)
class InducedMeasure:
    nu: RationalMeasure
    base_mass: Fraction  # μ̌(W̌)
    reached: tuple[int, ...]

    @property
    def kac_target(self) -> Fraction:
        return 1 / self.base_mass


def _require_scheme_conditions(fmap, scheme, tower, m_report=None, c_report=None):
    if m_report is None or c_report is None:
        m_auto, c_auto = check_conditions(fmap, scheme, scheme.tau_max, ("M", "C"))
        m_report = m_report or m_auto
        c_report = c_report or c_auto
    for rep in (m_report, c_report):
        if not rep.ok:
            raise PreconditionUnverified(f"condition {rep.condition} is {rep.verdict.value}", rep)
    if not tower.saturated:
        raise PreconditionUnverified("the tower is not saturated")


def induce(
    scheme: InducingScheme,
    tower: Tower,
    fmap: PiecewiseMap,
    mu: RationalMeasure,
    test_depth: int = DEFAULT_TEST_DEPTH,
    m_report: Optional[ConditionReport] = None,
    c_report: Optional[ConditionReport] = None,
) -> InducedMeasure:
    """ν = π_*(μ̌|W̌)/μ̌(W̌) together with μ̌(W̌) and the elements carrying W̌."""
    fmap.require_exact("measure inducing")
    _require_scheme_conditions(fmap, scheme, tower, m_report, c_report)
    inv = check_invariance(fmap, mu, test_depth)
    if not inv.ok:
        raise PreconditionUnverified("the measure is not invariant on the test partition", inv)
    lift = lift_to_tower(fmap, tower, mu)
    reached = reached_elements(tower, fmap, scheme)
    restricted = RationalMeasure()
    for eid in reached:
        restricted = restricted + lift.element_measure(eid).restricted(scheme.base)
    if restricted.total_mass == 0:
        raise ZeroBaseMass("the measure gives no mass to the lifted base")
    return InducedMeasure(restricted.normalized(), restricted.total_mass, tuple(reached))


def induce_measure(
    scheme: InducingScheme,
    tower: Tower,
    fmap: PiecewiseMap,
    mu: RationalMeasure,
    test_depth: int = DEFAULT_TEST_DEPTH,
) -> RationalMeasure:
    return induce(scheme, tower, fmap, mu, test_depth).nu


def kac_roundtrip_check(
    scheme: InducingScheme,
    tower: Tower,
    fmap: PiecewiseMap,
    mu: RationalMeasure,
    test_depth: int = DEFAULT_TEST_DEPTH,
    kac_tol: Fraction = KAC_TOLERANCE,
    tv_tol: Fraction = TV_TOLERANCE,
) -> ConditionReport:
    """Kac's formula Q_ν·μ̌(W̌) = 1 and the round trip 𝓛(ν) = μ on the test partition.

    The Kac value compared is the certified lower bound ``Q_lower``; it must
    lie in [target - kac_tol, target].  Exact agreement with no truncation
    gives ``pass``; agreement within tolerance gives ``pass-at-depth``.
    """
    induced = induce(scheme, tower, fmap, mu, test_depth)
    lift = lift_measure(scheme, induced.nu, fmap)
    target = induced.kac_target
    cells = refine_partition(fmap, test_depth).cells
    tv, worst = tv_on_partition(lift.measure, mu, cells)
    info = {
        "Q": lift.Q_lower,
        "Q_partial": lift.Q,
        "target": target,
        "kac_tol": kac_tol,
        "tv": tv,
        "tv_tol": tv_tol,
        "uncaptured": lift.uncaptured,
        "deficit": scheme.mass_deficit,
    }
    # a lower bound above the target is a genuine failure; falling short of
    # it is only a failure when no mass escaped the stored elements
    short = Verdict.INCONCLUSIVE if lift.truncated else Verdict.FAIL
    if lift.Q_lower > target:
        return ConditionReport("Kac", Verdict.FAIL, scheme.tau_max, witness={"Q": lift.Q_lower, "target": target}, info=info)
    if lift.Q_lower < target - kac_tol:
        if short is Verdict.FAIL:
            return ConditionReport("Kac", short, scheme.tau_max, witness={"Q": lift.Q_lower, "target": target}, info=info)
        return ConditionReport("Kac", short, scheme.tau_max, info={**info, "reason": "truncation"})
    if tv > tv_tol:
        if short is Verdict.FAIL:
            return ConditionReport("Kac", short, scheme.tau_max, witness={"tv": tv, "cell": worst}, info=info)
        return ConditionReport("Kac", short, scheme.tau_max, info={**info, "reason": "truncation"})
    exact = lift.Q_lower == target and not lift.truncated and tv == 0
    return ConditionReport("Kac", Verdict.PASS if exact else Verdict.PASS_AT_DEPTH, scheme.tau_max, info=info)


def atomic_uniqueness(scheme: InducingScheme, fmap: PiecewiseMap, mu: RationalMeasure) -> tuple[list[tuple[Fraction, ...]], bool]:
    """F-cycles among μ's atoms in the stored elements, and whether their lifts determine ν.

    Every F-invariant atomic measure on these atoms mixes uniform cycle
    measures; when the cycles lift to disjoint supports, only one mixture
    can lift to μ.
    """
    pts = [x for x, _ in mu.atoms if scheme.element_at(x) is not None]
    cycles = []
    seen: set = set()
    for x0 in pts:
        if x0 in seen:
            continue
        path = []
        x = x0
        while x not in path:
            e = scheme.element_at(x)
            if e is None:
                break
            path.append(x)
            for b in e.branch_word:
                x = fmap.branches[b].apply(x)
        if x in path:
            cyc = tuple(path[path.index(x):])
            if not seen.intersection(cyc):
                cycles.append(cyc)
        seen.update(path)
    supports = [
        frozenset(p for p, _ in lift_measure(scheme, RationalMeasure.uniform_atoms(c), fmap).measure.atoms)
        for c in cycles
    ]
    disjoint = all(a.isdisjoint(b) for k, a in enumerate(supports) for b in supports[k + 1:])
    return cycles, disjoint


# -- measure files -----------------------------------------------------------------


def dump_measure(mu: RationalMeasure) -> str:
    lines = [f"total={format_rational(mu.total_mass)}"]
    for iv, h in mu.density_pieces:
        lines.append(f"piece {iv.dump()} height={format_rational(h)}")
    for x, w in mu.atoms:
        lines.append(f"atom {format_rational(x)} mass={format_rational(w)}")
    return "\n".join(lines) + "\n"


def parse_measure(text: str) -> RationalMeasure:
    pieces, atoms = [], []
    total = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0].startswith("total="):
                total = parse_rational(parts[0].split("=", 1)[1])
            elif parts[0] == "piece":
                key, _, value = parts[2].partition("=")
                if key != "height":
                    raise ParseError("expected height=", lineno)
                pieces.append((Interval.parse(parts[1]), parse_rational(value)))
            elif parts[0] == "atom":
                key, _, value = parts[2].partition("=")
                if key != "mass":
                    raise ParseError("expected mass=", lineno)
                atoms.append((parse_rational(parts[1]), parse_rational(value)))
            else:
                raise ParseError(f"unknown record {parts[0]!r}", lineno)
        except ParseError as exc:
            if exc.line is None:
                raise ParseError(str(exc), lineno) from None
            raise
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed measure record: {exc}", lineno) from None
    mu = RationalMeasure.build(pieces, atoms)
    if total is not None and total != mu.total_mass:
        raise ParseError(f"header total={total} disagrees with the records ({mu.total_mass})")
    return mu
