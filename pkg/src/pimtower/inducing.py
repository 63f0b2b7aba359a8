"""Nice sets, canonical inducing schemes, and the (H1)/(H2)/(M)/(C) condition checks."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .core.intervals import Interval, format_rational, parse_rational
from .core.maps import PiecewiseMap
from .core.partition import DEFAULT_CELL_BUDGET, Piece, iter_levels, word_piece
from .errors import BoundaryHit, ElementBudgetExceeded, ParseError, PreconditionUnverified, SchemeConstructionError
from .reports import ConditionReport, Verdict
from .tower import Tower, successor, tower_step

NICE = "nice"
NOT_NICE = "not_nice"
INCONCLUSIVE = "inconclusive"
EVENTUALLY_PERIODIC = "eventually-periodic"
OPEN_ENDED = "open-ended"

DEFAULT_SAMPLE_BUDGET = 10_000
ALL_CONDITIONS = ("H1", "H2", "C", "M", "C+", "M+")


# -- nice sets ---------------------------------------------------------------------


@dataclass(frozen=True)
class NiceCertificate:
    candidate: Interval
    horizon: int
    verdict: str
    witness: Optional[tuple[Fraction, int]] = None
    boundary_orbit_class: str = OPEN_ENDED
    orbits: tuple[tuple[Fraction, ...], ...] = ()

    @property
    def exact(self) -> bool:
        return self.verdict == NICE and self.boundary_orbit_class == EVENTUALLY_PERIODIC

    def render(self) -> str:
        parts = [f"nice V={self.candidate} verdict={self.verdict} class={self.boundary_orbit_class}"]
        if self.witness is not None:
            parts.append(f"witness point={self.witness[0]} n={self.witness[1]}")
        parts.append(f"horizon={self.horizon}")
        return " ".join(parts)


def _side_step(fmap: PiecewiseMap, y: Fraction, side: int) -> tuple[Fraction, int]:
    try:
        return fmap.one_sided_step(y, side)
    except ValueError:
        # an ambient endpoint can be approached from one side only
        return fmap.one_sided_step(y, -side)


def _boundary_orbit(fmap, V, start, side, horizon):
    """Follow one endpoint of V as a one-sided limit point.

    Returns (first n with the point inside V or None, orbit list, cycled flag).
    """
    state = (start, side)
    seen = {state: 0}
    orbit = [start]
    for n in range(1, horizon + 1):
        state = _side_step(fmap, *state)
        y = state[0]
        orbit.append(y)
        if V.contains_in_interior(y):
            return n, orbit, False
        if state in seen:
            return None, orbit, True
        seen[state] = n
    return None, orbit, False


def certify_nice(fmap: PiecewiseMap, V: Interval, horizon: int) -> NiceCertificate:
    """Check fⁿ(∂V) ∩ V = ∅ for n ≤ horizon, or for all n once both orbits cycle.

    An endpoint carries the side from which V's interior approaches it; when
    its orbit lands on ∂P the map continues through the branch on that side,
    and the side flips along decreasing branches.
    """
    fmap.require_exact("nice certification")
    if not (V.lo_open and V.hi_open):
        raise ValueError("candidate nice set must be open")
    if not fmap.ambient.closure_contains(V):
        raise ValueError(f"{V} is not inside the ambient interval")
    lo = _boundary_orbit(fmap, V, V.lo, +1, horizon)
    hi = _boundary_orbit(fmap, V, V.hi, -1, horizon)
    orbits = (tuple(lo[1]), tuple(hi[1]))
    hits = [(n, k, pt) for k, (pt, (n, _, _)) in enumerate(((V.lo, lo), (V.hi, hi))) if n is not None]
    if hits:
        n, _, pt = min(hits)
        return NiceCertificate(V, horizon, NOT_NICE, (pt, n), OPEN_ENDED, orbits)
    if lo[2] and hi[2]:
        return NiceCertificate(V, horizon, NICE, None, EVENTUALLY_PERIODIC, orbits)
    return NiceCertificate(V, horizon, INCONCLUSIVE, None, OPEN_ENDED, orbits)


# -- schemes -----------------------------------------------------------------------


@dataclass(frozen=True)
class BasicElement:
    interval: Interval
    tau: int
    host: Interval
    branch_word: tuple[int, ...]
    extended_host: Optional[Interval] = None

    def __post_init__(self):
        if self.tau < 1 or len(self.branch_word) != self.tau:
            raise ValueError("branch word length must equal tau >= 1")


@dataclass(frozen=True)
class InducingScheme:
    base: Interval
    elements: tuple[BasicElement, ...]
    tau_max: int
    covered_length: Fraction
    mass_deficit: Fraction
    extended_base: Optional[Interval] = None

    def __post_init__(self):
        if self.covered_length != sum((e.interval.length for e in self.elements), Fraction(0)):
            raise ValueError("covered_length must equal the total element length")
        if self.mass_deficit != self.base.length - self.covered_length or self.mass_deficit < 0:
            raise ValueError("mass_deficit must equal |base| - covered_length >= 0")

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def extended(self) -> bool:
        return self.extended_base is not None

    def element_at(self, x: Fraction) -> Optional[BasicElement]:
        for e in self.elements:
            if e.interval.contains(x):
                return e
        return None


def _make_scheme(base, elements, tau_max, extended_base=None) -> InducingScheme:
    elements = tuple(sorted(elements, key=lambda e: (e.tau, e.interval.lo)))
    covered = sum((e.interval.length for e in elements), Fraction(0))
    return InducingScheme(base, elements, tau_max, covered, base.length - covered, extended_base)


def _homeomorphic_pullback(fmap: PiecewiseMap, piece: Piece, target: Interval) -> Optional[Interval]:
    """Pullback of ``target`` through ``piece`` when f^n maps the piece over all of it."""
    if not piece.image.closure_contains(target):
        return None
    return piece.pullback(fmap, target)


def pullback_levels(
    fmap: PiecewiseMap,
    V: Interval,
    tau_max: int,
    cell_budget: int = DEFAULT_CELL_BUDGET,
    skip_inside: Optional[list[Interval]] = None,
) -> Iterable[tuple[int, list[tuple[Piece, Interval]]]]:
    """Per level n, the pieces whose homeomorphic pullback J of V lies strictly inside V.

    These J form the collection Q.  Pieces missing V are pruned with their
    descendants; pieces inside an interval of ``skip_inside`` are pruned as
    well, and the caller may extend that list between levels.
    """

    def keep(p: Piece) -> bool:
        if not p.cell.overlaps(V):
            return False
        return not (skip_inside and any(J.closure_contains(p.cell) for J in skip_inside))

    for n, pieces in iter_levels(fmap, tau_max, cell_budget, keep):
        found = []
        for p in pieces:
            J = _homeomorphic_pullback(fmap, p, V)
            if J is not None and V.closure_contains(J) and not J.same_closure(V):
                found.append((p, J))
        yield n, found


def build_canonical_scheme(
    fmap: PiecewiseMap,
    cert: NiceCertificate,
    tau_max: int,
    extended: bool = False,
    V_plus: Optional[Interval] = None,
    element_budget: int = DEFAULT_CELL_BUDGET,
) -> InducingScheme:
    """Minimal-time homeomorphic pullbacks of a nice V (the collection S').

    With ``extended`` the candidates must also pull ``V_plus`` back
    homeomorphically (the collection Q⁺), and each element records J⁺.
    """
    fmap.require_exact("scheme construction")
    if cert.verdict != NICE:
        raise PreconditionUnverified(f"{cert.candidate} is not certified nice ({cert.verdict})")
    V = cert.candidate
    if extended:
        if V_plus is None:
            raise ValueError("extended scheme needs an explicit V+")
        if not (V_plus.lo < V.lo and V.hi < V_plus.hi):
            raise ValueError("V+ must contain the closure of V")
    accepted: list[BasicElement] = []
    accepted_iv: list[Interval] = []
    for n, found in pullback_levels(fmap, V, tau_max, skip_inside=accepted_iv):
        batch: list[BasicElement] = []
        for piece, J in found:
            J_plus = None
            if extended:
                J_plus = _homeomorphic_pullback(fmap, piece, V_plus)
                if J_plus is None:
                    continue
            outer = [K for K in accepted_iv if K.overlaps(J)]
            if any(not K.closure_contains(J) for K in outer):
                raise SchemeConstructionError(f"pullbacks {outer[0]} and {J} overlap without nesting")
            if outer:
                continue
            for e in batch:
                if e.interval.overlaps(J):
                    raise SchemeConstructionError(
                        f"overlapping pullbacks {e.interval} and {J} share inducing time {n}"
                    )
            batch.append(BasicElement(J, n, piece.cell, piece.word, J_plus))
        accepted.extend(batch)
        accepted_iv.extend(e.interval for e in batch)
        if len(accepted) > element_budget:
            raise ElementBudgetExceeded(element_budget)
    return _make_scheme(V, accepted, tau_max, V_plus if extended else None)


def orbit_word(fmap: PiecewiseMap, J: Interval, tau: int) -> tuple[int, ...]:
    """Branch word followed by the points of J for ``tau`` steps."""
    for x in (J.midpoint, *J.quartiles()):
        word = []
        try:
            for _ in range(tau):
                i = fmap.branch_index(x)
                if i is None:
                    raise BoundaryHit(len(word), x)
                word.append(i)
                x = fmap.branches[i].apply(x)
        except BoundaryHit:
            continue
        return tuple(word)
    raise BoundaryHit(0, J.midpoint)


def scheme_from_elements(
    fmap: PiecewiseMap,
    base: Interval,
    elements: Sequence[tuple[Interval, int]],
    tau_max: Optional[int] = None,
) -> InducingScheme:
    """Wrap user-supplied (J, τ) pairs; words and hosts are recovered from the map."""
    fmap.require_exact("scheme construction")
    out = []
    for J, tau in elements:
        word = orbit_word(fmap, J, tau)
        piece = word_piece(fmap, word)
        out.append(BasicElement(J, tau, piece.cell, word))
    if tau_max is None:
        tau_max = max((t for _, t in elements), default=0)
    return _make_scheme(base, out, tau_max)


def dyadic_counterexample_scheme(fmap: PiecewiseMap, n_elements: int) -> InducingScheme:
    """J_n = (2^-(n+1), 2^-n) with τ = n+1 over base (0,1), for n < n_elements."""
    elements = [(Interval(Fraction(1, 2 ** (n + 1)), Fraction(1, 2**n)), n + 1) for n in range(n_elements)]
    return scheme_from_elements(fmap, Interval(0, 1), elements, n_elements)


# -- condition checks --------------------------------------------------------------


def check_deficit_decay(scheme: InducingScheme) -> ConditionReport:
    """Length of the base left uncovered by elements with τ ≤ n, for n = 1..tau_max.

    This is the finite-depth stand-in for (H3): the sequence must never grow
    and must end strictly below where it started.  Nothing here can prove the
    limit is zero, so the best verdict is pass-at-depth.
    """
    deficits = []
    left = scheme.base.length
    for n in range(1, scheme.tau_max + 1):
        left -= sum((e.interval.length for e in scheme.elements if e.tau == n), Fraction(0))
        deficits.append(left)
    if not scheme.elements or len(deficits) < 2:
        return ConditionReport("H3-surrogate", Verdict.INCONCLUSIVE, scheme.tau_max, numeric_data=deficits,
                               info={"reason": "empty-scheme" if not scheme.elements else "too-shallow"})
    if deficits[-1] < deficits[0]:
        return ConditionReport("H3-surrogate", Verdict.PASS_AT_DEPTH, scheme.tau_max, numeric_data=deficits,
                               info={"deficit": deficits[-1]})
    return ConditionReport("H3-surrogate", Verdict.INCONCLUSIVE, scheme.tau_max, numeric_data=deficits,
                           info={"reason": "no-decay"})


def check_nested_or_disjoint(fmap: PiecewiseMap, V: Interval, tau_max: int) -> ConditionReport:
    """Every two members of Q are interior-disjoint or nested with the outer one earlier."""
    fmap.require_exact("nesting check")
    members = [(J, n) for n, found in pullback_levels(fmap, V, tau_max) for _, J in found]
    members.sort(key=lambda t: (t[0].lo, -t[0].hi, t[1]))
    stack: list[tuple[Interval, int]] = []
    for J, n in members:
        while stack and stack[-1][0].hi <= J.lo:
            stack.pop()
        if stack:
            outer, m = stack[-1]
            if not (outer.closure_contains(J) and m < n):
                return ConditionReport(
                    "Nested", Verdict.FAIL, tau_max,
                    witness={"J": outer, "tau": m, "J2": J, "tau2": n},
                )
        stack.append((J, n))
    return ConditionReport("Nested", Verdict.PASS_AT_DEPTH, tau_max, info={"members": len(members)})


def _check_H1(fmap: PiecewiseMap, scheme: InducingScheme) -> ConditionReport:
    for e in scheme.elements:
        host, J = e.host, e.interval
        if not host.closure_contains(J):
            return ConditionReport("H1", Verdict.FAIL, scheme.tau_max, witness={"J": J, "host": host, "step": 0})
        for step, b in enumerate(e.branch_word):
            if not fmap.branches[b].domain.closure_contains(host):
                return ConditionReport(
                    "H1", Verdict.FAIL, scheme.tau_max, witness={"J": J, "tau": e.tau, "step": step}
                )
            host = fmap.branches[b].image(host)
            J = fmap.branches[b].image(J)
        if not (J.same_closure(scheme.base) and host.closure_contains(scheme.base)):
            return ConditionReport(
                "H1", Verdict.FAIL, scheme.tau_max, witness={"J": e.interval, "tau": e.tau, "image": J}
            )
    return ConditionReport("H1", Verdict.PASS, scheme.tau_max, info={"elements": len(scheme)})


def _check_disjoint(scheme: InducingScheme) -> ConditionReport:
    ordered = sorted(scheme.elements, key=lambda e: e.interval.lo)
    for a, b in zip(ordered, ordered[1:]):
        if a.interval.overlaps(b.interval):
            return ConditionReport("H2", Verdict.FAIL, scheme.tau_max, witness={"J": a.interval, "J2": b.interval})
    return ConditionReport("H2", Verdict.PASS, scheme.tau_max, info={"scope": "disjointness"})


def _check_C(fmap: PiecewiseMap, scheme: InducingScheme, plus: bool) -> ConditionReport:
    name = "C+" if plus else "C"
    if plus and not scheme.extended:
        return ConditionReport(name, Verdict.INCONCLUSIVE, scheme.tau_max, info={"reason": "no-extended-hosts"})
    for e in scheme.elements:
        U = e.extended_host if plus else e.host
        for i, b in enumerate(e.branch_word):
            inside = [p for p in fmap.boundary if U.contains_in_interior(p)]
            if inside:
                return ConditionReport(
                    name, Verdict.FAIL, scheme.tau_max,
                    witness={"J": e.interval, "tau": e.tau, "i": i, "point": inside[0]},
                )
            U = fmap.branches[b].image(U)
    return ConditionReport(name, Verdict.PASS, scheme.tau_max, info={"elements": len(scheme)})


def _check_M(fmap: PiecewiseMap, scheme: InducingScheme, m_max: int, plus: bool) -> ConditionReport:
    name = "M+" if plus else "M"
    if plus and not scheme.extended:
        return ConditionReport(name, Verdict.INCONCLUSIVE, m_max, info={"reason": "no-extended-hosts"})
    base = scheme.base
    # (M+) only counts pieces that also carry a homeomorphic copy of W+
    cover = scheme.extended_base if plus else scheme.base
    targets = scheme.elements
    if not targets:
        return ConditionReport(name, Verdict.INCONCLUSIVE, m_max, info={"reason": "empty-scheme"})

    def keep(p: Piece) -> bool:
        return any(p.cell.overlaps(e.interval) for e in targets)

    for m, pieces in iter_levels(fmap, m_max, keep=keep):
        for p in pieces:
            if not p.image.closure_contains(cover):
                continue
            L = p.pullback(fmap, base)
            for e in targets:
                if e.tau > m and L.overlaps(e.interval):
                    return ConditionReport(
                        name, Verdict.FAIL, m_max, witness={"L": L, "m": m, "J": e.interval, "tau": e.tau}
                    )
    if m_max < scheme.tau_max:
        return ConditionReport(name, Verdict.INCONCLUSIVE, m_max, info={"reason": "m_max-below-tau_max"})
    return ConditionReport(name, Verdict.PASS_AT_DEPTH, m_max)


def check_conditions(
    fmap: PiecewiseMap,
    scheme: InducingScheme,
    m_max: int,
    which: Sequence[str] = ("H1", "H2", "C", "M"),
) -> list[ConditionReport]:
    """Run the named checks in the given order.

    H2 here covers disjointness only; cylinder contraction lives in the thermo module.
    """
    fmap.require_exact("condition checks")
    out = []
    for name in which:
        if name == "H1":
            out.append(_check_H1(fmap, scheme))
        elif name == "H2":
            out.append(_check_disjoint(scheme))
        elif name in ("C", "C+"):
            out.append(_check_C(fmap, scheme, name == "C+"))
        elif name in ("M", "M+"):
            out.append(_check_M(fmap, scheme, m_max, name == "M+"))
        else:
            raise ValueError(f"unknown condition {name!r}; expected one of {ALL_CONDITIONS}")
    return out


# -- first return on the tower -----------------------------------------------------


def follow_word(tower: Tower, fmap: PiecewiseMap, eid: int, word: Sequence[int]) -> int:
    for b in word:
        eid = successor(tower, fmap, eid, b)
    return eid


def reached_elements(tower: Tower, fmap: PiecewiseMap, scheme: InducingScheme) -> list[int]:
    """Tower elements carrying a copy of W in W̌ = ⋃ F̌ᵏ(inc W)."""
    reached = {0}
    frontier = [0]
    while frontier:
        nxt = []
        for eid in frontier:
            for e in scheme.elements:
                target = follow_word(tower, fmap, eid, e.branch_word)
                if target not in reached:
                    reached.add(target)
                    nxt.append(target)
        frontier = nxt
    return sorted(reached)


def _passing(report: Optional[ConditionReport]) -> bool:
    return report is not None and report.ok


def embed_in_tower(
    scheme: InducingScheme,
    tower: Tower,
    fmap: PiecewiseMap,
    sample_budget: int = DEFAULT_SAMPLE_BUDGET,
    m_report: Optional[ConditionReport] = None,
    c_report: Optional[ConditionReport] = None,
) -> ConditionReport:
    """Sampled check that F is the first return to W̌ under the tower map.

    Also checks that every tower element carrying a copy of W projects onto
    a set containing W.  Without supplied M/C reports both are computed with
    m_max equal to the scheme's tau_max.
    """
    fmap.require_exact("tower embedding")
    if m_report is None or c_report is None:
        m_auto, c_auto = check_conditions(fmap, scheme, scheme.tau_max, ("M", "C"))
        m_report = m_report or m_auto
        c_report = c_report or c_auto
    for rep in (m_report, c_report):
        if not _passing(rep):
            raise PreconditionUnverified(f"condition {rep.condition} is {rep.verdict.value}", rep)
    if not tower.saturated:
        raise PreconditionUnverified("the tower is not saturated")

    reached = reached_elements(tower, fmap, scheme)
    in_W = set(reached)
    for eid in reached:
        D = tower.element(eid).interval
        for e in scheme.elements:
            if not D.closure_contains(e.interval):
                return ConditionReport(
                    "FirstReturn", Verdict.FAIL, tower.depth,
                    witness={"element": eid, "J": e.interval, "lemma": "projection-misses-W"},
                )

    samples = 0
    for eid in reached:
        for e in scheme.elements:
            for x0 in sorted({e.interval.midpoint, *e.interval.quartiles()}):
                if samples >= sample_budget:
                    break
                samples += 1
                x, node = x0, eid
                for i in range(1, e.tau + 1):
                    x, node = tower_step(tower, fmap, (x, node))
                    back = node in in_W and scheme.base.contains_in_interior(x)
                    if back != (i == e.tau):
                        return ConditionReport(
                            "FirstReturn", Verdict.FAIL, tower.depth,
                            witness={"x": x0, "element": eid, "J": e.interval, "tau": e.tau, "i": i},
                        )
    info = {"samples": samples, "reached": len(reached), "sampled": True}
    return ConditionReport("FirstReturn", Verdict.PASS_AT_DEPTH, tower.depth, info=info)


# -- scheme files ------------------------------------------------------------------


def dump_scheme(scheme: InducingScheme) -> str:
    head = (
        f"base={scheme.base.dump()} tau_max={scheme.tau_max} "
        f"covered={format_rational(scheme.covered_length)} deficit={format_rational(scheme.mass_deficit)}"
    )
    if scheme.extended:
        head += f" extended_base={scheme.extended_base.dump()}"
    lines = [head]
    for e in scheme.elements:
        rec = (
            f"J {e.interval.dump()} tau={e.tau} word={','.join(map(str, e.branch_word))} host={e.host.dump()}"
        )
        if e.extended_host is not None:
            rec += f" ext={e.extended_host.dump()}"
        lines.append(rec)
    return "\n".join(lines) + "\n"


def parse_scheme(text: str, fmap: Optional[PiecewiseMap] = None) -> InducingScheme:
    """Read a scheme file.

    Records may omit ``word`` and ``host`` when ``fmap`` is given; they are then
    recovered by following the orbit of J.
    """
    header = None
    elements = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0].startswith("base="):
                header = dict(p.split("=", 1) for p in parts)
            elif parts[0] == "J":
                J = Interval.parse(parts[1])
                fields = dict(p.split("=", 1) for p in parts[2:])
                tau = int(fields["tau"])
                if "word" in fields:
                    word = tuple(int(w) for w in fields["word"].split(","))
                elif fmap is not None:
                    word = orbit_word(fmap, J, tau)
                else:
                    raise ParseError("missing word=", lineno)
                if "host" in fields:
                    host = Interval.parse(fields["host"])
                elif fmap is not None:
                    host = word_piece(fmap, word).cell
                else:
                    raise ParseError("missing host=", lineno)
                ext = Interval.parse(fields["ext"]) if "ext" in fields else None
                elements.append(BasicElement(J, tau, host, word, ext))
            else:
                raise ParseError(f"unknown record {parts[0]!r}", lineno)
        except ParseError as exc:
            if exc.line is None:
                raise ParseError(str(exc), lineno) from None
            raise
        except (KeyError, ValueError, IndexError, BoundaryHit) as exc:
            raise ParseError(f"malformed scheme record: {exc}", lineno) from None
    if header is None:
        raise ParseError("missing base=... header")
    try:
        base = Interval.parse(header["base"])
        tau_max = int(header.get("tau_max", max((e.tau for e in elements), default=0)))
        ext = Interval.parse(header["extended_base"]) if "extended_base" in header else None
        scheme = _make_scheme(base, elements, tau_max, ext)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed scheme header: {exc}") from None
    for key, value in (("covered", scheme.covered_length), ("deficit", scheme.mass_deficit)):
        if key in header and parse_rational(header[key]) != value:
            raise ParseError(f"header {key}={header[key]} disagrees with the elements ({value})")
    return scheme
