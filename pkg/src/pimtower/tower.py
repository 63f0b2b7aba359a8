"""The connected Markov extension: elements D of the 𝒟ₙ recursion and the tower map."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .core.intervals import Interval, merge_closures
from .core.maps import PiecewiseMap
from .core.partition import word_piece
from .errors import BoundaryHit, ElementBudgetExceeded, ParseError, Unsaturated
from .reports import ConditionReport, Verdict

DEFAULT_ELEMENT_BUDGET = 10**5

ClosureKey = tuple[Fraction, Fraction]


@dataclass(frozen=True)
class TowerElement:
    id: int
    interval: Interval
    level: int
    first_seen_depth: int

    @property
    def key(self) -> ClosureKey:
        return self.interval.closure_key


@dataclass(frozen=True)
class Tower:
    """Elements sorted by (level, lo, hi); element 0 is the ambient interval.

    ``transitions`` holds ``(from_id, branch, to_id)`` for every element of
    level below ``depth``.  Edges out of the deepest level are computed on
    demand by ``successor``.
    """

    elements: tuple[TowerElement, ...]
    transitions: tuple[tuple[int, int, int], ...]
    depth: int
    saturated: bool
    _by_key: dict = field(init=False, repr=False, compare=False)
    _edges: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_key", {e.key: e.id for e in self.elements})
        edges = {}
        for a, i, b in self.transitions:
            if (a, i) in edges and edges[a, i] != b:
                raise ValueError(f"transition ({a},{i}) is not deterministic")
            edges[a, i] = b
        object.__setattr__(self, "_edges", edges)

    def __len__(self) -> int:
        return len(self.elements)

    def element(self, eid: int) -> TowerElement:
        return self.elements[eid]

    def find(self, iv: Interval) -> Optional[int]:
        return self._by_key.get(iv.closure_key)

    def recorded_edge(self, eid: int, branch: int) -> Optional[int]:
        return self._edges.get((eid, branch))


def _component(fmap: PiecewiseMap, iv: Interval, branch: int) -> Optional[Interval]:
    return iv.intersect(fmap.branches[branch].domain)


def _image(fmap: PiecewiseMap, iv: Interval, branch: int) -> Optional[Interval]:
    comp = _component(fmap, iv, branch)
    return None if comp is None else fmap.branches[branch].image(comp)


def build_tower(fmap: PiecewiseMap, depth: int, element_budget: int = DEFAULT_ELEMENT_BUDGET) -> Tower:
    """Breadth-first 𝒟ₙ recursion to ``depth`` plus one look-ahead level for saturation."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    fmap.require_exact("tower construction")
    root = fmap.ambient.interior()
    found: dict[ClosureKey, tuple[Interval, int]] = {root.closure_key: (root, 0)}
    edges: list[tuple[ClosureKey, int, ClosureKey]] = []
    frontier = [root]
    saturated = False
    for n in range(depth + 1):
        lookahead = n == depth
        new = []
        grew = False
        for D in frontier:
            for i in range(len(fmap.branches)):
                img = _image(fmap, D, i)
                if img is None:
                    continue
                key = img.closure_key
                if key not in found:
                    if lookahead:
                        grew = True
                        break
                    found[key] = (img, n + 1)
                    new.append(img)
                    if len(found) > element_budget:
                        raise ElementBudgetExceeded(element_budget)
                if not lookahead:
                    edges.append((D.closure_key, i, key))
            if grew:
                break
        if lookahead:
            saturated = not grew
            break
        if not new:
            saturated = True
            break
        frontier = sorted(new)

    order = sorted(found.values(), key=lambda t: (t[1], t[0].lo, t[0].hi))
    ids = {iv.closure_key: k for k, (iv, _) in enumerate(order)}
    elements = tuple(TowerElement(k, iv, lvl, lvl) for k, (iv, lvl) in enumerate(order))
    transitions = tuple(sorted((ids[a], i, ids[b]) for a, i, b in edges))
    return Tower(elements, transitions, depth, saturated)


def successor(tower: Tower, fmap: PiecewiseMap, eid: int, branch: int) -> int:
    """Id of f(D ∩ A_branch) for D the element ``eid``."""
    recorded = tower.recorded_edge(eid, branch)
    if recorded is not None:
        return recorded
    img = _image(fmap, tower.element(eid).interval, branch)
    if img is None:
        raise ValueError(f"element {eid} does not meet branch {branch}")
    target = tower.find(img)
    if target is None:
        raise Unsaturated(f"image {img} of element {eid} under branch {branch} is not in the tower")
    return target


def tower_step(tower: Tower, fmap: PiecewiseMap, state: tuple[Fraction, int]) -> tuple[Fraction, int]:
    """f̌(x, D) = (f(x), f(E)) with E the component of D ∩ P(x) holding x."""
    x, eid = state
    if not tower.element(eid).interval.contains_in_closure(x):
        raise ValueError(f"{x} is not in the closure of element {eid}")
    i = fmap.branch_index(x)
    if i is None:
        raise BoundaryHit(0, x)
    return fmap.branches[i].apply(x), successor(tower, fmap, eid, i)


def _covers(pieces: list[tuple[Fraction, Fraction]], key: ClosureKey) -> bool:
    return any(lo <= key[0] and key[1] <= hi for lo, hi in pieces)


def check_markov(tower: Tower, fmap: PiecewiseMap, k_max: int) -> ConditionReport:
    """f̌ᵏ(Ď_a) meets Ď_b only if it covers Ď_b, for every a, b and k ≤ k_max.

    Images are propagated as unions of intervals per element, so a transition
    that points at the wrong element shows up either as an image escaping its
    target or as a target that is only partly covered.
    """
    for a, i, b in tower.transitions:
        img = _image(fmap, tower.element(a).interval, i)
        if img is None or not img.same_closure(tower.element(b).interval):
            return ConditionReport(
                "Markov", Verdict.FAIL, tower.depth,
                witness={"a": a, "b": b, "k": 1, "branch": i, "image": img if img else "empty"},
            )
    restricted = False
    for a in tower.elements:
        current = {a.id: [a.interval]}
        for k in range(1, k_max + 1):
            nxt: dict[int, list[Interval]] = {}
            for eid, pieces in current.items():
                for P in pieces:
                    for i in range(len(fmap.branches)):
                        img = _image(fmap, P, i)
                        if img is None:
                            continue
                        try:
                            b = successor(tower, fmap, eid, i)
                        except Unsaturated:
                            restricted = True
                            continue
                        D_b = tower.element(b).interval
                        if not D_b.closure_contains(img):
                            return ConditionReport(
                                "Markov", Verdict.FAIL, tower.depth,
                                witness={"a": a.id, "b": b, "k": k, "image": img},
                            )
                        nxt.setdefault(b, []).append(img)
            current = {}
            for b, imgs in sorted(nxt.items()):
                merged = merge_closures(imgs)
                D_b = tower.element(b).interval
                if not _covers(merged, D_b.closure_key):
                    return ConditionReport(
                        "Markov", Verdict.FAIL, tower.depth,
                        witness={"a": a.id, "b": b, "k": k, "image": [Interval(lo, hi) for lo, hi in merged]},
                    )
                current[b] = [D_b]
    info = {"k_max": k_max, "elements": len(tower), "saturated": tower.saturated}
    if tower.saturated and not restricted:
        return ConditionReport("Markov", Verdict.PASS, tower.depth, info=info)
    return ConditionReport("Markov", Verdict.PASS_AT_DEPTH, tower.depth, info={**info, "restricted": True})


def homeomorphic_lift_path(tower: Tower, fmap: PiecewiseMap, eid: int) -> tuple[Interval, tuple[int, ...]]:
    """A set E inside one branch domain and a word carrying (E, element 0) onto element ``eid``.

    The word is the lexicographically least among the shortest paths from
    element 0, so its length equals the element's level.
    """
    target = tower.element(eid)
    if target.level == 0:
        raise ValueError("element of level 0 has no lift path")
    parent: dict[int, tuple[int, int]] = {0: (-1, -1)}
    queue = deque([0])
    while queue and eid not in parent:
        a = queue.popleft()
        for i in range(len(fmap.branches)):
            b = tower.recorded_edge(a, i)
            if b is not None and b not in parent:
                parent[b] = (a, i)
                queue.append(b)
    if eid not in parent:
        raise Unsaturated(f"element {eid} is not reachable through recorded transitions")
    word = []
    node = eid
    while node != 0:
        node, i = parent[node]
        word.append(i)
    word.reverse()
    piece = word_piece(fmap, word)
    if piece is None:
        raise Unsaturated(f"word {word} to element {eid} has an empty cell")
    return piece.cell, tuple(word)


def verify_lift_path(tower: Tower, fmap: PiecewiseMap, eid: int, E: Interval, word: Sequence[int]) -> bool:
    """Replay ``word`` from (E, element 0); true when it lands exactly onto element ``eid``."""
    node = 0
    cur = E
    for b in word:
        if not fmap.branches[b].domain.closure_contains(cur):
            return False
        if not tower.element(node).interval.closure_contains(cur):
            return False
        node = successor(tower, fmap, node, b)
        cur = fmap.branches[b].image(cur)
    return node == eid and cur.same_closure(tower.element(eid).interval)


def dump_tower(tower: Tower) -> str:
    lines = [f"depth={tower.depth} saturated={int(tower.saturated)}"]
    for e in tower.elements:
        lines.append(f"elem {e.id} level={e.level} interval={e.interval.dump()}")
    for a, i, b in tower.transitions:
        lines.append(f"edge {a} {i} {b}")
    return "\n".join(lines) + "\n"


def parse_tower(text: str) -> Tower:
    depth = saturated = None
    elements = []
    transitions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0].startswith("depth="):
                fields = dict(p.split("=", 1) for p in parts)
                depth = int(fields["depth"])
                saturated = fields["saturated"] == "1"
            elif parts[0] == "elem":
                fields = dict(p.split("=", 1) for p in parts[2:])
                lvl = int(fields["level"])
                elements.append(TowerElement(int(parts[1]), Interval.parse(fields["interval"]), lvl, lvl))
            elif parts[0] == "edge":
                a, i, b = (int(p) for p in parts[1:4])
                transitions.append((a, i, b))
            else:
                raise ParseError(f"unknown record {parts[0]!r}", lineno)
        except (KeyError, ValueError, IndexError) as exc:
            raise ParseError(f"malformed tower record: {exc}", lineno) from None
    if depth is None:
        raise ParseError("missing depth=... header")
    elements.sort(key=lambda e: e.id)
    if [e.id for e in elements] != list(range(len(elements))):
        raise ParseError("element ids must be 0..n-1")
    return Tower(tuple(elements), tuple(transitions), depth, saturated)
