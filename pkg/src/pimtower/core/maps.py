"""Finite-branch piecewise invertible interval maps."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

from ..errors import BoundaryHit, ExactModeRequired, ParseError
from .intervals import Interval, RationalLike, format_rational, parse_rational, to_rational

EXACT = "exact"
NUMERIC = "numeric"


@dataclass(frozen=True)
class Branch:
    """Affine branch ``x -> slope*x + offset`` on an open domain."""

    domain: Interval
    slope: Fraction
    offset: Fraction

    def __post_init__(self):
        object.__setattr__(self, "slope", to_rational(self.slope))
        object.__setattr__(self, "offset", to_rational(self.offset))
        if self.slope == 0:
            raise ValueError("branch slope must be nonzero")

    is_affine = True

    @property
    def increasing(self) -> bool:
        return self.slope > 0

    def apply(self, x: Fraction) -> Fraction:
        return self.slope * x + self.offset

    def image(self, iv: Interval) -> Interval:
        return iv.affine_image(self.slope, self.offset)

    def preimage(self, iv: Interval) -> Interval:
        """Full affine preimage, not yet intersected with the domain."""
        return iv.affine_preimage(self.slope, self.offset)

    def abs_derivative(self, x: Fraction) -> Fraction:
        return abs(self.slope)


@dataclass(frozen=True)
class SmoothBranch:
    """Monotone smooth branch, evaluated in floating point (numeric mode only).

    ``func`` and ``inverse`` act on floats; endpoints are converted back with
    ``Fraction(float)`` so interval bookkeeping stays uniform.
    """

    domain: Interval
    func: Callable[[float], float] = field(compare=False)
    inverse: Callable[[float], float] = field(compare=False)
    derivative: Callable[[float], float] = field(compare=False)
    increasing: bool = True

    is_affine = False

    def apply(self, x: Fraction) -> Fraction:
        return Fraction(self.func(float(x)))

    def image(self, iv: Interval) -> Interval:
        a, b = self.apply(iv.lo), self.apply(iv.hi)
        if self.increasing:
            return Interval(a, b, iv.lo_open, iv.hi_open)
        return Interval(b, a, iv.hi_open, iv.lo_open)

    def preimage(self, iv: Interval) -> Optional[Interval]:
        clipped = iv.intersect(self.image(self.domain))
        if clipped is None:
            return None
        a = Fraction(self.inverse(float(clipped.lo)))
        b = Fraction(self.inverse(float(clipped.hi)))
        if not self.increasing:
            a, b = b, a
        if not a < b:
            return None
        if self.increasing:
            return Interval(a, b, clipped.lo_open, clipped.hi_open)
        return Interval(a, b, clipped.hi_open, clipped.lo_open)

    def abs_derivative(self, x: Fraction) -> Fraction:
        return Fraction(abs(self.derivative(float(x))))


AnyBranch = Union[Branch, SmoothBranch]


@dataclass(frozen=True)
class PiecewiseMap:
    """A piecewise invertible map of the interval ``ambient``.

    Branch domains are open, pairwise disjoint, sorted, and their closures tile
    the ambient interval.  ``boundary`` (the set ∂P) always contains the
    ambient endpoints.
    """

    ambient: Interval
    branches: tuple[AnyBranch, ...]
    mode: str = EXACT
    boundary: tuple[Fraction, ...] = field(init=False, repr=False, compare=False)
    _lows: tuple[Fraction, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        branches = tuple(sorted(self.branches, key=lambda b: b.domain.lo))
        object.__setattr__(self, "branches", branches)
        object.__setattr__(self, "ambient", self.ambient.closure())
        if self.mode not in (EXACT, NUMERIC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not branches:
            raise ValueError("a map needs at least one branch")
        if self.mode == EXACT and not all(b.is_affine for b in branches):
            raise ValueError("smooth branches are admitted only in numeric mode")
        amb = self.ambient
        if branches[0].domain.lo != amb.lo or branches[-1].domain.hi != amb.hi:
            raise ValueError("branch domains must reach both ambient endpoints")
        for left, right in zip(branches, branches[1:]):
            if left.domain.hi != right.domain.lo:
                raise ValueError(
                    f"branch domains must tile the ambient interval: gap or overlap at "
                    f"{left.domain.hi}..{right.domain.lo}"
                )
        for b in branches:
            if not (b.domain.lo_open and b.domain.hi_open):
                raise ValueError("branch domains must be open intervals")
            img = b.image(b.domain)
            if not amb.closure_contains(img):
                raise ValueError(f"branch image {img} leaves the ambient interval")
        points = sorted({amb.lo, amb.hi, *(b.domain.lo for b in branches)})
        object.__setattr__(self, "boundary", tuple(points))
        object.__setattr__(self, "_lows", tuple(b.domain.lo for b in branches))

    @property
    def exact(self) -> bool:
        return self.mode == EXACT

    def require_exact(self, what: str = "this operation") -> None:
        if not self.exact:
            raise ExactModeRequired(f"{what} needs an exact-mode map")

    def on_boundary(self, x: Fraction) -> bool:
        i = bisect.bisect_left(self.boundary, x)
        return i < len(self.boundary) and self.boundary[i] == x

    def branch_index(self, x: Fraction) -> Optional[int]:
        """Index of the branch whose open domain holds ``x``; ``None`` on ∂P or outside."""
        if not self.ambient.contains_in_interior(x) or self.on_boundary(x):
            return None
        return bisect.bisect_right(self._lows, x) - 1

    def one_sided_branch(self, x: Fraction, side: int) -> int:
        """Branch reached by approaching ``x`` from the right (side=+1) or left (side=-1)."""
        i = self.branch_index(x)
        if i is not None:
            return i
        for j, b in enumerate(self.branches):
            if side > 0 and b.domain.lo == x:
                return j
            if side < 0 and b.domain.hi == x:
                return j
        raise ValueError(f"no branch approaches {x} from side {side:+d}")

    def one_sided_step(self, x: Fraction, side: int) -> tuple[Fraction, int]:
        """Image of the one-sided limit point ``(x, side)``; sides flip on decreasing branches."""
        b = self.branches[self.one_sided_branch(x, side)]
        return b.apply(x), side if b.increasing else -side

    def apply(self, x: Fraction) -> Fraction:
        i = self.branch_index(x)
        if i is None:
            raise BoundaryHit(0, x)
        return self.branches[i].apply(x)

    def boundary_images(self) -> list[Fraction]:
        """ΔP = f(∂P), taking every one-sided limit at each boundary point."""
        out = set()
        for b in self.branches:
            out.add(b.apply(b.domain.lo))
            out.add(b.apply(b.domain.hi))
        return sorted(out)


def eval_map(fmap: PiecewiseMap, x: RationalLike, steps: int) -> Fraction:
    """Return ``f^steps(x)``.

    Raises ``BoundaryHit(k)`` for the first orbit point ``f^k(x)``, ``k <= steps``,
    lying on ∂P; the landing point counts, so ``steps`` iterates are defined
    only if the whole orbit segment including its end avoids ∂P.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    x = to_rational(x)
    if steps == 0:
        return x
    for k in range(steps):
        i = fmap.branch_index(x)
        if i is None:
            raise BoundaryHit(k, x)
        x = fmap.branches[i].apply(x)
    if fmap.on_boundary(x):
        raise BoundaryHit(steps, x)
    return x


def inverse_branch(fmap: PiecewiseMap, branch_index: int, target: Optional[Interval]) -> Optional[Interval]:
    """Preimage of ``target`` under one branch, inside that branch's domain."""
    if target is None:
        return None
    b = fmap.branches[branch_index]
    pre = b.preimage(target)
    return None if pre is None else pre.intersect(b.domain)


def affine_map(
    breaks: Sequence[RationalLike],
    slopes: Sequence[RationalLike],
    offsets: Sequence[RationalLike],
    mode: str = EXACT,
) -> PiecewiseMap:
    breaks = [to_rational(b) for b in breaks]
    if len(breaks) != len(slopes) + 1 or len(slopes) != len(offsets):
        raise ValueError("need len(breaks) == len(slopes) + 1 == len(offsets) + 1")
    branches = tuple(
        Branch(Interval(lo, hi), to_rational(s), to_rational(c))
        for lo, hi, s, c in zip(breaks, breaks[1:], slopes, offsets)
    )
    return PiecewiseMap(Interval.closed(breaks[0], breaks[-1]), branches, mode)


def doubling_map() -> PiecewiseMap:
    """x -> 2x mod 1."""
    return affine_map([0, Fraction(1, 2), 1], [2, 2], [0, -1])


def markov_map() -> PiecewiseMap:
    """2x on (0,1/2), x - 1/2 on (1/2,1); the golden-mean Markov map."""
    return affine_map([0, Fraction(1, 2), 1], [2, 1], [0, Fraction(-1, 2)])


def full_branch_map(breaks: Sequence[RationalLike], increasing: Sequence[bool] | None = None) -> PiecewiseMap:
    """Each branch maps its domain affinely onto the whole ambient interval."""
    breaks = [to_rational(b) for b in breaks]
    lo, hi = breaks[0], breaks[-1]
    n = len(breaks) - 1
    increasing = [True] * n if increasing is None else list(increasing)
    slopes, offsets = [], []
    for a, b, up in zip(breaks, breaks[1:], increasing):
        s = (hi - lo) / (b - a)
        if up:
            slopes.append(s)
            offsets.append(lo - s * a)
        else:
            slopes.append(-s)
            offsets.append(hi + s * a)
    return affine_map(breaks, slopes, offsets)


def logistic_map(a: float = 4.0) -> PiecewiseMap:
    """Numeric-mode unimodal map ``x -> a x (1 - x)`` on [0,1]; no certificates."""
    if not 0 < a <= 4:
        raise ValueError("logistic parameter must lie in (0, 4]")
    half = Fraction(1, 2)

    def func(x: float) -> float:
        return a * x * (1 - x)

    def deriv(x: float) -> float:
        return a * (1 - 2 * x)

    def inv_left(y: float) -> float:
        return (1 - math.sqrt(max(0.0, 1 - 4 * y / a))) / 2

    def inv_right(y: float) -> float:
        return (1 + math.sqrt(max(0.0, 1 - 4 * y / a))) / 2

    left = SmoothBranch(Interval(0, half), func, inv_left, deriv, True)
    right = SmoothBranch(Interval(half, 1), func, inv_right, deriv, False)
    return PiecewiseMap(Interval.closed(0, 1), (left, right), NUMERIC)


# -- map definition files ---------------------------------------------------------


def parse_map(text: str) -> PiecewiseMap:
    """Parse the line-oriented map format (``ambient``, ``branch``, ``mode`` keys)."""
    ambient = None
    mode = EXACT
    branches = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        key, value = key.strip(), value.strip()
        try:
            if key == "ambient":
                ambient = Interval.parse(value, closed=True)
            elif key == "mode":
                if value not in (EXACT, NUMERIC):
                    raise ParseError(f"mode must be exact or numeric, got {value!r}")
                mode = value
            elif key == "branch":
                parts = value.split()
                if len(parts) != 4:
                    raise ParseError("branch needs: domain_lo domain_hi slope offset")
                lo, hi, s, c = (parse_rational(p) for p in parts)
                branches.append(Branch(Interval(lo, hi), s, c))
            else:
                raise ParseError(f"unknown key {key!r}")
        except ParseError as exc:
            if exc.line is None:
                raise ParseError(str(exc), lineno) from None
            raise
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if ambient is None:
        raise ParseError("missing ambient = lo..hi")
    try:
        return PiecewiseMap(ambient, tuple(branches), mode)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def dump_map(fmap: PiecewiseMap) -> str:
    fmap.require_exact("serialization")
    lines = [f"ambient = {fmap.ambient.dump()}", f"mode = {fmap.mode}"]
    for b in fmap.branches:
        lines.append(
            "branch = "
            + " ".join(format_rational(v) for v in (b.domain.lo, b.domain.hi, b.slope, b.offset))
        )
    return "\n".join(lines) + "\n"
