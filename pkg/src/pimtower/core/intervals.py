"""Exact rational intervals.

Every set the toolkit manipulates (the ambient space, branch domains, tower
elements, basic elements, cylinders) is an ``Interval`` with ``Fraction``
endpoints.  Intervals are open unless stated otherwise; identity of sets that
differ only by endpoints is handled by comparing ``closure_key`` values.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Union

from ..errors import ParseError

RationalLike = Union[Fraction, int, str]


def to_rational(value: RationalLike) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rational(value)
    raise TypeError(f"not an exact rational: {value!r}")


def parse_rational(text: str) -> Fraction:
    """Parse ``p/q`` or ``p``; floats are refused so nothing inexact slips in."""
    text = text.strip()
    if not text:
        raise ParseError("empty rational")
    num, sep, den = text.partition("/")
    try:
        n = int(num)
        d = int(den) if sep else 1
    except ValueError:
        raise ParseError(f"malformed rational {text!r}") from None
    if d == 0:
        raise ParseError(f"zero denominator in {text!r}")
    return Fraction(n, d)


def format_rational(r: Fraction) -> str:
    """Serialize as ``numerator/denominator`` in lowest terms (``1`` -> ``1/1``)."""
    return f"{r.numerator}/{r.denominator}"


@dataclass(frozen=True, order=True)
class Interval:
    lo: Fraction
    hi: Fraction
    lo_open: bool = True
    hi_open: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lo", to_rational(self.lo))
        object.__setattr__(self, "hi", to_rational(self.hi))
        if not self.lo < self.hi:
            raise ValueError(f"interval needs lo < hi, got {self.lo}..{self.hi}")

    @classmethod
    def open(cls, lo: RationalLike, hi: RationalLike) -> "Interval":
        return cls(to_rational(lo), to_rational(hi))

    @classmethod
    def closed(cls, lo: RationalLike, hi: RationalLike) -> "Interval":
        return cls(to_rational(lo), to_rational(hi), False, False)

    @classmethod
    def parse(cls, text: str, closed: bool = False) -> "Interval":
        lo, sep, hi = text.strip().partition("..")
        if not sep:
            raise ParseError(f"expected lo..hi, got {text!r}")
        a, b = parse_rational(lo), parse_rational(hi)
        if not a < b:
            raise ParseError(f"empty interval {text!r}")
        return cls(a, b, not closed, not closed)

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    @property
    def closure_key(self) -> tuple[Fraction, Fraction]:
        return (self.lo, self.hi)

    @property
    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def interior(self) -> "Interval":
        return Interval(self.lo, self.hi)

    def closure(self) -> "Interval":
        return Interval(self.lo, self.hi, False, False)

    def contains(self, x: Fraction) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo:
            return not self.lo_open
        if x == self.hi:
            return not self.hi_open
        return True

    def contains_in_closure(self, x: Fraction) -> bool:
        return self.lo <= x <= self.hi

    def contains_in_interior(self, x: Fraction) -> bool:
        return self.lo < x < self.hi

    def closure_contains(self, other: "Interval") -> bool:
        """``closure(other)`` is a subset of ``closure(self)``."""
        return self.lo <= other.lo and other.hi <= self.hi

    def same_closure(self, other: "Interval") -> bool:
        return self.closure_key == other.closure_key

    def overlaps(self, other: "Interval") -> bool:
        """Interiors intersect."""
        return max(self.lo, other.lo) < min(self.hi, other.hi)

    def intersect(self, other: Optional["Interval"]) -> Optional["Interval"]:
        """Point-set intersection, or ``None`` when the interior is empty."""
        if other is None:
            return None
        if self.lo > other.lo:
            lo, lo_open = self.lo, self.lo_open
        elif self.lo < other.lo:
            lo, lo_open = other.lo, other.lo_open
        else:
            lo, lo_open = self.lo, self.lo_open or other.lo_open
        if self.hi < other.hi:
            hi, hi_open = self.hi, self.hi_open
        elif self.hi > other.hi:
            hi, hi_open = other.hi, other.hi_open
        else:
            hi, hi_open = self.hi, self.hi_open or other.hi_open
        if not lo < hi:
            return None
        return Interval(lo, hi, lo_open, hi_open)

    def affine_image(self, slope: Fraction, offset: Fraction) -> "Interval":
        a = slope * self.lo + offset
        b = slope * self.hi + offset
        if slope > 0:
            return Interval(a, b, self.lo_open, self.hi_open)
        if slope < 0:
            return Interval(b, a, self.hi_open, self.lo_open)
        raise ValueError("affine image under a zero slope is degenerate")

    def affine_preimage(self, slope: Fraction, offset: Fraction) -> "Interval":
        return self.affine_image(1 / slope, -offset / slope)

    def quartiles(self) -> tuple[Fraction, Fraction, Fraction]:
        q = self.length / 4
        return (self.lo + q, self.lo + 2 * q, self.lo + 3 * q)

    def dump(self) -> str:
        return f"{format_rational(self.lo)}..{format_rational(self.hi)}"

    def __str__(self) -> str:
        left = "(" if self.lo_open else "["
        right = ")" if self.hi_open else "]"
        return f"{left}{self.lo},{self.hi}{right}"


def merge_closures(intervals: Iterable[Interval]) -> list[tuple[Fraction, Fraction]]:
    """Union of closures as sorted disjoint ``(lo, hi)`` pairs; touching pieces merge."""
    pairs = sorted(iv.closure_key for iv in intervals)
    merged: list[list[Fraction]] = []
    for lo, hi in pairs:
        if merged and lo <= merged[-1][1]:
            if hi > merged[-1][1]:
                merged[-1][1] = hi
        else:
            merged.append([lo, hi])
    return [(a, b) for a, b in merged]


def union_length(intervals: Iterable[Interval]) -> Fraction:
    return sum((b - a for a, b in merge_closures(intervals)), Fraction(0))
