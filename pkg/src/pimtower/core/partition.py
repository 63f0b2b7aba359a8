"""Monotonicity pieces of f^n and the refined partition P v f^-1 P v ... v f^-(n-1) P."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Optional, Sequence

from ..errors import CellBudgetExceeded
from .intervals import Interval
from .maps import PiecewiseMap, inverse_branch

DEFAULT_CELL_BUDGET = 10**6


@dataclass(frozen=True)
class Piece:
    """A cell on which f^n is a homeomorphism, with its branch word and image.

    For affine maps the composed map ``f^n(x) = slope*x + offset`` is carried
    along so pullbacks cost O(1); smooth branches replay the word instead.
    """

    cell: Interval
    word: tuple[int, ...]
    image: Interval
    slope: Optional[Fraction] = None
    offset: Optional[Fraction] = None

    @property
    def depth(self) -> int:
        return len(self.word)

    def forward(self, fmap: PiecewiseMap, x: Fraction) -> Fraction:
        if self.slope is not None:
            return self.slope * x + self.offset
        for i in self.word:
            x = fmap.branches[i].apply(x)
        return x

    def forward_interval(self, fmap: PiecewiseMap, iv: Interval) -> Interval:
        if self.slope is not None:
            return iv.affine_image(self.slope, self.offset)
        for i in self.word:
            iv = fmap.branches[i].image(iv)
        return iv

    def pullback(self, fmap: PiecewiseMap, target: Optional[Interval]) -> Optional[Interval]:
        """Points of the cell that f^n sends into ``target``."""
        if target is None:
            return None
        target = target.intersect(self.image)
        if target is None:
            return None
        if self.slope is not None:
            return target.affine_preimage(self.slope, self.offset).intersect(self.cell)
        for i in reversed(self.word):
            target = inverse_branch(fmap, i, target)
            if target is None:
                return None
        return target.intersect(self.cell)


def first_pieces(fmap: PiecewiseMap) -> list[Piece]:
    out = []
    for i, b in enumerate(fmap.branches):
        img = b.image(b.domain)
        if b.is_affine:
            out.append(Piece(b.domain, (i,), img, b.slope, b.offset))
        else:
            out.append(Piece(b.domain, (i,), img))
    return out


def split_piece(fmap: PiecewiseMap, piece: Piece) -> list[Piece]:
    """Children of ``piece`` one level deeper, sorted by left endpoint."""
    children = []
    for i, b in enumerate(fmap.branches):
        sub = piece.image.intersect(b.domain)
        if sub is None:
            continue
        cell = piece.pullback(fmap, sub)
        if cell is None:
            continue
        img = b.image(sub)
        if piece.slope is not None:
            children.append(
                Piece(cell, piece.word + (i,), img, b.slope * piece.slope, b.slope * piece.offset + b.offset)
            )
        else:
            children.append(Piece(cell, piece.word + (i,), img))
    children.sort(key=lambda p: p.cell.lo)
    return children


def next_pieces(
    fmap: PiecewiseMap,
    pieces: Sequence[Piece],
    budget: int = DEFAULT_CELL_BUDGET,
    keep: Optional[Callable[[Piece], bool]] = None,
) -> list[Piece]:
    out: list[Piece] = []
    for p in pieces:
        for child in split_piece(fmap, p):
            if keep is None or keep(child):
                out.append(child)
        if len(out) > budget:
            raise CellBudgetExceeded(budget)
    out.sort(key=lambda p: p.cell.lo)
    return out


def iter_levels(
    fmap: PiecewiseMap,
    n_max: int,
    budget: int = DEFAULT_CELL_BUDGET,
    keep: Optional[Callable[[Piece], bool]] = None,
) -> Iterator[tuple[int, list[Piece]]]:
    """Yield ``(n, pieces of f^n)`` for n = 1..n_max, optionally pruned by ``keep``.

    Pruning drops a piece together with all of its descendants, so ``keep``
    must reject only pieces none of whose sub-cells can matter to the caller.
    """
    pieces = [p for p in first_pieces(fmap) if keep is None or keep(p)]
    if len(pieces) > budget:
        raise CellBudgetExceeded(budget)
    for n in range(1, n_max + 1):
        if n > 1:
            pieces = next_pieces(fmap, pieces, budget, keep)
        yield n, pieces


@dataclass(frozen=True)
class RefinedPartition:
    depth: int
    pieces: tuple[Piece, ...]
    max_diameter: Fraction

    @property
    def cells(self) -> list[Interval]:
        return [p.cell for p in self.pieces]

    def __len__(self) -> int:
        return len(self.pieces)


def make_partition(n: int, pieces: Sequence[Piece]) -> RefinedPartition:
    return RefinedPartition(n, tuple(pieces), max(p.cell.length for p in pieces))


def refine_partition(fmap: PiecewiseMap, n: int, cell_budget: int = DEFAULT_CELL_BUDGET) -> RefinedPartition:
    if n < 1:
        raise ValueError("refinement depth must be at least 1")
    pieces: list[Piece] = []
    for _, pieces in iter_levels(fmap, n, cell_budget):
        pass
    return make_partition(n, pieces)


def word_piece(fmap: PiecewiseMap, word: Sequence[int]) -> Optional[Piece]:
    """The cell of points whose first ``len(word)`` branches follow ``word``, if nonempty."""
    if not word:
        raise ValueError("word must be nonempty")
    piece: Optional[Piece] = first_pieces(fmap)[word[0]]
    for b in word[1:]:
        piece = next((c for c in split_piece(fmap, piece) if c.word[-1] == b), None)
        if piece is None:
            return None
    return piece
