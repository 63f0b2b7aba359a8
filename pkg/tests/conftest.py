import sys
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import strategies as st

from pimtower.core.intervals import Interval
from pimtower.core.maps import affine_map, doubling_map, full_branch_map, markov_map
from pimtower.inducing import build_canonical_scheme, certify_nice

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).resolve().parent.parent / "data"

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture
def d():
    return doubling_map()


@pytest.fixture
def m():
    return markov_map()


def canonical(fmap, lo, hi, tau_max, horizon=10):
    cert = certify_nice(fmap, Interval(Fraction(lo), Fraction(hi)), horizon)
    return build_canonical_scheme(fmap, cert, tau_max)


@pytest.fixture
def d_scheme(d):
    return canonical(d, Fraction(1, 3), Fraction(2, 3), 3)


# -- random maps -------------------------------------------------------------------

GRID = 12


@st.composite
def expanding_maps(draw, max_branches=3):
    """Rational piecewise-affine maps of [0,1] with every |slope| > 1.

    Breakpoints and image endpoints sit on the 1/GRID lattice; each branch
    image is a lattice interval strictly longer than its domain.
    """
    k = draw(st.integers(2, max_branches))
    cuts = sorted(draw(st.sets(st.integers(1, GRID - 1), min_size=k - 1, max_size=k - 1)))
    breaks = [Fraction(c, GRID) for c in [0, *cuts, GRID]]
    slopes, offsets = [], []
    for lo, hi in zip(breaks, breaks[1:]):
        width = int((hi - lo) * GRID)
        a = draw(st.integers(0, GRID - width - 1))
        b = draw(st.integers(a + width + 1, GRID))
        ilo, ihi = Fraction(a, GRID), Fraction(b, GRID)
        s = (ihi - ilo) / (hi - lo)
        if draw(st.booleans()):
            slopes.append(s)
            offsets.append(ilo - s * lo)
        else:
            slopes.append(-s)
            offsets.append(ihi + s * lo)
    return affine_map(breaks, slopes, offsets)


@st.composite
def full_branch_maps(draw, max_branches=3):
    k = draw(st.integers(2, max_branches))
    cuts = sorted(draw(st.sets(st.integers(1, GRID - 1), min_size=k - 1, max_size=k - 1)))
    breaks = [Fraction(c, GRID) for c in [0, *cuts, GRID]]
    increasing = draw(st.lists(st.booleans(), min_size=k, max_size=k))
    return full_branch_map(breaks, increasing)


def fixed_points(fmap):
    """One fixed point per full branch: solve s x + c = x inside the branch closure."""
    pts = set()
    for b in fmap.branches:
        if b.slope != 1:
            x = b.offset / (1 - b.slope)
            if b.domain.lo <= x <= b.domain.hi:
                pts.add(x)
    return sorted(pts)


@st.composite
def full_branch_nice_sets(draw):
    """A full-branch map and an interval between two of its fixed points, which is nice."""
    fmap = draw(full_branch_maps())
    pts = fixed_points(fmap)
    i = draw(st.integers(0, len(pts) - 2))
    j = draw(st.integers(i + 1, len(pts) - 1))
    return fmap, Interval(pts[i], pts[j])
