"""Cylinders of the induced system, induced potentials, variations and summability sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import mpmath
import numpy as np
import sympy

from .core.intervals import Interval, format_rational
from .core.maps import PiecewiseMap
from .core.partition import word_piece
from .errors import BoundaryHit
from .inducing import BasicElement, InducingScheme
from .reports import DEFAULT_PRECISION_BITS, ConditionReport, Numeric, Verdict, render_value

DEFAULT_WORD_BUDGET = 10**5


# -- symbolic logarithms -----------------------------------------------------------


@dataclass(frozen=True)
class LogLinear:
    """``rational + Σ c_p log p`` over primes p, kept exact until rendered."""

    rational: Fraction = Fraction(0)
    logs: tuple[tuple[int, Fraction], ...] = ()

    @classmethod
    def log_of(cls, q: Fraction, coeff: Fraction = Fraction(1)) -> "LogLinear":
        if q <= 0:
            raise ValueError("log of a nonpositive number")
        terms: dict[int, Fraction] = {}
        for p, e in sympy.factorint(q.numerator).items():
            terms[int(p)] = terms.get(int(p), Fraction(0)) + coeff * e
        for p, e in sympy.factorint(q.denominator).items():
            terms[int(p)] = terms.get(int(p), Fraction(0)) - coeff * e
        return cls(Fraction(0), tuple(sorted((p, c) for p, c in terms.items() if c)))

    def __add__(self, other: Union["LogLinear", Fraction, int]) -> "LogLinear":
        if not isinstance(other, LogLinear):
            return LogLinear(self.rational + Fraction(other), self.logs)
        terms = dict(self.logs)
        for p, c in other.logs:
            terms[p] = terms.get(p, Fraction(0)) + c
        return LogLinear(self.rational + other.rational, tuple(sorted((p, c) for p, c in terms.items() if c)))

    __radd__ = __add__

    def scaled(self, c: Fraction) -> "LogLinear":
        return LogLinear(self.rational * c, tuple((p, k * c) for p, k in self.logs if k * c))

    @property
    def is_rational(self) -> bool:
        return not self.logs

    def mp(self) -> mpmath.mpf:
        val = mpmath.mpf(self.rational.numerator) / self.rational.denominator
        for p, c in self.logs:
            val += mpmath.mpf(c.numerator) / c.denominator * mpmath.log(p)
        return val

    def __float__(self) -> float:
        with mpmath.workprec(DEFAULT_PRECISION_BITS):
            return float(self.mp())

    def exp_exact(self) -> Optional[Fraction]:
        """exp of the value when it is rational, else ``None``."""
        if self.rational != 0 or any(c.denominator != 1 for _, c in self.logs):
            return None
        out = Fraction(1)
        for p, c in self.logs:
            out *= Fraction(p) ** int(c)
        return out

    def __str__(self) -> str:
        parts = []
        if self.rational or not self.logs:
            parts.append(str(self.rational))
        for p, c in self.logs:
            parts.append(f"{c}*log({p})")
        return "+".join(parts).replace("+-", "-")


# -- potentials --------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantPotential:
    c: Fraction

    kind = "constant"


@dataclass(frozen=True)
class AffinePotential:
    """φ(x) = a_i x + b_i on branch domain i."""

    coeffs: tuple[tuple[Fraction, Fraction], ...]

    kind = "affine"

    @classmethod
    def identity(cls, fmap: PiecewiseMap) -> "AffinePotential":
        return cls(tuple((Fraction(1), Fraction(0)) for _ in fmap.branches))


@dataclass(frozen=True)
class NegLogDerivative:
    """φ = -t log|f'|."""

    t: Fraction

    kind = "neglog"


Potential = Union[ConstantPotential, AffinePotential, NegLogDerivative]
PotentialValue = Union[Fraction, LogLinear]


def induced_potential(
    scheme: InducingScheme, fmap: PiecewiseMap, phi: Potential, J: BasicElement, x: Fraction
) -> PotentialValue:
    """φ̄(x) = Σ_{k<τ(J)} φ(fᵏx), exact (log terms stay symbolic)."""
    fmap.require_exact("induced potentials")
    if not J.interval.contains(x):
        raise ValueError(f"{x} is not in {J.interval}")
    if isinstance(phi, ConstantPotential):
        return J.tau * Fraction(phi.c)
    total = Fraction(0)
    deriv = Fraction(1)
    y = x
    for k, b in enumerate(J.branch_word):
        if fmap.branch_index(y) != b:
            raise BoundaryHit(k, y)
        br = fmap.branches[b]
        if isinstance(phi, AffinePotential):
            a, c = phi.coeffs[b]
            total += a * y + c
        else:
            deriv *= abs(br.slope)
        y = br.apply(y)
    if isinstance(phi, NegLogDerivative):
        return LogLinear.log_of(deriv, -Fraction(phi.t))
    return total


def _induced_affine(fmap: PiecewiseMap, phi: AffinePotential, J: BasicElement) -> Fraction:
    """Slope of φ̄ on J (φ̄ is affine there)."""
    slope = Fraction(0)
    comp = Fraction(1)
    for b in J.branch_word:
        slope += phi.coeffs[b][0] * comp
        comp *= fmap.branches[b].slope
    return slope


def _sup_exp_log(fmap: PiecewiseMap, phi: Potential, J: BasicElement) -> LogLinear:
    """log of sup over J of exp φ̄, i.e. sup φ̄ (attained at an endpoint for affine φ)."""
    if isinstance(phi, ConstantPotential):
        return LogLinear(J.tau * Fraction(phi.c))
    if isinstance(phi, NegLogDerivative):
        deriv = Fraction(1)
        for b in J.branch_word:
            deriv *= abs(fmap.branches[b].slope)
        return LogLinear.log_of(deriv, -Fraction(phi.t))
    slope = _induced_affine(fmap, phi, J)
    end = J.interval.hi if slope >= 0 else J.interval.lo
    value = Fraction(0)
    y = end
    for b in J.branch_word:
        a, c = phi.coeffs[b]
        value += a * y + c
        y = fmap.branches[b].apply(y)
    return LogLinear(value)


# -- cylinders ---------------------------------------------------------------------


@dataclass(frozen=True)
class Cylinder:
    word: tuple[int, ...]
    interval: Optional[Interval]
    diameter: Fraction

    @property
    def empty(self) -> bool:
        return self.interval is None

    def render(self) -> str:
        w = ",".join(map(str, self.word))
        if self.interval is None:
            return f"cyl {w} empty diam=0/1"
        return f"cyl {w} {self.interval.dump()} diam={format_rational(self.diameter)}"


def induced_branches(scheme: InducingScheme, fmap: PiecewiseMap) -> list[tuple[Fraction, Fraction]]:
    """The affine map F|J = f^τ(J) as (slope, offset) for each element."""
    out = []
    for e in scheme.elements:
        piece = word_piece(fmap, e.branch_word)
        out.append((piece.slope, piece.offset))
    return out


def _extend_left(scheme, branches, b: int, tail: Optional[Interval]) -> Optional[Interval]:
    """[b, tail] = closure(J_b) ∩ F_b⁻¹(closure(tail))."""
    if tail is None:
        return None
    slope, offset = branches[b]
    pre = tail.closure().affine_preimage(slope, offset)
    return pre.intersect(scheme.elements[b].interval.closure())


def cylinder(scheme: InducingScheme, fmap: PiecewiseMap, word: Sequence[int]) -> Cylinder:
    """[b₁..bₙ] by successive closed pullbacks, cut down to the open J_{b₁} at the end."""
    fmap.require_exact("cylinders")
    if not word:
        raise ValueError("cylinder words must be nonempty")
    if any(not 0 <= b < len(scheme) for b in word):
        raise IndexError("word index outside the scheme")
    branches = induced_branches(scheme, fmap)
    cur: Optional[Interval] = scheme.elements[word[-1]].interval.closure()
    for b in reversed(word[:-1]):
        cur = _extend_left(scheme, branches, b, cur)
    if cur is not None:
        cur = cur.intersect(scheme.elements[word[0]].interval)
    if cur is None:
        return Cylinder(tuple(word), None, Fraction(0))
    return Cylinder(tuple(word), cur, cur.length)


def enumerate_cylinders(
    scheme: InducingScheme, fmap: PiecewiseMap, n_max: int, word_budget: int = DEFAULT_WORD_BUDGET
) -> tuple[dict[int, list[Cylinder]], bool]:
    """All cylinders of length 1..n_max in lexicographic order, and a flag set if the budget cut in."""
    fmap.require_exact("cylinders")
    branches = induced_branches(scheme, fmap)
    k = len(scheme)
    closed = {(b,): scheme.elements[b].interval.closure() for b in range(k)}
    levels: dict[int, list[Cylinder]] = {}
    sampled = False
    count = 0
    for n in range(1, n_max + 1):
        if n > 1:
            nxt = {}
            for b in range(k):
                for w, iv in closed.items():
                    if count + len(nxt) >= word_budget:
                        sampled = True
                        break
                    nxt[(b,) + w] = _extend_left(scheme, branches, b, iv)
                if sampled:
                    break
            closed = dict(sorted(nxt.items()))
        out = []
        for w, iv in closed.items():
            cut = None if iv is None else iv.intersect(scheme.elements[w[0]].interval)
            out.append(Cylinder(w, cut, Fraction(0) if cut is None else cut.length))
        count += len(out)
        levels[n] = out
        if sampled:
            break
    return levels, sampled


def check_H2(
    scheme: InducingScheme,
    fmap: PiecewiseMap,
    n_max: int,
    word_budget: int = DEFAULT_WORD_BUDGET,
    rate: Fraction = Fraction(1, 2),
) -> ConditionReport:
    """Cylinders are nonempty and their maximal diameter decays.

    Every cylinder must be nonempty because each element maps onto the whole
    base.  Passes at depth when the maximal diameter never grows and ends
    below ``|base| * rate ** n_max``.
    """
    if not scheme.elements:
        return ConditionReport("H2", Verdict.INCONCLUSIVE, n_max, info={"reason": "empty-scheme"})
    levels, sampled = enumerate_cylinders(scheme, fmap, n_max, word_budget)
    decay = []
    for n, cyls in levels.items():
        for c in cyls:
            if c.empty:
                return ConditionReport("H2", Verdict.FAIL, n, witness={"word": list(c.word), "cylinder": "empty"})
        decay.append(max(c.diameter for c in cyls))
    depth = max(levels)
    threshold = scheme.base.length * rate**depth
    info = {"threshold": threshold, "words": sum(len(c) for c in levels.values()), "sampled": sampled}
    monotone = all(b <= a for a, b in zip(decay, decay[1:]))
    contracting = depth == 1 or decay[-1] < decay[0]
    if monotone and contracting and decay[-1] <= threshold:
        return ConditionReport("H2", Verdict.PASS_AT_DEPTH, depth, numeric_data=decay, info=info)
    return ConditionReport("H2", Verdict.INCONCLUSIVE, depth, numeric_data=decay, info=info)


# -- variations --------------------------------------------------------------------


@dataclass(frozen=True)
class HolderFit:
    variations: tuple[tuple[int, Fraction], ...]
    fitted_A: float
    fitted_gamma: float
    verdict: str  # consistent | violated | inconclusive


@dataclass(frozen=True)
class Variation:
    n: int
    value: Fraction
    lower_bound: bool = False

    def render(self) -> str:
        flag = " lower_bound=1" if self.lower_bound else ""
        return f"Vn n={self.n} value={format_rational(self.value)}{flag}"


def variation_Vn(
    scheme: InducingScheme,
    fmap: PiecewiseMap,
    phi: Potential,
    n: int,
    word_budget: int = DEFAULT_WORD_BUDGET,
) -> Variation:
    """V_n(φ̄) = sup over n-cylinders of the oscillation of φ̄.

    φ̄ is affine on each element, so the oscillation over a cylinder is
    |slope of φ̄ on J_{b₁}| times the cylinder's diameter.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not isinstance(phi, AffinePotential) or not scheme.elements:
        # constant and -t log|f'| potentials are constant on each element for affine maps
        return Variation(n, Fraction(0))
    slopes = [abs(_induced_affine(fmap, phi, e)) for e in scheme.elements]
    levels, sampled = enumerate_cylinders(scheme, fmap, n, word_budget)
    cyls = levels.get(n) or levels[max(levels)]
    value = max(slopes[c.word[0]] * c.diameter for c in cyls)
    return Variation(n, value, sampled or n not in levels)


def holder_fit(variations: Sequence[Variation]) -> HolderFit:
    """Least squares on log Vₙ, then A raised to the envelope so Vₙ ≤ Aγⁿ on the range."""
    data = tuple((v.n, v.value) for v in variations)
    nonzero = [(n, v) for n, v in data if v > 0]
    if not nonzero:
        return HolderFit(data, 0.0, 0.0, "consistent")
    if len(nonzero) < 2:
        return HolderFit(data, float(nonzero[0][1]), 1.0, "inconclusive")
    ns = np.array([n for n, _ in nonzero], dtype=float)
    logs = np.array([math.log(v) for _, v in nonzero])
    slope, _ = np.polyfit(ns, logs, 1)
    gamma = float(math.exp(slope))
    A = max(float(v) / gamma**n for n, v in nonzero)
    verdict = "consistent" if gamma < 1 else "inconclusive"
    return HolderFit(data, A, gamma, verdict)


def variation_range(
    scheme: InducingScheme, fmap: PiecewiseMap, phi: Potential, n_max: int, word_budget: int = DEFAULT_WORD_BUDGET
) -> HolderFit:
    return holder_fit([variation_Vn(scheme, fmap, phi, n, word_budget) for n in range(1, n_max + 1)])


# -- summability -------------------------------------------------------------------


@dataclass(frozen=True)
class SumRecord:
    name: str
    N: int
    partial: Union[Fraction, Numeric]
    tail: Optional[Union[Fraction, str]]
    verdict: Verdict
    info: dict = field(default_factory=dict)

    def render(self) -> str:
        tail = "none" if self.tail is None else render_value(self.tail)
        extra = "".join(f" {k}={render_value(v)}" for k, v in self.info.items())
        return f"{self.name} N={self.N} partial={render_value(self.partial)} tail={tail} verdict={self.verdict.value}{extra}"


def _mp(q) -> mpmath.mpf:
    if isinstance(q, Fraction):
        return mpmath.mpf(q.numerator) / q.denominator
    return mpmath.mpf(q)


def _exp(value: LogLinear) -> Union[Fraction, mpmath.mpf]:
    exact = value.exp_exact()
    if exact is not None:
        return exact
    return mpmath.exp(value.mp())


def recc_summability(
    scheme: InducingScheme,
    fmap: PiecewiseMap,
    phi: Potential,
    epsilon: Fraction,
    P_L_bound: float,
    N: int,
) -> tuple[SumRecord, SumRecord]:
    """Partial sums of Σ sup exp φ̄ and Σ τ sup exp(φ̄ - (P_L - ε)τ) over elements with τ ≤ N.

    The first sum gets an exact tail bound for φ = -t log|f'| with t ≥ 1:
    each term equals (|J|/|base|)^t because F maps J affinely onto the base,
    and the missing terms cover at most the length left uncovered at N.
    P_L is never computed; ``P_L_bound`` is the caller's value.
    """
    fmap.require_exact("summability sums")
    if N > scheme.tau_max:
        raise ValueError(f"scheme built only to tau_max={scheme.tau_max} < N={N}")
    elems = [e for e in scheme.elements if e.tau <= N]
    with mpmath.workprec(DEFAULT_PRECISION_BITS):
        terms = [_exp(_sup_exp_log(fmap, phi, e)) for e in elems]
        if all(isinstance(t, Fraction) for t in terms):
            partial1: Union[Fraction, mpmath.mpf] = sum(terms, Fraction(0))
        else:
            partial1 = mpmath.fsum(_mp(t) for t in terms)
        covered_N = sum((e.interval.length for e in elems), Fraction(0))
        deficit_N = scheme.base.length - covered_N
        tail: Optional[Union[Fraction, str]] = None
        info: dict = {}
        if isinstance(phi, NegLogDerivative) and Fraction(phi.t) >= 1:
            t = Fraction(phi.t)
            ratio = deficit_N / scheme.base.length
            if t.denominator == 1:
                tail = ratio ** int(t)
                verdict1 = Verdict.PASS
            else:
                tail = Numeric(float(_mp(ratio) ** _mp(t)))
                verdict1 = Verdict.PASS
        elif isinstance(phi, ConstantPotential) and Fraction(phi.c) >= 0 and deficit_N > 0 and any(
            e.tau == N for e in elems
        ):
            tail = "growing"
            info = {"terms": len(elems), "min_term": 1}
            verdict1 = Verdict.FAIL
        else:
            verdict1 = Verdict.INCONCLUSIVE
        p1 = partial1 if isinstance(partial1, Fraction) else Numeric(float(partial1))
        if verdict1 is Verdict.FAIL:
            info = {**info, "witness": "terms-at-least-1"}
        sum1 = SumRecord("sum1", N, p1, tail, verdict1, info)

        shift = _mp(P_L_bound) - _mp(Fraction(epsilon))
        per_level: dict[int, mpmath.mpf] = {}
        for e in elems:
            log_sup = _sup_exp_log(fmap, phi, e).mp()
            term = e.tau * mpmath.exp(log_sup - shift * e.tau)
            per_level[e.tau] = per_level.get(e.tau, mpmath.mpf(0)) + term
        partial2 = sum(per_level.values(), mpmath.mpf(0))
        levels = sorted(per_level)
        if len(levels) >= 2 and per_level[levels[-1]] < per_level[levels[-2]]:
            flag = "decaying"
        elif len(levels) >= 2:
            flag = "growing"
        else:
            flag = "unknown"
        sum2 = SumRecord("sum2", N, Numeric(float(partial2)), flag, Verdict.INCONCLUSIVE, {"P_L_bound": P_L_bound, "epsilon": Fraction(epsilon)})
    return sum1, sum2
