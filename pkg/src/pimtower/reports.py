"""Condition reports and their line-oriented rendering."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Optional, Sequence

import mpmath

from .core.intervals import Interval

DEFAULT_PRECISION_BITS = 50


class Verdict(str, enum.Enum):
    PASS = "pass"
    PASS_AT_DEPTH = "pass-at-depth"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"
    INCONCLUSIVE_NUMERIC = "inconclusive-numeric"

    @property
    def exit_code(self) -> int:
        if self in (Verdict.PASS, Verdict.PASS_AT_DEPTH):
            return 0
        if self is Verdict.FAIL:
            return 1
        return 2

    @property
    def ok(self) -> bool:
        return self.exit_code == 0

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Numeric:
    """A floating rendering of a transcendental quantity, tagged with its precision."""

    value: float
    bits: int = DEFAULT_PRECISION_BITS

    def __float__(self) -> float:
        return self.value

    def __str__(self) -> str:
        with mpmath.workprec(self.bits):
            digits = max(1, int(self.bits * 0.30103))
            text = mpmath.nstr(mpmath.mpf(self.value), digits)
        return f"{text}@p{self.bits}"


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    verdict: Verdict
    depth: Optional[int] = None
    witness: Optional[Mapping[str, Any]] = None
    numeric_data: Sequence[Any] = ()
    info: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "verdict", Verdict(self.verdict))
        if self.verdict is Verdict.FAIL and not self.witness:
            raise ValueError(f"{self.condition}: a fail verdict needs a witness")
        if self.verdict is Verdict.PASS_AT_DEPTH and self.depth is None:
            raise ValueError(f"{self.condition}: pass-at-depth needs a depth")

    @property
    def ok(self) -> bool:
        return self.verdict.ok

    def downgraded(self, tolerance: float) -> "ConditionReport":
        """Numeric-mode copy: every verdict becomes inconclusive-numeric."""
        info = dict(self.info)
        info["numeric_from"] = self.verdict.value
        info["tolerance"] = tolerance
        return ConditionReport(
            self.condition, Verdict.INCONCLUSIVE_NUMERIC, self.depth, self.witness, self.numeric_data, info
        )

    def render(self) -> str:
        parts = [self.condition, self.verdict.value]
        if self.witness:
            parts.append("witness")
            parts.extend(f"{k}={render_value(v)}" for k, v in self.witness.items())
        if self.depth is not None:
            parts.append(f"depth={self.depth}")
        parts.extend(f"{k}={render_value(v)}" for k, v in self.info.items())
        if self.numeric_data:
            parts.append("data=" + ",".join(render_value(v) for v in self.numeric_data))
        return " ".join(parts)


def render_value(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, float):
        return str(Numeric(v))
    if isinstance(v, Interval):
        return str(v)
    if isinstance(v, (tuple, list)):
        return "[" + ",".join(render_value(x) for x in v) + "]"
    return str(v)


def combined_exit_code(reports: Sequence[ConditionReport]) -> int:
    """Fail dominates inconclusive within a stage; all-pass (or empty) gives 0."""
    codes = {r.verdict.exit_code for r in reports}
    if 1 in codes:
        return 1
    if 2 in codes:
        return 2
    return 0
