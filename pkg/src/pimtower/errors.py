"""Exception hierarchy shared by every pimtower module."""

from __future__ import annotations


class PimError(Exception):
    """Base class for all toolkit errors."""


class BoundaryHit(PimError):
    """An orbit landed on the partition boundary before the requested step count."""

    def __init__(self, step: int, point=None):
        self.step = step
        self.point = point
        msg = f"orbit hits the partition boundary at step {step}"
        if point is not None:
            msg += f" (point {point})"
        super().__init__(msg)


class BudgetExceeded(PimError):
    """An enumeration passed its configured cap."""

    def __init__(self, what: str, budget: int):
        self.budget = budget
        super().__init__(f"{what} budget of {budget} exceeded")


class CellBudgetExceeded(BudgetExceeded):
    def __init__(self, budget: int):
        super().__init__("cell", budget)


class ElementBudgetExceeded(BudgetExceeded):
    def __init__(self, budget: int):
        super().__init__("element", budget)


class Unsaturated(PimError):
    """The truncated tower does not contain a required element."""


class PreconditionUnverified(PimError):
    """A required condition report is absent or not passing."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class ZeroBaseMass(PimError):
    pass


class NotMarkov(PimError):
    pass


class NoStationaryDensity(PimError):
    pass


class SchemeConstructionError(PimError):
    """Overlapping pullbacks violate the nested-or-disjoint structure of a nice set."""


class ExactModeRequired(PimError):
    pass


class ParseError(PimError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
