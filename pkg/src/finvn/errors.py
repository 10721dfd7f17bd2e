"""Exception hierarchy.

Every error carries a ``details`` dict of numeric diagnostics so the CLI can
serialize failures without parsing messages.
"""

from __future__ import annotations

from typing import Any


class FinvnError(Exception):
    """Base class for all library errors."""

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details = details

    @property
    def name(self) -> str:
        return type(self).__name__


# algebra
class NotHermitian(FinvnError):
    pass


class NotPSD(FinvnError):
    pass


class Singular(FinvnError):
    pass


class ShapeMismatch(FinvnError, ValueError):
    pass


class ResourceLimit(FinvnError):
    pass


# sequences and gauges
class HorizonTooShort(FinvnError):
    pass


class NotAlmostConvergent(FinvnError):
    pass


class NotAGauge(FinvnError):
    pass


class DimensionTooLarge(FinvnError):
    pass


# superoperators
class LawViolation(FinvnError):
    def __init__(self, identity: str, defect: float, **details: Any) -> None:
        super().__init__(f"law {identity!r} violated: defect {defect:.3e}", identity=identity,
                         defect=defect, **details)
        self.identity = identity
        self.defect = defect


class Not2Positive(FinvnError):
    pass


# limits and similarity gates
class NotDominated(FinvnError):
    pass


class NotRegularGauge(FinvnError):
    pass


class NotCompatible(FinvnError):
    pass


class NonCommutingFamily(FinvnError):
    pass


class NoConvergence(FinvnError):
    pass


class SingularEI(FinvnError):
    pass


class NotC1(SingularEI):
    """E(I) has a (numerically) null direction: some orbit dies relative to the gauge."""


class UnitarityDefect(FinvnError):
    pass


class CommutationDefect(FinvnError):
    pass


# cli
class ConfigError(FinvnError, ValueError):
    """Config file is unreadable, schema-invalid, or references unknown names."""
