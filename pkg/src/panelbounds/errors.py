"""Exception types raised across the package."""

from __future__ import annotations


class PanelBoundsError(Exception):
    """Base class for all package errors."""


class ValidationError(PanelBoundsError, ValueError):
    """Invalid user input (malformed panel, bad flag values, ...)."""


class UnbalancedPanel(ValidationError):
    """Some unit does not have exactly T observations."""

    def __init__(self, message: str, rows: list | None = None):
        super().__init__(message)
        self.rows = rows or []


class UnsupportedOutcomeAlphabet(ValidationError):
    """Full outcome enumeration requested for non-binary outcomes."""


class UnknownHistory(ValidationError):
    """A history observed in data is missing from a user-supplied support list."""


class DegenerateDesign(PanelBoundsError, ValueError):
    """The regressor has no within-unit variation."""


class NoIdentifiedUnits(PanelBoundsError, ValueError):
    """No unit has both query values in its regressor history."""


class SignNotIdentified(PanelBoundsError, ValueError):
    """A monotone refinement was requested but no switching history exists."""


class SignConflict(PanelBoundsError, ValueError):
    """Switching histories disagree on the sign of the effect."""


class InvalidDegrees(PanelBoundsError, ValueError):
    """Chi-square degrees of freedom must be a positive integer."""


class UnsupportedExactCells(PanelBoundsError, ValueError):
    """Exact cell probabilities need a discrete individual-effect law."""


class SolverError(PanelBoundsError, RuntimeError):
    """Base class for numerical solver failures."""


class SolverStalled(SolverError):
    """The active-set iteration hit its iteration cap.

    Attributes
    ----------
    best : numpy.ndarray
        Best feasible iterate found before stopping.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class LpInfeasible(SolverError):
    """An effect-bound LP had no feasible point."""


class EmptyRegionDiagnostic(PanelBoundsError, RuntimeError):
    """No candidate passed the goodness-of-fit test.

    Attributes
    ----------
    min_statistic : float
        Smallest statistic observed among the draws.
    """

    def __init__(self, message: str, min_statistic: float):
        super().__init__(message)
        self.min_statistic = min_statistic


class BudgetExceeded(PanelBoundsError, RuntimeError):
    """Not enough accepted candidates were found within the draw budget.

    Attributes
    ----------
    accepted : int
        Number of candidates accepted before the budget ran out.
    """

    def __init__(self, message: str, accepted: int):
        super().__init__(message)
        self.accepted = accepted
