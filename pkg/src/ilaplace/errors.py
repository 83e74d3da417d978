"""Exception hierarchy shared by every stage of the computation."""

import numpy as np


class ILaplaceError(Exception):
    """Base class. ``coordinate`` is set by the engine when a failure is
    tied to one re-normalization factor."""

    coordinate = None

    def annotate(self, coordinate):
        self.coordinate = coordinate
        self.args = (f"[coordinate {coordinate}] {self.args[0] if self.args else ''}",) + self.args[1:]
        return self


class NonFiniteObjective(ILaplaceError):
    def __init__(self, x, value=None):
        self.x = np.array(x, dtype=float, copy=True)
        self.value = value
        super().__init__(f"objective is not finite ({value!r}) at x={self.x.tolist()}")


class BudgetExceeded(ILaplaceError):
    pass


class NoConvergence(ILaplaceError):
    pass


class HessianNotPD(ILaplaceError):
    def __init__(self, message, x=None):
        self.x = None if x is None else np.array(x, dtype=float, copy=True)
        if self.x is not None:
            message = f"{message} at x={self.x.tolist()}"
        super().__init__(message)


class UnboundedProfile(ILaplaceError):
    pass


class ToleranceNotMet(ILaplaceError):
    pass


class UnknownModel(ILaplaceError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DimensionTooLarge(ILaplaceError):
    pass
