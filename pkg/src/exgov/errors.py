"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class ExgovError(Exception):
    """Base class for all errors raised by exgov."""


class IntegrationError(ExgovError, ArithmeticError):
    def __init__(self, index: int, t: float):
        self.index = index
        self.t = t
        super().__init__(f"non-finite derivative at state index {index} (t={t:.6g} s)")


class SingularMatrixError(ExgovError, ArithmeticError):
    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is singular within tolerance at pivot {pivot}")


class AsymmetricMatrixError(ExgovError, ValueError):
    pass


class ConnectivityError(ExgovError, ValueError):
    pass


class ReductionError(ExgovError, ArithmeticError):
    pass


class UndefinedGradientError(ExgovError, ArithmeticError):
    pass


class DegenerateFeedbackError(ExgovError, ArithmeticError):
    """Reheater power too small for the IP-valve feedback P_e / P_R."""


class UncontrollableVoltageError(ExgovError, ArithmeticError):
    """Excitation input has (almost) no authority over terminal voltage."""


class EmptySystemError(ExgovError, ValueError):
    pass


class ShapeMismatchError(ExgovError, ValueError):
    pass


class InfeasibleOperatingPointError(ExgovError, ValueError):
    pass


class ConfigError(ExgovError, ValueError):
    pass


class BracketError(ExgovError, ValueError):
    pass


class SimulationDiverged(ExgovError):
    """Raised by the time loop when the state blows up or loses synchronism.

    ``trajectory`` holds every sample recorded before the failure.
    """

    def __init__(self, t: float, reason: str, trajectory=None):
        self.t = t
        self.reason = reason
        self.trajectory = trajectory
        super().__init__(f"simulation diverged at t={t:.4f} s: {reason}")
