"""Exception hierarchy shared by all solver modules."""


class MF2PopError(Exception):
    """Base class for every error raised by the package."""


class DomainError(MF2PopError, ValueError):
    """An argument lies outside the domain of an operation (bad index, bad regime)."""


class ParameterError(MF2PopError, ValueError):
    """Invalid model or solver parameters, detected at construction time."""


class NumericalError(MF2PopError, RuntimeError):
    """A numerical kernel broke down (singular solve, NaN, overflow)."""


class CFLError(NumericalError):
    """The explicit time step is too large for the advection speed."""

    def __init__(self, max_drift, dt, dx):
        self.max_drift = float(max_drift)
        self.dt = float(dt)
        self.dx = float(dx)
        super().__init__(
            f"CFL violated: max|drift|={self.max_drift:.6g} requires dt <= "
            f"{self.dx / self.max_drift:.6g}, got dt={self.dt:.6g}"
        )


class BlowUpError(NumericalError):
    """Non-finite values appeared during a time sweep."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (time index {step})"
        super().__init__(message)
