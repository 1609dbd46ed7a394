"""Exception types raised by the solver stack."""


class MultiscaleError(Exception):
    """Base class for all errors raised by :mod:`uams`."""


class ConfigurationError(MultiscaleError, ValueError):
    """Invalid scale vector, solver configuration or experiment spec."""


class FieldEvaluationError(MultiscaleError, ArithmeticError):
    """A field evaluation produced non-finite values.

    Attributes
    ----------
    point : dict
        The phases and state at which the field was evaluated.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point or {}


class DecompositionValidationError(MultiscaleError, ValueError):
    """User supplied closed forms failed the self-check."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class NonConvergenceError(MultiscaleError, RuntimeError):
    """A fixed-point iteration hit its iteration cap.

    Attributes
    ----------
    history : list of float
        Max-norm of successive differences, one entry per iteration.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class StepConvergenceError(NonConvergenceError):
    """The nonlinear solve of one time step did not converge."""

    def __init__(self, message, step, history=(), partial=None):
        super().__init__(message, history)
        self.step = step
        self.partial = partial


class WindowRangeError(MultiscaleError, ValueError):
    """Requested times are not covered by a trajectory."""
