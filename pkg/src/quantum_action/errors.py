"""Exception hierarchy shared by all modules."""


class QuantumActionError(Exception):
    """Base class for all package errors."""


class InputError(QuantumActionError, ValueError):
    """Invalid argument (degenerate interval, non-positive time, ...)."""


class NotDoubleWell(QuantumActionError, ValueError):
    pass


class ParityViolation(QuantumActionError, ValueError):
    pass


class LeakageError(QuantumActionError):
    """An eigenfunction is not negligible at the grid boundary."""


class ConvergenceError(QuantumActionError):
    pass


class TruncationError(QuantumActionError):
    """Too few eigenstates for the requested Euclidean time."""


class OutOfGrid(QuantumActionError, ValueError):
    pass


class StepError(QuantumActionError):
    """Transfer-matrix time step too large for the potential range."""


class NonConvergence(QuantumActionError):
    """Boundary-value solver failed to reach the requested tolerance."""


class OptimizerFailure(QuantumActionError):
    pass
