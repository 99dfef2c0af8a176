"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input lies outside the documented domain of an operation."""


class ConfigurationError(ValueError):
    """A problem or geometry description is malformed or inconsistent.

    ``field_path`` locates the offending entry when the error comes from
    config parsing (e.g. ``"problem.operator.k"``).
    """

    def __init__(self, message, field_path=None):
        super().__init__(message if field_path is None else f"{field_path}: {message}")
        self.field_path = field_path


class AdmissibilityError(ValueError):
    """A point left the operator's domain cone.

    ``constraint`` names the violated defining inequality, ``where`` is the
    offending grid location (flat index or multi-index) when known, and
    ``margin`` is the worst constraint value.
    """

    def __init__(self, message, constraint=None, where=None, margin=None):
        super().__init__(message)
        self.constraint = constraint
        self.where = where
        self.margin = margin


class ProbeInconclusive(RuntimeError):
    """A ray probe could not certify convergence of its normal sequence."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NewtonStall(RuntimeError):
    """Line search exhausted without an admissible descent step."""

    def __init__(self, message, worst_point=None, state=None):
        super().__init__(message)
        self.worst_point = worst_point
        self.state = state


class LinearSolveFailure(RuntimeError):
    """The linearized elliptic system could not be solved."""


class HomotopyStall(RuntimeError):
    """Continuation step size hit its floor; carries the last good state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
