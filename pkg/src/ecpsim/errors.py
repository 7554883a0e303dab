"""Exception hierarchy shared by the simulation modules."""


class EcpError(Exception):
    """Base class for all package errors."""


class PreconditionError(EcpError, ValueError):
    """An input violates a documented precondition."""


class ConfigurationError(EcpError, ValueError):
    """A scenario or body description is not physically admissible."""


class GeometryError(EcpError, ArithmeticError):
    """A geometric query is undefined at the requested point."""


class EvaluationError(EcpError, ArithmeticError):
    """A residual produced a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class StepError(EcpError, RuntimeError):
    """The per-step complementarity solve failed after the retry."""

    def __init__(self, message, report=None, z=None, residual=None):
        super().__init__(message)
        self.report = report
        self.z = z
        self.residual = residual


class IntegrityError(EcpError, RuntimeError):
    """An accepted step breaks a physical postcondition."""
