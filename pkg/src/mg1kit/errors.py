"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MG1Error(Exception):
    exit_code = 1


class ValidationError(MG1Error, ValueError):
    """Input blocks violate stochasticity, sign or shape constraints."""

    exit_code = 2

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class WindowError(MG1Error, ValueError):
    """A computation window or truncation level is too small."""

    exit_code = 3

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class InapplicableError(MG1Error, ValueError):
    """The requested method does not apply to this input."""

    exit_code = 65


class ConvergenceError(MG1Error, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InconsistencyError(MG1Error, RuntimeError):
    """An internal certificate failed, pointing at an upstream numerical error."""


class DivergenceError(MG1Error, ArithmeticError):
    """A requested series does not converge for this tail."""
