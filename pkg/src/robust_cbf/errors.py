"""Exception hierarchy shared across the package."""


class RobustCBFError(Exception):
    pass


class ContractViolation(RobustCBFError, ValueError):
    """An input violated a documented precondition (shape, sign, symmetry)."""


class InfeasibleError(RobustCBFError):
    """No control satisfies the constraint set."""


class NonConvergenceError(RobustCBFError):
    pass


class NumericalFailure(RobustCBFError, ArithmeticError):
    pass


class SetupError(RobustCBFError):
    """A scenario cannot start: bad initial condition or uncontained parameter."""


class ConfigError(RobustCBFError):
    """Malformed or inconsistent configuration document."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
