"""Exception hierarchy shared across the package."""


class BangbandError(Exception):
    """Base class for all package-specific errors."""


class IncompatibleFieldError(BangbandError):
    """Fields live on different meshes or have different component counts."""


class EmptyBankError(BangbandError):
    """A weak-gap evaluation was requested against an empty test bank."""


class ConfigError(BangbandError):
    """Invalid or unknown configuration input."""


class IntegrationFailureError(BangbandError):
    """ODE forward integration produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NewtonConvergenceError(BangbandError):
    """Damped Newton stagnated before reaching the residual tolerance."""


class SolverInternalError(BangbandError):
    """Internal inconsistency detected inside an optimization run."""


class PreconditionError(BangbandError):
    """A probe or operation was called outside its stated preconditions."""


class RadiusExceededError(PreconditionError):
    """Requested perturbation radius exceeds the certified one."""


class NoSplitError(PreconditionError):
    """Midpoint-split construction applied to an everywhere-extremal field."""


class LinearProgramError(BangbandError):
    """The dense simplex routine failed (unbounded or infeasible program)."""
