"""Exception hierarchy.

Configuration problems and numerical guard trips are kept apart so the
command line can map them to distinct exit codes.
"""


class MomentLabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MomentLabError, ValueError):
    """Invalid user input: parameters, indices or configuration files."""


class DomainError(ConfigError):
    """A time or grid request falls outside the configured domain."""


class NumericalGuardError(MomentLabError, ArithmeticError):
    """A runtime accuracy or stability guard tripped."""


class StepSizeError(NumericalGuardError):
    pass


class SingularityError(NumericalGuardError):
    pass


class SingularBasisError(NumericalGuardError):
    def __init__(self, message, condition_number=float("nan")):
        super().__init__(message)
        self.condition_number = condition_number


class UntrustedResultError(NumericalGuardError):
    pass
