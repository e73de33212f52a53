"""Exception hierarchy shared by every module."""


class SppError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(SppError, ValueError):
    pass


class InfeasibleError(SppError, ValueError):
    """A point lies outside its feasible set."""

    def __init__(self, set_name, violation):
        self.set_name = set_name
        self.violation = violation
        super().__init__(f"point infeasible for set {set_name!r} (violation {violation:.3e})")


class UnsupportedError(SppError, NotImplementedError):
    """No closed form is available for the requested combination."""


class InvalidConstantsError(SppError, ValueError):
    pass


class DegenerateScheduleError(SppError, ValueError):
    pass


class HorizonError(SppError, RuntimeError):
    pass


class ScheduleNotValidatedError(SppError, RuntimeError):
    pass


class InsufficientCaptureError(SppError, ValueError):
    pass


class CertificateUnavailableError(SppError, RuntimeError):
    pass


class ConfigError(SppError, ValueError):
    pass
