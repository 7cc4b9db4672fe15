"""Exception types raised across the package."""


class AimregError(Exception):
    """Base class for all package errors."""


class DomainError(AimregError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class IntegrationError(AimregError, ArithmeticError):
    """The integrator produced or met a non-finite value.

    Attributes
    ----------
    t : float
        Time at which the failure was detected.
    x : numpy.ndarray
        State at that time (before the failing step).
    partial : Trajectory or None
        Whatever was recorded up to the failure, when raised from ``simulate``.
    """

    def __init__(self, message, t, x, partial=None):
        super().__init__(f"{message} (t={t:.6g})")
        self.t = t
        self.x = x
        self.partial = partial


class AssumptionViolation(AimregError):
    """A standing assumption on the plant/exosystem was found not to hold."""


class AlgebraMismatch(AimregError):
    """Two algebraically identical systems disagreed beyond tolerance."""

    def __init__(self, message, channel, deviation):
        super().__init__(message)
        self.channel = channel
        self.deviation = deviation


class QuadratureError(AimregError):
    """Adaptive quadrature did not reach the requested accuracy."""


class ConfigError(AimregError, ValueError):
    """One or more problems in an experiment configuration.

    All problems found are collected in ``problems`` so they can be
    reported at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
