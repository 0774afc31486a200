"""Exception types raised by the simulator and the verification harness."""


class CSAError(Exception):
    """Base class for all package errors."""


class DomainViolation(CSAError, ValueError):
    """A point lies outside the box domain."""


class SamplerStall(CSAError, RuntimeError):
    """Acceptance-rejection exceeded its proposal budget for one point."""


class ConfigError(CSAError, ValueError):
    """Invalid or inconsistent configuration.

    ``violations`` holds every problem found, not just the first one.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class Refusal(CSAError):
    """An operation declined to run because its preconditions do not hold."""
