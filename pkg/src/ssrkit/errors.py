"""Exception types raised across the package."""


class SSRError(Exception):
    """Base class for all numerical and configuration failures."""


class DomainError(SSRError, ValueError):
    """An argument lies outside the domain of the operation."""


class BracketError(SSRError, ValueError):
    """Root finder called on an interval that does not bracket a sign change."""


class QuadratureError(SSRError):
    """Adaptive quadrature did not reach its tolerance.

    The partial value and the error estimate at the point of failure are
    kept on the exception so callers can decide whether to use them.
    """

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class RiccatiDivergenceError(SSRError):
    """The Riccati solution blew past the overflow guard."""

    def __init__(self, message, node=None, tau=None, a=None):
        super().__init__(message)
        self.node = node
        self.tau = tau
        self.a = a


class DegenerateSkewError(SSRError):
    """Skew integral vanishes so the SSR is 0/0 (e.g. zero correlation)."""


class UnsupportedConfigurationError(SSRError):
    """Requested combination is outside what the closed forms cover."""


class ConfigError(SSRError):
    """Malformed or missing configuration value."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
