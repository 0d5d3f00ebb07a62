class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateChannelError(DomainError):
    """p00 + p11 == 0, so the sigma_1 block of the E2C state is empty."""


class NoPositiveRateError(DomainError):
    """The key-rate bound is not positive at the left edge of a search interval."""


class ConfigError(Exception):
    """Malformed protocol configuration or fixture file."""
