"""Error taxonomy shared by the library and the CLI exit codes."""


class IkrrError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(IkrrError):
    """Invalid user input: bad spec strings, parameter ranges, missing files."""

    exit_code = 1


class DomainError(ConfigurationError):
    """A point does not lie on the manifold (beyond tolerance)."""


class UnknownQuotientError(ConfigurationError):
    """No closed-form quotient data is available for this action."""


class NumericalError(IkrrError):
    """A numerical routine failed to meet its accuracy contract."""

    exit_code = 2


class ResourceLimitError(IkrrError):
    """A configurable resource cap (basis entries, group order) was exceeded."""

    exit_code = 3
