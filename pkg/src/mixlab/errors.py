"""Exception hierarchy shared by every module."""


class MixlabError(Exception):
    """Base class for all errors raised by mixlab."""


class ConfigError(MixlabError, ValueError):
    """Invalid user input: malformed potential, bad parameters, mismatched alphabets."""


class NumericalError(MixlabError, ArithmeticError):
    """A computation could not be carried out or certified numerically."""


class BudgetError(NumericalError):
    """An enumeration would exceed the configured size budget."""


class BoundViolation(MixlabError):
    """A measured correlation exceeded one of the computed upper bounds."""
