"""Exception hierarchy shared by every module."""


class RegretfolioError(Exception):
    """Base class for all package errors."""


class ValidationError(RegretfolioError, ValueError):
    """Input data or arguments violate a documented precondition."""


class ParseError(ValidationError):
    """A CSV or config file could not be parsed."""


class DomainError(RegretfolioError, ValueError):
    """A numeric argument lies outside the function's domain."""


class UndefinedMetricError(RegretfolioError, ArithmeticError):
    """A ratio metric has a zero (or empty) denominator."""


class ConfigError(ValidationError):
    """A configuration field is missing, unknown or malformed."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field
