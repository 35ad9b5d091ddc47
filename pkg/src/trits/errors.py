"""Exception types shared across the package."""


class TritsError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(TritsError):
    """Operands have incompatible shapes; the message names both."""


class ContractError(TritsError):
    """A documented precondition of an operation was violated."""


class ConfigError(TritsError):
    """Invalid configuration (unknown key, bad value, infeasible setting)."""


class DataFormatError(TritsError):
    """Malformed input data file (bad cell, missing header, empty file)."""


class NumericalError(TritsError):
    """Non-finite values were produced where finiteness is required."""
