"""Exception types shared across the package.

Each class carries the process exit code the command-line front end uses
when the error escapes a stage.
"""


class QWDiffError(Exception):
    exit_code = 1


class ParameterError(QWDiffError, ValueError):
    """A configuration value or argument is outside its valid range."""

    exit_code = 2


class InvalidGraphError(ParameterError):
    pass


class InsufficientSamplesError(ParameterError):
    pass


class ShapeError(QWDiffError, ValueError):
    exit_code = 2


class NumericalInstabilityError(QWDiffError, ArithmeticError):
    exit_code = 4


class DegeneratePosteriorError(NumericalInstabilityError):
    """The conditioning event q(x_t | x_0) has zero probability."""


class FormatError(QWDiffError, ValueError):
    """A binary input does not match its declared container format."""

    exit_code = 3


class StageError(QWDiffError):
    """A pipeline stage is missing the output of an earlier stage."""

    exit_code = 3
