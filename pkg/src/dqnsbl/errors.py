"""Exception types shared across the package."""


class DqnSblError(Exception):
    """Base class for all package errors."""


class DataFormatError(DqnSblError, ValueError):
    """A LIBSVM line could not be parsed."""

    def __init__(self, message, line_no=None, source=None):
        self.line_no = line_no
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line_no is not None:
            where += f"{line_no}: "
        elif where:
            where += " "
        super().__init__(where + message)


class OracleGuardError(DqnSblError):
    """The dense (full covariance) path was asked to handle too many columns."""


class IllConditionedError(DqnSblError):
    """The Hessian of the MAP objective could not be factorized."""


class ConvergenceError(DqnSblError):
    """A fit finished without meeting its convergence test when one was required."""
