"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ParameterError and its relatives map to
exit 2 (validation), NumericError/ConvergenceError to exit 3, verification
failures to exit 4.
"""


class WfdualError(Exception):
    """Base class for all package errors."""


class ParameterError(WfdualError):
    """Invalid model parameters or malformed input (validation failure)."""


class OracleMisuseError(ParameterError):
    """A k-oracle was constructed or called outside its domain of validity."""


class UnsupportedShapeError(ParameterError):
    """The requested computation has no implemented route for this model shape."""


class NumericError(WfdualError):
    """A numerical operation failed (factorization, quadrature instability, ...)."""


class ConvergenceError(NumericError):
    """A series or iterative scheme failed to converge within its budget.

    Carries the partial result and the number of terms consumed so callers
    can inspect how far the computation got.
    """

    def __init__(self, message, partial=None, terms=None):
        super().__init__(message)
        self.partial = partial
        self.terms = terms
