"""Exception types shared across the package."""


class QitrajError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(QitrajError, ValueError):
    pass


class OutOfDomainError(QitrajError, ValueError):
    """Evaluation time outside the signal's horizon."""


class NumericDivergenceError(QitrajError, ArithmeticError):
    """A propagated state became non-finite."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ValidationError(QitrajError, ValueError):
    """Problem data failed validation; ``failures`` lists every problem."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))
