"""Exception hierarchy shared by every module."""


class PrgfError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(PrgfError, ValueError):
    """Invalid parameters: unknown model kind, bad divisibility, out-of-range values."""


class InvalidDimensionError(ConfigurationError):
    pass


class DegenerateSampleError(PrgfError):
    """A projection onto the complement of the bias direction vanished twice in a row."""


class DegenerateGradientError(PrgfError):
    """The estimated gradient norm is zero, so cosine quantities are undefined."""


class OracleError(PrgfError):
    pass


class BudgetExhaustedError(OracleError):
    """Raised when a query would exceed the ledger budget.

    ``used`` is the number of queries already charged when the request was refused.
    """

    def __init__(self, used, budget=None):
        self.used = used
        self.budget = budget
        super().__init__(f"query budget exhausted after {used} queries (budget={budget})")


class DimensionMismatchError(OracleError, ValueError):
    pass


class MalformedRequestError(OracleError, ValueError):
    pass


class TransportError(OracleError, ConnectionError):
    """The connection to a remote oracle failed. Never raised for budget exhaustion."""


class PartialEstimateError(PrgfError):
    """The budget ran out inside an estimator call.

    ``queries_spent`` counts the queries the call consumed before failing.
    """

    def __init__(self, queries_spent, cause=None):
        self.queries_spent = queries_spent
        self.cause = cause
        super().__init__(f"estimate aborted after {queries_spent} queries: {cause}")
