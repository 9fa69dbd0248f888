"""Exception types raised across the package."""


class MScatterError(Exception):
    """Base class for all package errors."""


class InvalidInput(MScatterError, ValueError):
    """Malformed or out-of-range argument."""


class DomainError(MScatterError, ValueError):
    """A function was evaluated outside its domain (e.g. log of a nonpositive eigenvalue)."""


class Unsupported(MScatterError):
    """The requested combination of loss, penalty and algorithm is not available."""


class EtaTooSmall(MScatterError, ValueError):
    """The penalized Gaussian subproblem is not coercive at the requested eta."""


class NotSpd(MScatterError, ValueError):
    """A matrix that must be positive definite is not."""


class NoConvergence(MScatterError):
    """An iterative routine hit its iteration budget.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class BudgetExceeded(MScatterError):
    """Exhaustive enumeration would exceed its budget.

    ``fallback`` carries a heuristic (Monte-Carlo) verdict.
    """

    def __init__(self, message, fallback=None):
        super().__init__(message)
        self.fallback = fallback


class ParseError(MScatterError, ValueError):
    """Input file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InternalError(MScatterError, RuntimeError):
    """A guarantee that holds in exact arithmetic was violated numerically."""
