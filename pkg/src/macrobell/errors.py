"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the documented domain of a special function."""


class ConvergenceError(RuntimeError):
    """A numerical result could not be certified at the requested accuracy."""


class TruncationError(ConvergenceError):
    """A Fock-space truncation lost more probability mass than allowed."""


class GridError(ConvergenceError):
    """Quadrature did not pass its node-doubling self check."""


class BracketError(ConvergenceError):
    """A bisection bracket does not enclose a sign change of ``s - 1``."""


class ScanError(ConvergenceError):
    """A scan point failed; ``alpha`` identifies the failing point."""

    def __init__(self, alpha: float, cause: BaseException):
        super().__init__(f"scan failed at alpha={alpha!r}: {cause}")
        self.alpha = alpha
        self.cause = cause
