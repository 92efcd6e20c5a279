"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit-code contract: anything derived from
:class:`InputError` is a usage/input problem (exit 2), anything else that is a
:class:`DGSelectError` is an internal failure (exit 1).
"""


class DGSelectError(Exception):
    """Base class for all toolkit errors."""


class InputError(DGSelectError, ValueError):
    """Invalid user-supplied data: bad shapes, ranges, files, or flags."""


class ConfigurationError(InputError):
    """A configuration object violates its invariants."""


class InsufficientDomainsError(InputError):
    """Fewer than two domains where a cross-domain statistic is required."""


class ParseError(InputError):
    """A file could not be parsed; carries location information in the message."""


class ConvergenceError(DGSelectError):
    """An iterative solve exhausted its budget.

    Attributes
    ----------
    residual
        Objective improvement over the final convergence window.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual
