"""Exception hierarchy for the pricing engine.

Configuration problems raise ``ConfigError`` subclasses; numerical
failures (bad matrices, degenerate pivots) raise ``NumericalError``
subclasses. The CLI maps the two branches to exit codes 2 and 3.
"""


class EngineError(Exception):
    """Base class for all engine exceptions."""


class ConfigError(EngineError, ValueError):
    """Invalid configuration or contract terms."""


class NumericalError(EngineError, ArithmeticError):
    """Numerical failure inside the engine."""


class NotSquare(ConfigError):
    """Correlation input is not a square matrix."""


class DiagonalNotOne(ConfigError):
    """Correlation diagonal deviates from 1 beyond tolerance."""


class EntryOutOfRange(ConfigError):
    """Correlation entry outside [-1, 1]."""


class NotPositiveSemidefinite(NumericalError):
    """Factorization met a pivot below the semidefinite tolerance."""


class SingularPivot(NumericalError):
    """Cholesky derivative requested at a (near-)singular pivot."""


class DomainError(ConfigError):
    """Argument outside a function's domain, e.g. probabilities not in (0, 1)."""


class NonPositiveHazard(ConfigError):
    """Exponential marginal requires a strictly positive hazard rate."""


class NBinsTooSmall(ConfigError):
    """Standard errors need at least two bins."""


class UnequalBins(ConfigError):
    """Bin accumulators must hold equal path counts."""


class BumpBreaksPSD(NumericalError):
    """A correlation bump destroyed positive semidefiniteness even after shrinking."""
