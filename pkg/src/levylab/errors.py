"""Semantic exception hierarchy.

Public functions raise these instead of bare ValueError/ArithmeticError so
callers (and the experiment runner's exit codes) can tell configuration
mistakes apart from numerical failures.
"""


class LevyLabError(Exception):
    """Base error for this package."""


class ConfigError(LevyLabError, ValueError):
    """Inputs violate a contract: bad field, missing oracle, empty grid."""


class DomainError(LevyLabError, ValueError):
    """A point lies outside the mathematical domain of the operation."""


class NumericsError(LevyLabError, ArithmeticError):
    """Quadrature or iteration failed to converge to tolerance."""


class SingularityError(NumericsError):
    """A jump linearization I + grad_x sigma is numerically singular."""
