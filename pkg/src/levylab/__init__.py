"""levylab: a numerical laboratory for degenerate jump-SDE flows.

Simulates SDEs driven by truncated Levy noise together with their Jacobian
and inverse-Jacobian flows, computes Malliavin covariance objects by
jump-size perturbation, certifies uniform bracket (hypoellipticity)
conditions on grids, reverses flows pathwise, and verifies nonlocal
generator/semigroup identities by principal-value quadrature and Monte
Carlo.
"""

from .errors import (
    ConfigError,
    DomainError,
    LevyLabError,
    NumericsError,
    SingularityError,
)

__version__ = "0.1.0"

from . import brackets, coeffs, flow, heatkernel, levy, malliavin  # noqa: E402
from . import operators, results, reversal, runner, testfunctions  # noqa: E402
from .levy import CubicWeight, HardTruncation, LevyModel, SmoothTruncation  # noqa: E402
from .coeffs import CoefficientSet  # noqa: E402
from .flow import PathRecord, SimConfig, batch_simulate, simulate  # noqa: E402

__all__ = [
    "ConfigError",
    "DomainError",
    "LevyLabError",
    "NumericsError",
    "SingularityError",
    "LevyModel",
    "SmoothTruncation",
    "HardTruncation",
    "CubicWeight",
    "CoefficientSet",
    "SimConfig",
    "PathRecord",
    "simulate",
    "batch_simulate",
    "brackets",
    "coeffs",
    "flow",
    "heatkernel",
    "levy",
    "malliavin",
    "operators",
    "results",
    "reversal",
    "runner",
    "testfunctions",
]
