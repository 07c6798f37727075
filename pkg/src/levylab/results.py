"""Small result containers shared across modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ScanResult", "fit_loglog"]


@dataclass(frozen=True)
class ScanResult:
    """A Monte-Carlo scan over an abscissa (time or Laplace parameter)."""

    abscissae: np.ndarray
    ordinates: np.ndarray
    stderr: np.ndarray
    fitted_exponent: float | None
    exponent_stderr: float | None
    fit_window: tuple
    extras: dict = field(default_factory=dict)


def fit_loglog(x, y, mask=None):
    """OLS slope of log y against log x with its standard error.

    Returns (slope, slope_se, window) where window is the (min, max) of the
    abscissae actually used.  None slope if fewer than two usable points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if mask is not None:
        ok &= mask
    if ok.sum() < 2:
        return None, None, (None, None)
    lx, ly = np.log(x[ok]), np.log(y[ok])
    n = len(lx)
    a = np.vstack([lx, np.ones(n)]).T
    coef, res, *_ = np.linalg.lstsq(a, ly, rcond=None)
    slope = float(coef[0])
    if n > 2:
        resid = ly - a @ coef
        s2 = float(resid @ resid) / (n - 2)
        sxx = float(((lx - lx.mean()) ** 2).sum())
        se = float(np.sqrt(s2 / sxx)) if sxx > 0 else None
    else:
        se = None
    return slope, se, (float(x[ok].min()), float(x[ok].max()))
