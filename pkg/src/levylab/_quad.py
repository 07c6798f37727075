"""Shared quadrature machinery: sphere point sets and radial rules.

Integrals over jump space are computed in polar form,

    int g(z) dz = S_{d-1} * int_0^inf r^{d-1} mean_{|theta|=1} g(r theta) dr,

with the sphere mean taken over a deterministic, antipodally symmetric point
set.  Antipodal symmetry is load-bearing: paired nodes (z, -z) cancel odd
integrands exactly, which is how the principal value is realized downstream.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

from .errors import ConfigError, NumericsError

__all__ = [
    "unit_sphere_area",
    "sphere_directions",
    "gauss_panels",
    "adaptive_radial",
    "polar_nodes",
]


def unit_sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} (2 for d=1)."""
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def sphere_directions(d: int, n: int) -> np.ndarray:
    """Deterministic low-discrepancy directions on S^{d-1}, shape (n, d).

    The returned set is exactly antipodally symmetric (it contains -theta for
    every theta), so equal-weight averages kill odd functions identically.
    `n` must be even for d >= 2; for d = 1 the set is always {+1, -1}.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if n % 2:
        raise ConfigError("need an even number of sphere directions")
    if d == 2:
        theta = np.pi * (2.0 * np.arange(n) + 1.0) / n
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if d == 3:
        # Fibonacci hemisphere, mirrored.
        m = n // 2
        golden = (1.0 + math.sqrt(5.0)) / 2.0
        k = np.arange(m)
        zc = (k + 0.5) / m  # cos(polar angle) in (0, 1): upper hemisphere
        phi = 2.0 * np.pi * k / golden
        s = np.sqrt(1.0 - zc**2)
        half = np.column_stack([s * np.cos(phi), s * np.sin(phi), zc])
        return np.concatenate([half, -half])
    raise ConfigError("sphere quadrature supports d <= 3")


def gauss_panels(a: float, b: float, n_panels: int, order: int = 8):
    """Composite Gauss-Legendre nodes/weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    nodes = (mid + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def adaptive_radial(fn, a: float, b: float, rtol: float = 1e-10,
                    atol: float = 1e-14, max_doublings: int = 12,
                    order: int = 10):
    """Integrate a vectorized (possibly vector-valued) radial integrand.

    `fn` maps an array of radii (n,) to values of shape (n,) or (n, ...).
    Panels are doubled until two successive composite Gauss-Legendre levels
    agree to tolerance.  Deterministic, unlike scipy's adaptive subdivision,
    which matters for byte-identical replays.
    """
    if b <= a:
        shape = np.shape(fn(np.array([max(a, 1e-300)])))[1:]
        return np.zeros(shape) if shape else 0.0
    n_panels = 2
    nodes, weights = gauss_panels(a, b, n_panels, order)
    prev = np.tensordot(weights, fn(nodes), axes=(0, 0))
    for _ in range(max_doublings):
        n_panels *= 2
        nodes, weights = gauss_panels(a, b, n_panels, order)
        cur = np.tensordot(weights, fn(nodes), axes=(0, 0))
        err = np.max(np.abs(cur - prev))
        scale = max(np.max(np.abs(cur)), atol)
        if err <= rtol * scale + atol:
            return cur
        prev = cur
    raise NumericsError(
        f"radial quadrature on [{a}, {b}] did not converge "
        f"(last change {err:.3e})"
    )


def scalar_quad(fn, a: float, b: float, points=None, rtol: float = 1e-10,
                limit: int = 200) -> float:
    """scipy adaptive Gauss-Kronrod for scalar radial integrands.

    Accuracy is judged from the returned error estimate rather than scipy's
    IntegrationWarning (which fires on exactly-polynomial integrands too).
    """
    kwargs = {"epsrel": rtol, "epsabs": 1e-14, "limit": limit}
    if points is not None and np.isfinite(b):
        pts = [p for p in points if a < p < b]
        if pts:
            kwargs["points"] = pts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, est = integrate.quad(fn, a, b, **kwargs)
    if not np.isfinite(val):
        raise NumericsError(f"quadrature on [{a}, {b}] returned {val}")
    if est > 1e3 * max(rtol * abs(val), 1e-13):
        raise NumericsError(
            f"quadrature on [{a}, {b}] error estimate {est:.2e} "
            f"exceeds tolerance for value {val:.6e}"
        )
    return val


def polar_nodes(d: int, a: float, b: float, n_radial: int, n_sphere: int,
                radial_order: int = 8):
    """Fixed product rule on the shell a < |z| < b.

    Returns (z_nodes, weights) with z_nodes of shape (m, d) such that
    sum_i w_i g(z_i) approximates int_{a<|z|<b} g(z) dz.  The node set is
    antipodally paired with equal weights on paired nodes.
    """
    dirs = sphere_directions(d, n_sphere)
    r, wr = gauss_panels(a, b, n_radial, radial_order)
    area = unit_sphere_area(d)
    # weight per node: r^{d-1} * wr * area / n_dirs
    n_dirs = dirs.shape[0]
    z = r[:, None, None] * dirs[None, :, :]
    w = (r ** (d - 1) * wr)[:, None] * (area / n_dirs)
    w = np.broadcast_to(w, (r.size, n_dirs))
    return z.reshape(-1, d), w.reshape(-1)
