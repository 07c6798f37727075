"""Truncated Levy measures: density, moments, rates, and exact sampling.

The jump measure is radial, nu(dz) = kappa(z) dz with

    kappa(z) = chi(|z|) * |z|^(-d-alpha),          0 < |z| < support,

where chi is a truncation profile equal to 1 on a plateau [0, R_p] and
vanishing beyond a support radius.  Two profiles are provided: a C-infinity
bump glue (plateau delta/2, support delta) and a hard indicator cutoff.
Everything downstream (simulation, compensators, operator quadrature) goes
through this module so that sampled paths and quadrature checks agree on the
same measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quad import adaptive_radial, gauss_panels, sphere_directions, unit_sphere_area
from .errors import ConfigError, DomainError

__all__ = [
    "SmoothTruncation",
    "HardTruncation",
    "LevyModel",
    "CubicWeight",
    "density",
    "grad_log_density",
    "small_jump_moment",
    "jump_rate",
    "plateau_inverse_cdf",
    "sample_jump",
    "sample_jumps",
    "shell_quadrature",
]


def _bump(t):
    """exp(-1/t) for t > 0, 0 otherwise; C-infinity at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def smoothstep(t):
    """C-infinity monotone step: 0 for t <= 0, 1 for t >= 1."""
    a = _bump(t)
    b = _bump(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def smoothstep_prime(t):
    t = np.asarray(t, dtype=float)
    a = _bump(t)
    b = _bump(1.0 - t)
    inside = (t > 0) & (t < 1)
    out = np.zeros_like(t)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        da = np.where(inside, a / np.maximum(t, 1e-300) ** 2, 0.0)
        db = np.where(inside, b / np.maximum(1.0 - t, 1e-300) ** 2, 0.0)
        num = da * b + a * db
        den = (a + b) ** 2
        out = np.where(inside, num / np.where(den > 0, den, 1.0), 0.0)
    return out


@dataclass(frozen=True)
class SmoothTruncation:
    """C-infinity profile: 1 on [0, delta/2], 0 on [delta, inf)."""

    delta: float

    @property
    def plateau_radius(self) -> float:
        return 0.5 * self.delta

    @property
    def support_radius(self) -> float:
        return self.delta

    def chi(self, r):
        t = (np.asarray(r, dtype=float) - 0.5 * self.delta) / (0.5 * self.delta)
        return 1.0 - smoothstep(t)

    def dlog_chi(self, r):
        """d/dr log chi(r); zero on the plateau."""
        r = np.asarray(r, dtype=float)
        t = (r - 0.5 * self.delta) / (0.5 * self.delta)
        c = 1.0 - smoothstep(t)
        dc = -smoothstep_prime(t) / (0.5 * self.delta)
        return np.where(c > 0, dc / np.where(c > 0, c, 1.0), 0.0)


@dataclass(frozen=True)
class HardTruncation:
    """Indicator profile 1_{r <= radius}; handy for closed-form oracles."""

    delta: float
    radius: float

    def __post_init__(self):
        if not 0 < self.radius <= self.delta:
            raise ConfigError("hard cutoff radius must lie in (0, delta]")

    @property
    def plateau_radius(self) -> float:
        return self.radius

    @property
    def support_radius(self) -> float:
        return self.radius

    def chi(self, r):
        return (np.asarray(r, dtype=float) <= self.radius).astype(float)

    def dlog_chi(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))


def _default_trunc_low(alpha: float, plateau: float) -> float:
    # second-moment rule: moment ratio (tr/plateau)^(2-alpha) <= 1e-3
    return plateau * 1e-3 ** (1.0 / (2.0 - alpha))


@dataclass(frozen=True)
class LevyModel:
    """Radial Levy measure restricted to 0 < |z| < delta.

    trunc_low is the numerical lower jump truncation used when sampling;
    jumps below it are dropped (their compensator vanishes for the symmetric
    measures used here, so only a second-moment weak error remains).
    """

    dim: int
    alpha: float
    delta: float
    trunc_low: float | None = None
    cutoff: SmoothTruncation | HardTruncation | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be a positive integer")
        if not 0.0 < self.alpha < 2.0:
            raise ConfigError("alpha must lie in (0, 2)")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", SmoothTruncation(self.delta))
        if self.trunc_low is None:
            object.__setattr__(
                self,
                "trunc_low",
                _default_trunc_low(self.alpha, self.cutoff.plateau_radius),
            )
        if not 0.0 <= self.trunc_low < self.delta:
            raise ConfigError("trunc_low must lie in [0, delta)")

    @property
    def plateau_radius(self) -> float:
        return self.cutoff.plateau_radius

    @property
    def support_radius(self) -> float:
        return self.cutoff.support_radius


@dataclass(frozen=True)
class CubicWeight:
    """Smooth jump-size weight: |z|^3 on |z| <= delta/4, 0 beyond delta/2.

    Nonnegative and C-infinity; the transition multiplies |z|^3 by a flat
    bump step so all derivatives match at the plateau edge.
    """

    delta: float

    @property
    def plateau_radius(self) -> float:
        return 0.25 * self.delta

    @property
    def support_radius(self) -> float:
        return 0.5 * self.delta

    def _taper(self, r):
        t = (np.asarray(r, dtype=float) - 0.25 * self.delta) / (0.25 * self.delta)
        return 1.0 - smoothstep(t)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= 0.5 * self.delta, r**3 * self._taper(r), 0.0)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return self.radial(np.linalg.norm(z, axis=-1))

    def grad(self, z):
        """Analytic gradient, for cross-checking finite differences."""
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        t = (r - 0.25 * self.delta) / (0.25 * self.delta)
        psi = 1.0 - smoothstep(t)
        dpsi = -smoothstep_prime(t) / (0.25 * self.delta)
        coef = np.where(r <= 0.5 * self.delta, 3.0 * r * psi + r**2 * dpsi, 0.0)
        return coef[..., None] * z


def _check_nonzero(r):
    if np.any(r == 0.0):
        raise DomainError("kappa has a non-integrable singularity at z = 0")


def density(model: LevyModel, z) -> np.ndarray | float:
    """kappa(z) = chi(|z|) |z|^(-d-alpha); DomainError at z = 0."""
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 1
    r = np.linalg.norm(np.atleast_2d(z), axis=-1)
    _check_nonzero(r)
    val = model.cutoff.chi(r) * r ** (-model.dim - model.alpha)
    return float(val[0]) if scalar else val


def grad_log_density(model: LevyModel, z) -> np.ndarray:
    """grad log kappa(z) = chi'/chi * z/|z| - (d+alpha) z/|z|^2.

    On the plateau this is the closed form -(d+alpha) z / |z|^2.
    """
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z, axis=-1)
    _check_nonzero(r)
    coef = model.cutoff.dlog_chi(r) / r - (model.dim + model.alpha) / r**2
    return coef[..., None] * z


def _plateau_radial_mass(alpha: float, a: float, b: float) -> float:
    """int_a^b r^(-alpha-1) dr on the plateau (kappa = r^(-d-alpha))."""
    if b <= a:
        return 0.0
    return (a ** (-alpha) - b ** (-alpha)) / alpha


def small_jump_moment(model: LevyModel, p: float, eps: float) -> float:
    """int_{|z| <= eps} |z|^p nu(dz), radial closed form plus smooth tail."""
    if p < 2:
        raise ConfigError("moment order p must be >= 2")
    if eps < 0:
        raise ConfigError("eps must be nonnegative")
    if eps == 0.0:
        return 0.0
    area = unit_sphere_area(model.dim)
    q = p - model.alpha
    r_p = min(eps, model.plateau_radius)
    total = r_p**q / q
    if eps > model.plateau_radius:
        hi = min(eps, model.support_radius)
        chi = model.cutoff.chi
        total += float(
            adaptive_radial(lambda r: chi(r) * r ** (q - 1.0),
                            model.plateau_radius, hi)
        )
    return area * total


@lru_cache(maxsize=256)
def _rate_cached(model: LevyModel) -> float:
    if model.trunc_low <= 0:
        raise ConfigError(
            "jump rate is infinite at trunc_low = 0 (infinite activity)"
        )
    area = unit_sphere_area(model.dim)
    a = model.trunc_low
    plateau = model.plateau_radius
    total = _plateau_radial_mass(model.alpha, min(a, plateau), plateau)
    if a > plateau:
        total = 0.0
    lo = max(a, plateau)
    if model.support_radius > lo:
        chi = model.cutoff.chi
        total += float(
            adaptive_radial(
                lambda r: chi(r) * r ** (-model.alpha - 1.0),
                lo, model.support_radius,
            )
        )
    return area * total


def jump_rate(model: LevyModel) -> float:
    """Total mass of nu restricted to trunc_low < |z| < delta."""
    return _rate_cached(model)


@lru_cache(maxsize=256)
def _tail_mass(model: LevyModel) -> float:
    """Radial nu-mass strictly beyond the plateau (0 for hard profiles)."""
    lo = max(model.trunc_low, model.plateau_radius)
    if model.support_radius <= lo:
        return 0.0
    area = unit_sphere_area(model.dim)
    chi = model.cutoff.chi
    return area * float(
        adaptive_radial(lambda r: chi(r) * r ** (-model.alpha - 1.0),
                        lo, model.support_radius)
    )


def plateau_inverse_cdf(model: LevyModel, u) -> np.ndarray:
    """Quantile of the radial measure restricted to [trunc_low, plateau].

    Closed form: solves int_a^r s^(-alpha-1) ds = u * int_a^R s^(-alpha-1) ds.
    """
    a = model.trunc_low
    b = model.plateau_radius
    if not 0 < a < b:
        raise ConfigError("plateau inverse CDF needs 0 < trunc_low < plateau")
    u = np.asarray(u, dtype=float)
    al = model.alpha
    target = a ** (-al) - u * (a ** (-al) - b ** (-al))
    return target ** (-1.0 / al)


def _sample_directions(dim: int, rng, n: int) -> np.ndarray:
    if dim == 1:
        return rng.choice([-1.0, 1.0], size=(n, 1))
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _sample_radii(model: LevyModel, rng, n: int) -> np.ndarray:
    a, b = model.trunc_low, model.plateau_radius
    if a <= 0:
        raise ConfigError("sampling requires trunc_low > 0")
    area = unit_sphere_area(model.dim)
    m_plateau = area * _plateau_radial_mass(model.alpha, min(a, b), b)
    if a >= b:
        m_plateau = 0.0
    m_tail = _tail_mass(model)
    if m_plateau + m_tail <= 0:
        raise ConfigError("empty jump support above trunc_low")
    r = np.empty(n)
    in_plateau = rng.random(n) < m_plateau / (m_plateau + m_tail)
    k = int(in_plateau.sum())
    if k:
        r[in_plateau] = plateau_inverse_cdf(model, rng.random(k))
    need = n - k
    if need:
        # rejection on the smoothed tail: proposal ~ r^(-alpha-1), accept chi
        lo = max(a, model.plateau_radius)
        hi = model.support_radius
        al = model.alpha
        out = np.empty(need)
        filled = 0
        chi = model.cutoff.chi
        while filled < need:
            m = max(need - filled, 16)
            u = rng.random(m)
            cand = (lo ** (-al) - u * (lo ** (-al) - hi ** (-al))) ** (-1.0 / al)
            acc = rng.random(m) < chi(cand)
            take = min(int(acc.sum()), need - filled)
            out[filled:filled + take] = cand[acc][:take]
            filled += take
        r[~in_plateau] = out
    return r


def sample_jumps(model: LevyModel, rng, n: int) -> np.ndarray:
    """n i.i.d. draws from nu restricted to trunc_low < |z| < delta, (n, d)."""
    if n == 0:
        return np.empty((0, model.dim))
    r = _sample_radii(model, rng, n)
    return r[:, None] * _sample_directions(model.dim, rng, n)


def sample_jump(model: LevyModel, rng) -> np.ndarray:
    """One draw from the normalized truncated measure."""
    return sample_jumps(model, rng, 1)[0]


def shell_quadrature(model: LevyModel, a: float, b: float,
                     n_radial: int = 24, n_sphere: int | None = None):
    """Fixed antipodally-paired nodes/weights for int_{a<|z|<b} g(z) nu(dz).

    Weights include the kappa factor.  Node placement splits at the plateau
    edge so the profile kink never sits inside a panel.
    """
    if n_sphere is None:
        n_sphere = {1: 2, 2: 16, 3: 64}.get(model.dim, 64)
    b = min(b, model.support_radius)
    if b <= a:
        return np.empty((0, model.dim)), np.empty(0)
    dirs = sphere_directions(model.dim, n_sphere)
    area = unit_sphere_area(model.dim)
    edges = sorted({a, b} | {e for e in (model.plateau_radius,) if a < e < b})
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        r, wr = gauss_panels(lo, hi, max(2, n_radial // (len(edges) - 1)))
        kap = model.cutoff.chi(r) * r ** (-model.dim - model.alpha)
        pieces.append((r, wr * kap * r ** (model.dim - 1)))
    rs = np.concatenate([p[0] for p in pieces])
    ws = np.concatenate([p[1] for p in pieces])
    z = rs[:, None, None] * dirs[None, :, :]
    w = ws[:, None] * (area / dirs.shape[0])
    w = np.broadcast_to(w, (rs.size, dirs.shape[0]))
    return z.reshape(-1, model.dim), w.reshape(-1).copy()
