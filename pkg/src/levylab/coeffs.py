"""Coefficient fields sigma(x, z), b(x) and their derived jump maps.

A CoefficientSet bundles the two fields with analytic derivative oracles.
All callables are batched: x and z carry matching (broadcastable) leading
shapes, with the state/jump dimension last.  Jacobian orientation follows
(grad f)[i, j] = d f^i / d x_j throughout.

Derived maps:

* ``inverse_jump_gain``   (I + grad_x sigma)^(-1) - I, the multiplicative
                          correction the inverse Jacobian picks up at a jump;
* ``jump_sensitivity``    (I + grad_x sigma)^(-1) grad_z sigma, the response
                          of the post-jump state to a jump-size perturbation;
* ``invert_jump_map``     the inverse of x -> x + sigma(x, z), by fixed-point
                          iteration (certified contraction under the
                          |grad_x sigma| <= 1/2 smallness regime);
* ``reversed_coefficients``  the pair (sigma, b) driving the time-reversed
                          flow.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericsError, SingularityError
from .levy import LevyModel, shell_quadrature

__all__ = [
    "CoefficientSet",
    "inverse_jump_gain",
    "jump_sensitivity",
    "invert_jump_map",
    "reversed_coefficients",
    "compensator_drift",
    "compensator_drift_grad",
    "additive",
    "constant_coupling",
    "linear_drift",
    "sine1d",
    "scaled_state_1d",
    "asym1d",
    "block_coupling",
    "block_sine",
    "kinetic",
    "fd_dsigma_dx",
    "fd_dsigma_dz",
    "fd_ddrift",
]


@dataclass(frozen=True)
class CoefficientSet:
    """Fields of one jump-SDE system with analytic derivative oracles."""

    dim: int
    name: str
    sigma: Callable  # (x, z) -> (..., d)
    drift: Callable  # x -> (..., d)
    dsigma_dx: Callable  # (x, z) -> (..., d, d)
    dsigma_dz: Callable  # (x, z) -> (..., d, d)
    ddrift: Callable  # x -> (..., d, d)
    compensator_free: bool = True
    drift_is_zero: bool = False
    dsigma_dx_is_zero: bool = False
    linear_coupling: Callable | None = None  # A(x) when sigma(x, z) = A(x) z
    block_dims: tuple[int, int] | None = None

    def jump_map(self, x, z):
        """phi_z(x) = x + sigma(x, z)."""
        return np.asarray(x, dtype=float) + self.sigma(x, z)


def _lead(x, z):
    return np.broadcast_shapes(np.shape(x)[:-1], np.shape(z)[:-1])


def small_inv(m: np.ndarray) -> np.ndarray:
    """Batched inverse with closed forms in d <= 2 (fast for huge batches)."""
    d = m.shape[-1]
    if d == 1:
        det = m[..., 0, 0]
        if np.any(np.abs(det) < 1e-14):
            raise SingularityError("singular 1x1 jump linearization")
        return (1.0 / det)[..., None, None]
    if d == 2:
        a = m[..., 0, 0]
        b = m[..., 0, 1]
        cc = m[..., 1, 0]
        dd = m[..., 1, 1]
        det = a * dd - b * cc
        if np.any(np.abs(det) < 1e-14):
            raise SingularityError("singular 2x2 jump linearization")
        out = np.empty_like(m)
        out[..., 0, 0] = dd
        out[..., 0, 1] = -b
        out[..., 1, 0] = -cc
        out[..., 1, 1] = a
        return out / det[..., None, None]
    try:
        return np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"I + grad_x sigma singular: {exc}") from exc


def small_solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """m^{-1} rhs for batched small matrices."""
    d = m.shape[-1]
    if d <= 2:
        return small_inv(m) @ rhs
    try:
        return np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"I + grad_x sigma singular: {exc}") from exc


def inverse_jump_gain(c: CoefficientSet, x, z) -> np.ndarray:
    """(I + grad_x sigma)^(-1) - I; SingularityError if the solve fails."""
    if c.dsigma_dx_is_zero:
        return np.zeros(_lead(x, z) + (c.dim, c.dim))
    s = c.dsigma_dx(x, z)
    return small_inv(s + np.eye(c.dim)) - np.eye(c.dim)


def jump_sensitivity(c: CoefficientSet, x, z) -> np.ndarray:
    """(I + grad_x sigma)^(-1) grad_z sigma; equals grad_z sigma(x, 0) at z=0."""
    if c.dsigma_dx_is_zero:
        return c.dsigma_dz(x, z)
    s = c.dsigma_dx(x, z)
    return small_solve(s + np.eye(c.dim), c.dsigma_dz(x, z))


def invert_jump_map(c: CoefficientSet, y, z, tol: float = 1e-13,
                    max_iter: int = 200) -> np.ndarray:
    """Solve x + sigma(x, z) = y by the contraction x <- y - sigma(x, z)."""
    y = np.asarray(y, dtype=float)
    x = y.copy()
    for _ in range(max_iter):
        x_new = y - c.sigma(x, z)
        step = float(np.max(np.abs(x_new - x))) if x.size else 0.0
        x = x_new
        if step < tol:
            return x
    raise NumericsError(
        f"jump-map inversion did not reach {tol:g} in {max_iter} iterations"
    )


def compensator_drift(c: CoefficientSet, model: LevyModel,
                      trunc_low: float | None = None,
                      n_radial: int = 24) -> Callable:
    """x -> int_{trunc<|z|<delta} sigma(x, z) nu(dz) on fixed paired nodes.

    Identically zero (to roundoff) for compensator-free systems; the paired
    node set cancels the odd part of sigma exactly.
    """
    lo = model.trunc_low if trunc_low is None else trunc_low
    z, w = shell_quadrature(model, lo, model.support_radius, n_radial=n_radial)

    def correction(x):
        x = np.asarray(x, dtype=float)
        vals = c.sigma(x[..., None, :], z)
        return np.einsum("q,...qi->...i", w, vals)

    return correction


def compensator_drift_grad(c: CoefficientSet, model: LevyModel,
                           trunc_low: float | None = None,
                           n_radial: int = 24) -> Callable:
    """x -> int grad_x sigma(x, z) nu(dz), the Jacobian of the correction."""
    lo = model.trunc_low if trunc_low is None else trunc_low
    z, w = shell_quadrature(model, lo, model.support_radius, n_radial=n_radial)

    def correction(x):
        x = np.asarray(x, dtype=float)
        vals = c.dsigma_dx(x[..., None, :], z)
        return np.einsum("q,...qij->...ij", w, vals)

    return correction


def reversed_coefficients(c: CoefficientSet, model: LevyModel,
                          trunc_low: float | None = None,
                          fd_step: float = 1e-6) -> CoefficientSet:
    """Coefficients of the time-reversed flow.

    sigma_rev(x, z) = sigma(phi_z^{-1}(x), z) and b_rev = b plus the
    quadrature of sigma_rev - sigma over the truncated measure (an O(|z|^2)
    integrand, so the integral converges even without truncation).
    Derivatives of the reversed fields fall back to central differences.
    """
    lo = model.trunc_low if trunc_low is None else trunc_low
    zq, wq = shell_quadrature(model, lo, model.support_radius)

    def hat_sigma(x, z):
        return c.sigma(invert_jump_map(c, x, z), z)

    def hat_drift(x):
        x = np.asarray(x, dtype=float)
        xx = x[..., None, :]
        diff = hat_sigma(xx, zq) - c.sigma(xx, zq)
        return c.drift(x) + np.einsum("q,...qi->...i", wq, diff)

    hat = CoefficientSet(
        dim=c.dim,
        name=c.name + "_reversed",
        sigma=hat_sigma,
        drift=hat_drift,
        dsigma_dx=lambda x, z: fd_dsigma_dx_of(hat_sigma, c.dim, x, z, fd_step),
        dsigma_dz=lambda x, z: fd_dsigma_dz_of(hat_sigma, c.dim, x, z, fd_step),
        ddrift=lambda x: fd_ddrift_of(hat_drift, c.dim, x, fd_step),
        compensator_free=False,
        drift_is_zero=False,
        linear_coupling=None,
        block_dims=c.block_dims,
    )
    return hat


# ---------------------------------------------------------------------------
# finite-difference fallbacks (central, step h; callers pick h)
# ---------------------------------------------------------------------------

def fd_dsigma_dx_of(sigma, dim, x, z, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        cols.append((sigma(x + e, z) - sigma(x - e, z)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_dsigma_dz_of(sigma, dim, x, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    cols = []
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        cols.append((sigma(x, z + e) - sigma(x, z - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_ddrift_of(drift, dim, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        cols.append((drift(x + e) - drift(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_dsigma_dx(c: CoefficientSet, x, z, h=1e-6):
    return fd_dsigma_dx_of(c.sigma, c.dim, x, z, h)


def fd_dsigma_dz(c: CoefficientSet, x, z, h=1e-6):
    return fd_dsigma_dz_of(c.sigma, c.dim, x, z, h)


def fd_ddrift(c: CoefficientSet, x, h=1e-6):
    return fd_ddrift_of(c.drift, c.dim, x, h)


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def _zero_drift(dim):
    def drift(x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)

    def ddrift(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (dim, dim))

    return drift, ddrift


def constant_coupling(matrix, name: str | None = None) -> CoefficientSet:
    """sigma(x, z) = M z with constant M, zero drift."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    d = m.shape[0]
    drift, ddrift = _zero_drift(d)

    def sigma(x, z):
        shape = _lead(x, z)
        return np.broadcast_to(np.asarray(z, dtype=float) @ m.T, shape + (d,)).copy()

    def dsx(x, z):
        return np.zeros(_lead(x, z) + (d, d))

    def dsz(x, z):
        return np.broadcast_to(m, _lead(x, z) + (d, d)).copy()

    return CoefficientSet(
        dim=d,
        name=name or f"constant{d}d",
        sigma=sigma,
        drift=drift,
        dsigma_dx=dsx,
        dsigma_dz=dsz,
        ddrift=ddrift,
        drift_is_zero=True,
        dsigma_dx_is_zero=True,
        linear_coupling=lambda x: np.broadcast_to(
            m, np.shape(x)[:-1] + (d, d)).copy(),
    )


def additive(dim: int = 1) -> CoefficientSet:
    """Pure translation jumps: sigma(x, z) = z, zero drift."""
    return constant_coupling(np.eye(dim), name=f"additive{dim}d")


def linear_drift(a_matrix, coupling=None, name: str | None = None) -> CoefficientSet:
    """b(x) = A x with constant jump coupling (default identity)."""
    a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    d = a.shape[0]
    base = constant_coupling(np.eye(d) if coupling is None else coupling)

    def drift(x):
        return np.asarray(x, dtype=float) @ a.T

    def ddrift(x):
        return np.broadcast_to(a, np.shape(x)[:-1] + (d, d)).copy()

    return replace(base, name=name or f"lineardrift{d}d", drift=drift,
                   ddrift=ddrift, drift_is_zero=False)


def sine1d(coupling_amp: float = 0.4, drift_amp: float = 0.5) -> CoefficientSet:
    """d=1 smooth bounded system: sigma = a sin(x) z, b = c cos(x).

    Degenerate at x = 0 (bracket depth 2 restores the spanning condition:
    B_2 = a*c identically).
    """
    a, cc = coupling_amp, drift_amp

    def sigma(x, z):
        return a * np.sin(np.asarray(x, dtype=float)) * np.asarray(z, dtype=float)

    def dsx(x, z):
        v = a * np.cos(np.asarray(x, dtype=float)) * np.asarray(z, dtype=float)
        return v[..., None]

    def dsz(x, z):
        v = a * np.sin(np.asarray(x, dtype=float))
        out = np.broadcast_to(v[..., None], _lead(x, z) + (1, 1))
        return out.copy()

    def drift(x):
        return cc * np.cos(np.asarray(x, dtype=float))

    def ddrift(x):
        return -cc * np.sin(np.asarray(x, dtype=float))[..., None]

    return CoefficientSet(
        dim=1, name="sine1d", sigma=sigma, drift=drift,
        dsigma_dx=dsx, dsigma_dz=dsz, ddrift=ddrift,
        linear_coupling=lambda x: a * np.sin(np.asarray(x, dtype=float))[..., None],
    )


def scaled_state_1d(slope: float = 0.4) -> CoefficientSet:
    """Toy d=1 family sigma = s*x*z, zero drift (hand-workable formulas)."""
    s = slope

    def sigma(x, z):
        return s * np.asarray(x, dtype=float) * np.asarray(z, dtype=float)

    def dsx(x, z):
        return (s * np.asarray(z, dtype=float))[..., None] * np.ones(
            _lead(x, z) + (1, 1))

    def dsz(x, z):
        return (s * np.asarray(x, dtype=float))[..., None] * np.ones(
            _lead(x, z) + (1, 1))

    drift, ddrift = _zero_drift(1)
    return CoefficientSet(
        dim=1, name="scaledstate1d", sigma=sigma, drift=drift,
        dsigma_dx=dsx, dsigma_dz=dsz, ddrift=ddrift, drift_is_zero=True,
        linear_coupling=lambda x: s * np.asarray(x, dtype=float)[..., None],
    )


def asym1d(lin: float = 0.3, quad: float = 0.1) -> CoefficientSet:
    """State-independent but asymmetric jumps: sigma(z) = lin*z + quad*z^2.

    Not compensator-free: the symmetric-measure integral of z^2 survives, so
    the simulator must add the drift correction.
    """

    def sigma(x, z):
        z = np.asarray(z, dtype=float)
        out = lin * z + quad * z**2
        return np.broadcast_to(out, _lead(x, z) + (1,)).copy()

    def dsx(x, z):
        return np.zeros(_lead(x, z) + (1, 1))

    def dsz(x, z):
        z = np.asarray(z, dtype=float)
        out = (lin + 2 * quad * z)[..., None]
        return np.broadcast_to(out, _lead(x, z) + (1, 1)).copy()

    drift, ddrift = _zero_drift(1)
    return CoefficientSet(
        dim=1, name="asym1d", sigma=sigma, drift=drift,
        dsigma_dx=dsx, dsigma_dz=dsz, ddrift=ddrift,
        compensator_free=False, drift_is_zero=True, dsigma_dx_is_zero=True,
    )


def block_coupling(d1: int, d2: int, sigma0, dsigma0=None, drift=None,
                   ddrift=None, name: str = "block") -> CoefficientSet:
    """sigma(x, z) = [[0, 0], [0, sigma0(x)]] z with invertible sigma0.

    ``sigma0`` maps x -> (..., d2, d2); ``dsigma0`` optionally supplies
    d sigma0 / d x_j as (..., d2, d2, d).  The produced jump direction is
    degenerate: its first d1 coordinates vanish identically.
    """
    d = d1 + d2

    def amat(x):
        x = np.asarray(x, dtype=float)
        s0 = np.asarray(sigma0(x), dtype=float)
        out = np.zeros(x.shape[:-1] + (d, d))
        out[..., d1:, d1:] = s0
        return out

    def sigma(x, z):
        a = amat(x)
        lead = _lead(x, z)
        a = np.broadcast_to(a, lead + (d, d))
        zz = np.broadcast_to(np.asarray(z, dtype=float), lead + (d,))
        return np.einsum("...ij,...j->...i", a, zz)

    def dsx(x, z):
        shape = _lead(x, z)
        out = np.zeros(shape + (d, d))
        if dsigma0 is not None:
            ds0 = np.asarray(dsigma0(x), dtype=float)  # (..., d2, d2, d)
            ds0 = np.broadcast_to(ds0, shape + (d - d1, d - d1, d))
            z2 = np.broadcast_to(np.asarray(z, dtype=float), shape + (d,))[..., d1:]
            out[..., d1:, :] = np.einsum("...ikj,...k->...ij", ds0, z2)
        return out

    def dsz(x, z):
        a = amat(x)
        return np.broadcast_to(a, _lead(x, z) + (d, d)).copy()

    if drift is None:
        drift, ddrift = _zero_drift(d)
        zero_drift = True
    else:
        zero_drift = False
        if ddrift is None:
            raise ConfigError("block_coupling with drift needs ddrift")

    return CoefficientSet(
        dim=d, name=name, sigma=sigma, drift=drift,
        dsigma_dx=dsx, dsigma_dz=dsz, ddrift=ddrift,
        drift_is_zero=zero_drift, dsigma_dx_is_zero=dsigma0 is None,
        linear_coupling=amat, block_dims=(d1, d2),
    )


def kinetic() -> CoefficientSet:
    """The degenerate benchmark: d=2, b(x) = (x_2, 0), jumps in x_2 only.

    Noise enters the second coordinate; the drift bracket moves it into the
    first, so the spanning condition holds at depth 2 with constant 1.
    """

    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = x[..., 1]
        return out

    def ddrift(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 1] = 1.0
        return out

    base = block_coupling(1, 1, lambda x: np.ones(np.shape(x)[:-1] + (1, 1)),
                          drift=drift, ddrift=ddrift, name="kinetic")
    return base


def block_sine(amp: float = 0.2) -> CoefficientSet:
    """d=2 block family with state-dependent invertible sigma0.

    sigma0(x) = (1 + amp*sin(x_1 + x_2)), bounded away from zero for amp < 1.
    """

    def sigma0(x):
        x = np.asarray(x, dtype=float)
        v = 1.0 + amp * np.sin(x[..., 0] + x[..., 1])
        return v[..., None, None]

    def dsigma0(x):
        x = np.asarray(x, dtype=float)
        dv = amp * np.cos(x[..., 0] + x[..., 1])
        out = np.zeros(x.shape[:-1] + (1, 1, 2))
        out[..., 0, 0, 0] = dv
        out[..., 0, 0, 1] = dv
        return out

    return block_coupling(1, 1, sigma0, dsigma0=dsigma0, name="blocksine")


BUILTIN_FAMILIES = {
    "additive1d": lambda: additive(1),
    "additive2d": lambda: additive(2),
    "sine1d": sine1d,
    "kinetic": kinetic,
    "blocksine": block_sine,
    "asym1d": asym1d,
    "scaledstate1d": scaled_state_1d,
}


def make_system(name: str, **params) -> CoefficientSet:
    """Construct a named built-in family (used by experiment configs)."""
    if name == "constant":
        return constant_coupling(params["matrix"])
    if name == "lineardrift":
        return linear_drift(params["a_matrix"], params.get("coupling"))
    try:
        factory = BUILTIN_FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown system family: {name!r}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# up-front validation probes (used by the experiment runner)
# ---------------------------------------------------------------------------

def _probe_points(dim, n, seed, box=3.0):
    rng = np.random.default_rng(np.random.Philox(key=np.array([seed, 0],
                                                              dtype=np.uint64)))
    return rng.uniform(-box, box, size=(n, dim))


def probe_contraction(c: CoefficientSet, delta: float, n: int = 256,
                      seed: int = 12345) -> float:
    """max spectral norm of grad_x sigma over sampled (x, z), |z| <= delta."""
    xs = _probe_points(c.dim, n, seed)
    zs = _probe_points(c.dim, n, seed + 1, box=delta / np.sqrt(c.dim))
    s = c.dsigma_dx(xs, zs)
    return float(np.max(np.linalg.norm(s, ord=2, axis=(-2, -1))))


def probe_jump_determinant(c: CoefficientSet, delta: float, n: int = 256,
                           seed: int = 12345) -> float:
    """min det(I + grad_x sigma) over sampled (x, z), |z| <= delta."""
    xs = _probe_points(c.dim, n, seed)
    zs = _probe_points(c.dim, n, seed + 1, box=delta / np.sqrt(c.dim))
    m = c.dsigma_dx(xs, zs) + np.eye(c.dim)
    return float(np.min(np.linalg.det(m)))


def probe_compensator_free(c: CoefficientSet, model: LevyModel, n: int = 32,
                           seed: int = 12345) -> float:
    """max |int sigma(x, z) nu(dz)| over sampled x (paired quadrature)."""
    corr = compensator_drift(c, model)
    xs = _probe_points(c.dim, n, seed)
    return float(np.max(np.abs(corr(xs))))
