"""Pathwise time reversal of the jump flow.

Running the forward record backwards inverts the flow exactly at finite
activity: the reversed driver replays the forward jumps in reverse order
(the jump at reversed time tau equals the forward jump at T - tau), each
undone through the inverse jump map, while the drift ODE runs with the
forward effective drift negated.  The only error source is the drift
integrator, so round-trip defects sit at the ODE tolerance.

The reversed drift used here is -(b - int sigma d nu_trunc): expanding the
reversed SDE's compensator against the correction integral inside the
reversed drift coefficient cancels both quadratures identically, which is
why the integrator never needs them (``coeffs.reversed_coefficients`` still
exposes the reversed pair itself).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import CoefficientSet, compensator_drift, compensator_drift_grad, invert_jump_map
from .errors import ConfigError
from .flow import PathRecord, SimConfig, batch_endpoints, simulate_with_jumps
from .levy import LevyModel
from .testfunctions import SmoothFunction

__all__ = ["ReversedRun", "reverse_and_check", "roundtrip_errors",
           "L1BoundReport", "l1_bound_check"]


@dataclass(frozen=True)
class ReversedRun:
    forward: PathRecord
    reversed_times: np.ndarray
    reversed_sizes: np.ndarray
    backward_times: np.ndarray
    backward_states: np.ndarray
    roundtrip_error: float


def _reversed_system(c: CoefficientSet, model: LevyModel | None) -> CoefficientSet:
    """System whose forward run integrates the reversed dynamics.

    Jump map: x -> x - sigma(phi_z^{-1}(x), z); drift: negated effective
    forward drift (compensator corrections cancel, see module docstring).
    """

    def rev_sigma(x, z):
        return -c.sigma(invert_jump_map(c, x, z), z)

    if c.compensator_free or model is None:
        rev_drift = lambda x: -c.drift(x)  # noqa: E731
        rev_ddrift = lambda x: -c.ddrift(x)  # noqa: E731
    else:
        corr = compensator_drift(c, model)
        dcorr = compensator_drift_grad(c, model)
        rev_drift = lambda x: -(c.drift(x) - corr(x))  # noqa: E731
        rev_ddrift = lambda x: -(c.ddrift(x) - dcorr(x))  # noqa: E731

    return CoefficientSet(
        dim=c.dim,
        name=c.name + "_rev",
        sigma=rev_sigma,
        drift=rev_drift,
        dsigma_dx=c.dsigma_dx,  # unused: reversal runs without Jacobians
        dsigma_dz=c.dsigma_dz,
        ddrift=rev_ddrift,
        compensator_free=True,  # corrections already folded into the drift
        drift_is_zero=c.drift_is_zero and c.compensator_free,
    )


def reverse_and_check(c: CoefficientSet, model: LevyModel | None,
                      path: PathRecord) -> ReversedRun:
    """Integrate the reversed flow from X_T and report the round-trip error."""
    t_end = path.t_end
    rev_times = np.sort(t_end - path.jumps.times)
    order = np.argsort(t_end - path.jumps.times, kind="stable")
    rev_sizes = path.jumps.sizes[order]
    rev_c = _reversed_system(c, model)
    rec = simulate_with_jumps(rev_c, None, path.final_state, rev_times,
                              rev_sizes, t_end, path.dt_max,
                              record_jacobians=False)
    err = float(np.linalg.norm(rec.final_state - path.x0))
    return ReversedRun(
        forward=path,
        reversed_times=rev_times,
        reversed_sizes=rev_sizes,
        backward_times=rec.times,
        backward_states=rec.states,
        roundtrip_error=err,
    )


def roundtrip_errors(c: CoefficientSet, model: LevyModel | None,
                     records, chunk_size: int = 256) -> np.ndarray:
    """Round-trip errors for many paths, integrated chunk-by-chunk.

    Same computation as reverse_and_check, vectorized across paths; all
    records must share t_end and dt_max (one batch).
    """
    from .flow import _integrate_chunk, _Skeleton

    records = list(records)
    if not records:
        return np.empty(0)
    t_end = records[0].t_end
    dt_max = records[0].dt_max
    rev_c = _reversed_system(c, model)
    errs = np.empty(len(records))
    for lo in range(0, len(records), chunk_size):
        chunk = records[lo:lo + chunk_size]
        if any(r.t_end != t_end or r.dt_max != dt_max for r in chunk):
            raise ConfigError("records mix t_end/dt_max; reverse them "
                              "batch by batch")
        counts = np.array([len(r.jumps) for r in chunk], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        times = np.concatenate([np.sort(t_end - r.jumps.times)
                                for r in chunk]) if counts.sum() else np.empty(0)
        sizes = np.concatenate([
            r.jumps.sizes[np.argsort(t_end - r.jumps.times, kind="stable")]
            for r in chunk]) if counts.sum() else np.empty((0, c.dim))
        skel = _Skeleton(counts, offsets, times, sizes)
        x0s = np.stack([r.final_state for r in chunk])
        res = _integrate_chunk(rev_c, None, x0s, skel, t_end, dt_max,
                               record_jacobians=False, keep_grid=False)
        starts = np.stack([r.x0 for r in chunk])
        errs[lo:lo + len(chunk)] = np.linalg.norm(
            res.final_state - starts, axis=1)
    return errs


@dataclass(frozen=True)
class L1BoundReport:
    t_list: np.ndarray
    ratios: np.ndarray
    c_estimate: float
    boundary_mass: float
    f_l1: float


def l1_bound_check(c: CoefficientSet, model: LevyModel | None,
                   cfg: SimConfig, f: SmoothFunction, grid_axes,
                   t_list=None, boundary_tol: float = 0.01) -> L1BoundReport:
    """Grid estimate of sup_t ||E f(X_t(.))||_1 / ||f||_1.

    ``grid_axes`` is a list of per-dimension node arrays covering the support
    of f expanded by the flow's reach; the L1 norms are grid quadratures of
    Monte-Carlo means with common random numbers across grid points.
    ConfigError if more than ``boundary_tol`` of the endpoint samples exit
    the grid box.
    """
    axes = [np.asarray(a, dtype=float) for a in grid_axes]
    if len(axes) != c.dim:
        raise ConfigError("grid dimension does not match the system")
    mesh = np.meshgrid(*axes, indexing="ij")
    xs = np.stack([m.ravel() for m in mesh], axis=-1)
    cell = float(np.prod([a[1] - a[0] for a in axes]))
    f_l1 = float(np.sum(np.abs(f(xs))) * cell)
    if f_l1 <= 0:
        raise ConfigError("f vanishes on the grid")
    if t_list is None:
        t_list = np.linspace(0.1, min(1.0, cfg.t_end), 5)
    t_list = np.asarray(t_list, dtype=float)
    ratios = np.empty(len(t_list))
    ends = {}
    for i, x0 in enumerate(xs):
        ends[i] = batch_endpoints(c, model, cfg, x0, snapshot_times=t_list)
    # the grid must contain the mass of |T_t f|: the outermost node shell
    # should carry a negligible share of the L1 quadrature
    on_boundary = np.zeros(len(xs), dtype=bool)
    for j, a in enumerate(axes):
        on_boundary |= (xs[:, j] == a[0]) | (xs[:, j] == a[-1])
    boundary_share = 0.0
    for k in range(len(t_list)):
        means = np.array([f(ends[i][k]).mean() for i in range(len(xs))])
        total = float(np.sum(np.abs(means)))
        if total > 0:
            boundary_share = max(
                boundary_share,
                float(np.sum(np.abs(means[on_boundary]))) / total)
        ratios[k] = float(total * cell / f_l1)
    if boundary_share > boundary_tol:
        raise ConfigError(
            f"grid too small: boundary nodes carry {boundary_share:.1%} "
            "of the L1 mass"
        )
    return L1BoundReport(
        t_list=t_list,
        ratios=ratios,
        c_estimate=float(ratios.max()),
        boundary_mass=boundary_share,
        f_l1=f_l1,
    )
