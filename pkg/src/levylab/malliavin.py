"""Malliavin covariance objects and jump-size perturbation calculus.

Two covariance matrices are computed along each path (K is the inverse
Jacobian, X the state, both taken as left limits at jumps):

* the reduced matrix, a time integral over the recorded grid

      int_0^t K_s G(X_s) K_s^T ds,      G(x) = grad_z sigma(x,0) grad_z sigma(x,0)^T,

  by segment-exact trapezoid (each segment uses the one-sided limits at its
  endpoints, so piecewise-constant integrands are integrated exactly);

* the jump-weighted matrix, a sum over realized jumps of

      K_{s-} (U U^T)(X_{s-}, z) K_{s-}^T * w(z),

  where U is the jump-size sensitivity and w a cubic cutoff weight supported
  in |z| <= delta/2.

The derivative D_v X_t along a perturbation direction v is realized pathwise:
freeze the jump skeleton, shift every jump z_i -> z_i + eps * v(s_i, z_i),
re-integrate the deterministic drift, and difference.  The identity
D X_t = J_t Sigma_t (columnwise over the canonical directions) is then a
testable statement rather than an abstract operator fact, and the divergence

      div(v) = sum_jumps [ <grad log kappa, v> + div_z v ]
               - int_0^t int [ same ] nu(dz) ds

is the compensated-sum form used in the integration-by-parts check
E(D_v F) = -E(F div(v)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import CoefficientSet, jump_sensitivity
from .errors import ConfigError, DomainError
from .flow import (PathRecord, SimConfig, _chunk_indices, _draw_skeletons,
                   _integrate_chunk, _Skeleton, simulate_with_jumps)
from .levy import CubicWeight, LevyModel, grad_log_density, shell_quadrature
from .results import ScanResult, fit_loglog
from .testfunctions import SmoothFunction

__all__ = [
    "PerturbationDirection",
    "MalliavinReport",
    "reduced_matrix",
    "jump_weighted_matrix",
    "direction_values",
    "pathwise_derivative",
    "divergence",
    "IbpResult",
    "ibp_test",
    "laplace_scan",
    "malliavin_report",
]


@dataclass(frozen=True)
class PerturbationDirection:
    """Canonical jump-size perturbation: row `index` of K_{s-} U, cut off
    by a smooth weight supported in |z| <= delta/2."""

    index: int
    weight: CubicWeight


@dataclass(frozen=True)
class MalliavinReport:
    reduced: np.ndarray
    jump_weighted: np.ndarray
    min_eigenvalue: float
    divergences: np.ndarray


# ---------------------------------------------------------------------------
# covariance matrices along one path
# ---------------------------------------------------------------------------

def reduced_matrix(path: PathRecord, c: CoefficientSet,
                   t_max: float | None = None) -> np.ndarray:
    """int_0^t K G(X) K^T ds on the recorded grid (segment trapezoid)."""
    if path.inverse_jacobian is None:
        raise ConfigError("path was simulated without Jacobians")
    times = path.times
    k_post = path.inverse_jacobian
    x_post = path.states
    b1 = c.dsigma_dz(x_post, np.zeros_like(x_post))
    m_post = k_post @ b1
    f_post = m_post @ np.swapaxes(m_post, -1, -2)
    f_pre = f_post.copy()
    if len(path.jumps):
        idx = np.searchsorted(times, path.jumps.times)
        b1j = c.dsigma_dz(path.jumps.state_before,
                          np.zeros_like(path.jumps.state_before))
        mj = path.jumps.inv_jac_before @ b1j
        f_pre[idx] = mj @ np.swapaxes(mj, -1, -2)
    dt = np.diff(times)
    if t_max is not None:
        # zero out segments beyond t_max; split the straddling segment
        left = times[:-1]
        dt = np.clip(np.minimum(times[1:], t_max) - left, 0.0, None)
    return np.einsum("n,nij->ij", 0.5 * dt, f_post[:-1] + f_pre[1:])


def jump_weighted_matrix(path: PathRecord, c: CoefficientSet,
                         weight: CubicWeight,
                         t_max: float | None = None) -> np.ndarray:
    """sum over jumps of K_{s-}(U U^T)(X_{s-}, z) K_{s-}^T w(z)."""
    if path.inverse_jacobian is None:
        raise ConfigError("path was simulated without Jacobians")
    d = c.dim
    if not len(path.jumps):
        return np.zeros((d, d))
    sel = slice(None) if t_max is None else path.jumps.times <= t_max
    z = path.jumps.sizes[sel]
    if z.size == 0:
        return np.zeros((d, d))
    w = weight(z)
    u = jump_sensitivity(c, path.jumps.state_before[sel], z)
    m = path.jumps.inv_jac_before[sel] @ u
    return np.einsum("m,mik,mjk->ij", w, m, m)


def direction_values(path: PathRecord, c: CoefficientSet,
                     direction: PerturbationDirection) -> np.ndarray:
    """v_j(s_i, z_i) at the path's realized jumps, shape (m, d)."""
    if not len(path.jumps):
        return np.empty((0, c.dim))
    z = path.jumps.sizes
    u = jump_sensitivity(c, path.jumps.state_before, z)
    m = path.jumps.inv_jac_before @ u
    return m[:, direction.index, :] * direction.weight(z)[:, None]


def pathwise_derivative(path: PathRecord, c: CoefficientSet,
                        direction: PerturbationDirection, eps: float = 1e-5,
                        model: LevyModel | None = None) -> np.ndarray:
    """(X^eps_t - X_t)/eps with every jump shifted along the direction.

    The perturbed path reuses the frozen skeleton (same jump times, same
    drift integrator and grid), so the quotient converges to the Malliavin
    directional derivative as eps -> 0.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ConfigError("eps should lie in [1e-7, 1e-3]")
    v = direction_values(path, c, direction)
    z_pert = path.jumps.sizes + eps * v
    limit = 2.0 * direction.weight.support_radius  # = delta
    if np.any(np.linalg.norm(z_pert, axis=-1) >= limit):
        raise DomainError("perturbed jump left the measure's support")
    rec = simulate_with_jumps(c, model, path.x0, path.jumps.times, z_pert,
                              path.t_end, path.dt_max,
                              record_jacobians=False)
    return (rec.final_state - path.final_state) / eps


# ---------------------------------------------------------------------------
# divergence of a direction field
# ---------------------------------------------------------------------------

def _direction_at(c, direction, x, k_inv, z):
    """v(s, z) for given left-limit state x, inverse Jacobian k_inv; batched.

    x, k_inv carry leading shape (...,); z is (..., d) broadcastable.
    """
    u = jump_sensitivity(c, x, z)
    m = k_inv @ u
    return m[..., direction.index, :] * direction.weight(z)[..., None]


def _div_term(c, model, direction, x, k_inv, z, fd_rel=1e-6):
    """<grad log kappa, v> + div_z v at (x, K, z); batched over leading dims."""
    d = c.dim
    v = _direction_at(c, direction, x, k_inv, z)
    g = grad_log_density(model, z)
    out = np.einsum("...i,...i->...", g, v)
    h = fd_rel * np.linalg.norm(z, axis=-1, keepdims=True)
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        zp = z + h * e
        zm = z - h * e
        vp = _direction_at(c, direction, x, k_inv, zp)[..., k]
        vm = _direction_at(c, direction, x, k_inv, zm)[..., k]
        out = out + (vp - vm) / (2.0 * h[..., 0])
    return out


def _compensator_nodes(model: LevyModel, weight: CubicWeight,
                       n_radial: int = 8, n_sphere: int | None = None):
    """nu-quadrature nodes on trunc_low < |z| <= delta/2 (the weight support)."""
    if n_sphere is None:
        n_sphere = {1: 2, 2: 8, 3: 32}.get(model.dim, 32)
    hi = min(weight.support_radius, model.support_radius)
    return shell_quadrature(model, model.trunc_low, hi, n_radial=n_radial,
                            n_sphere=n_sphere)


def divergence(path: PathRecord, c: CoefficientSet, model: LevyModel,
               direction: PerturbationDirection, n_time_nodes: int = 33,
               n_radial: int = 8) -> float:
    """Compensated-sum divergence of the direction field along one path."""
    if path.inverse_jacobian is None:
        raise ConfigError("path was simulated without Jacobians")
    total = 0.0
    if len(path.jumps):
        g = _div_term(c, model, direction, path.jumps.state_before,
                      path.jumps.inv_jac_before, path.jumps.sizes)
        total += float(g.sum())
    # compensator: subsample the recorded grid, keeping all jump nodes so
    # every integration segment is jump-free
    zq, wq = _compensator_nodes(model, direction.weight, n_radial=n_radial)
    if zq.shape[0] == 0:
        return total
    times = path.times
    n = len(times)
    take = np.unique(np.concatenate([
        np.linspace(0, n - 1, min(n, n_time_nodes)).astype(int),
        np.searchsorted(times, path.jumps.times) if len(path.jumps) else
        np.empty(0, dtype=int),
    ]))
    sel_t = times[take]
    x_post = path.states[take]
    k_post = path.inverse_jacobian[take]
    x_pre = x_post.copy()
    k_pre = k_post.copy()
    if len(path.jumps):
        jn = np.searchsorted(sel_t, path.jumps.times)
        x_pre[jn] = path.jumps.state_before
        k_pre[jn] = path.jumps.inv_jac_before

    def inner(xs, ks):
        g = _div_term(c, model, direction, xs[:, None, :],
                      ks[:, None, :, :], zq[None, :, :])
        return g @ wq

    f_post = inner(x_post, k_post)
    f_pre = inner(x_pre, k_pre)
    dt = np.diff(sel_t)
    total -= float(np.sum(0.5 * dt * (f_post[:-1] + f_pre[1:])))
    return total


# ---------------------------------------------------------------------------
# integration by parts (chunked Monte Carlo)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IbpResult:
    lhs: float
    rhs: float
    stderr_lhs: float
    stderr_rhs: float
    pooled_stderr: float
    n_paths: int

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs


def _reduce_by_path(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-path sums of a flat per-jump array (empty paths give 0)."""
    nc = len(offsets) - 1
    padded = np.concatenate([values, [0.0]])
    sums = np.add.reduceat(padded, offsets[:-1])[:nc]
    # reduceat copies the element at the index for empty slices; mask them
    return np.where(np.diff(offsets) > 0, sums, 0.0)


def _chunk_divergences(res, c, model, direction, n_time_nodes, n_radial):
    """Divergence per path of one simulated chunk."""
    skel = res.skeleton
    nc = skel.counts.shape[0]
    out = np.zeros(nc)
    if skel.offsets[-1]:
        g = _div_term(c, model, direction, res.j_x_pre, res.j_inv_pre,
                      skel.sizes)
        out += _reduce_by_path(g, skel.offsets)
    zq, wq = _compensator_nodes(model, direction.weight, n_radial=n_radial)
    if zq.shape[0] == 0:
        return out
    if res.jump_only:
        # state and K are piecewise constant: segment sums are exact.
        # Flatten all paths' segments: path i owns counts[i]+1 segments.
        d = c.dim
        t_end = res.grid_times[-1]
        counts = skel.counts
        seg_offsets = np.concatenate([[0], np.cumsum(counts + 1)])
        n_seg = int(seg_offsets[-1])
        xs = np.empty((n_seg, d))
        ks = np.empty((n_seg, d, d))
        seg_len = np.empty(n_seg)
        for i in range(nc):
            lo, hi = skel.offsets[i], skel.offsets[i + 1]
            s0, s1 = seg_offsets[i], seg_offsets[i + 1]
            seg_t = np.concatenate([[0.0], skel.times[lo:hi], [t_end]])
            seg_len[s0:s1] = np.diff(seg_t)
            xs[s0] = res.states[0][i]
            xs[s0 + 1:s1] = res.j_x_post[lo:hi]
            ks[s0] = np.eye(d)
            ks[s0 + 1:s1] = res.j_inv_post[lo:hi]
        g = _div_term(c, model, direction, xs[:, None, :],
                      ks[:, None, :, :], zq[None, :, :]) @ wq
        out -= _reduce_by_path(g * seg_len, seg_offsets)
        return out
    # drift mode: shared grid nodes (jump-free by construction), trapezoid;
    # loop over time nodes to bound the (nc, nz) working set
    n = len(res.grid_times)
    take = np.unique(np.linspace(0, n - 1, min(n, n_time_nodes)).astype(int))
    sel_t = res.grid_times[take]
    vals = np.empty((len(take), nc))
    for a, gi in enumerate(take):
        g = _div_term(c, model, direction, res.states[gi][:, None, :],
                      res.inv_jac[gi][:, None, :, :], zq[None, :, :])
        vals[a] = g @ wq
    dt = np.diff(sel_t)
    out -= np.einsum("t,tn->n", dt, 0.5 * (vals[:-1] + vals[1:]))
    return out


def ibp_test(c: CoefficientSet, model: LevyModel, cfg: SimConfig,
             functional: SmoothFunction, direction_index: int,
             weight: CubicWeight | None = None, eps: float = 1e-5,
             n_time_nodes: int = 17, n_radial: int = 2) -> IbpResult:
    """Two-sided Monte-Carlo estimate of the integration-by-parts identity.

    lhs averages the pathwise finite-difference derivative of F; rhs averages
    -F * div(v).  Both sides share the same paths, so the pooled standard
    error is that of the per-path gap.
    """
    if weight is None:
        weight = CubicWeight(model.delta)
    direction = PerturbationDirection(direction_index, weight)
    x0 = np.zeros(c.dim)
    lhs_parts, rhs_parts, gap_parts = [], [], []
    for idx_range in _chunk_indices(cfg.n_paths, cfg.chunk_size):
        indices = list(idx_range)
        skel = _draw_skeletons(model, cfg.seed, indices, cfg.t_end)
        x0s = np.broadcast_to(x0, (len(indices), c.dim)).copy()
        res = _integrate_chunk(c, model, x0s, skel, cfg.t_end, cfg.dt_max,
                               record_jacobians=True, keep_grid=True)
        # perturbed replay with frozen skeleton
        if skel.offsets[-1]:
            u = jump_sensitivity(c, res.j_x_pre, skel.sizes)
            m = res.j_inv_pre @ u
            v = m[:, direction.index, :] * weight(skel.sizes)[:, None]
        else:
            v = np.empty((0, c.dim))
        skel_p = _Skeleton(skel.counts, skel.offsets, skel.times,
                           skel.sizes + eps * v)
        res_p = _integrate_chunk(c, model, x0s, skel_p, cfg.t_end,
                                 cfg.dt_max, record_jacobians=False,
                                 keep_grid=False)
        f0 = functional(res.final_state)
        lhs_i = (functional(res_p.final_state) - f0) / eps
        div_i = _chunk_divergences(res, c, model, direction, n_time_nodes,
                                   n_radial)
        rhs_i = -f0 * div_i
        lhs_parts.append(lhs_i)
        rhs_parts.append(rhs_i)
        gap_parts.append(lhs_i - rhs_i)
    lhs = np.concatenate(lhs_parts)
    rhs = np.concatenate(rhs_parts)
    gap = np.concatenate(gap_parts)
    n = len(lhs)
    return IbpResult(
        lhs=float(lhs.mean()),
        rhs=float(rhs.mean()),
        stderr_lhs=float(lhs.std(ddof=1) / np.sqrt(n)),
        stderr_rhs=float(rhs.std(ddof=1) / np.sqrt(n)),
        pooled_stderr=float(gap.std(ddof=1) / np.sqrt(n)),
        n_paths=n,
    )


# ---------------------------------------------------------------------------
# Laplace-transform scan of the covariance quadratic form
# ---------------------------------------------------------------------------

def ibp_suite(c: CoefficientSet, model: LevyModel, cfg: SimConfig,
              functionals, direction_indices, weight: CubicWeight | None = None,
              eps: float = 1e-5, n_time_nodes: int = 17,
              n_radial: int = 2) -> dict:
    """All (functional, direction) pairs sharing one base simulation.

    Replays and divergences are computed once per direction; functionals are
    cheap endpoint evaluations.  Returns {(name, j): IbpResult}.
    """
    if weight is None:
        weight = CubicWeight(model.delta)
    x0 = np.zeros(c.dim)
    acc = {(f.name, j): [[], [], []] for f in functionals
           for j in direction_indices}
    for idx_range in _chunk_indices(cfg.n_paths, cfg.chunk_size):
        indices = list(idx_range)
        skel = _draw_skeletons(model, cfg.seed, indices, cfg.t_end)
        x0s = np.broadcast_to(x0, (len(indices), c.dim)).copy()
        res = _integrate_chunk(c, model, x0s, skel, cfg.t_end, cfg.dt_max,
                               record_jacobians=True, keep_grid=True)
        if skel.offsets[-1]:
            u = jump_sensitivity(c, res.j_x_pre, skel.sizes)
            m = res.j_inv_pre @ u
            wz = weight(skel.sizes)
        for j in direction_indices:
            direction = PerturbationDirection(j, weight)
            if skel.offsets[-1]:
                v = m[:, j, :] * wz[:, None]
            else:
                v = np.empty((0, c.dim))
            skel_p = _Skeleton(skel.counts, skel.offsets, skel.times,
                               skel.sizes + eps * v)
            res_p = _integrate_chunk(c, model, x0s, skel_p, cfg.t_end,
                                     cfg.dt_max, record_jacobians=False,
                                     keep_grid=False)
            div_i = _chunk_divergences(res, c, model, direction,
                                       n_time_nodes, n_radial)
            for f in functionals:
                f0 = f(res.final_state)
                lhs_i = (f(res_p.final_state) - f0) / eps
                rhs_i = -f0 * div_i
                parts = acc[(f.name, j)]
                parts[0].append(lhs_i)
                parts[1].append(rhs_i)
                parts[2].append(lhs_i - rhs_i)
    out = {}
    for key, (lp, rp, gp) in acc.items():
        lhs = np.concatenate(lp)
        rhs = np.concatenate(rp)
        gap = np.concatenate(gp)
        n = len(lhs)
        out[key] = IbpResult(
            lhs=float(lhs.mean()), rhs=float(rhs.mean()),
            stderr_lhs=float(lhs.std(ddof=1) / np.sqrt(n)),
            stderr_rhs=float(rhs.std(ddof=1) / np.sqrt(n)),
            pooled_stderr=float(gap.std(ddof=1) / np.sqrt(n)),
            n_paths=n,
        )
    return out


def laplace_scan(c: CoefficientSet, model: LevyModel, cfg: SimConfig,
                 u, lambdas, t: float, weight: CubicWeight | None = None,
                 which: str = "jump", x0=None) -> ScanResult:
    """Monte-Carlo estimates of E exp(-lambda * u Sigma_t u^T) over lambdas.

    `which` selects the jump-weighted matrix ("jump") or the reduced matrix
    ("reduced").  Fits log(-log estimate) against log lambda over the window
    where the estimate lies in [1e-6, 0.9] and reports the slope, plus
    pairwise monotonicity diagnostics (consecutive decreases measured in
    units of the paired-difference standard error).
    """
    if which not in ("jump", "reduced"):
        raise ConfigError("which must be 'jump' or 'reduced'")
    if weight is None:
        weight = CubicWeight(model.delta)
    u = np.asarray(u, dtype=float).reshape(-1)
    u = u / np.linalg.norm(u)
    lambdas = np.asarray(lambdas, dtype=float)
    x0 = np.zeros(c.dim) if x0 is None else np.asarray(x0, dtype=float)
    cfg_t = SimConfig(t_end=t, dt_max=cfg.dt_max, n_paths=cfg.n_paths,
                      seed=cfg.seed, record_jacobians=True,
                      chunk_size=cfg.chunk_size, n_workers=1)

    nl = len(lambdas)
    s1 = np.zeros(nl)
    s2 = np.zeros(nl)
    s_pair = np.zeros(max(nl - 1, 0))
    n = 0
    for idx_range in _chunk_indices(cfg_t.n_paths, cfg_t.chunk_size):
        indices = list(idx_range)
        skel = _draw_skeletons(model, cfg_t.seed, indices, cfg_t.t_end)
        x0s = np.broadcast_to(x0, (len(indices), c.dim)).copy()
        res = _integrate_chunk(c, model, x0s, skel, cfg_t.t_end,
                               cfg_t.dt_max, record_jacobians=True,
                               keep_grid=(which == "reduced"))
        if which == "jump":
            if skel.offsets[-1]:
                uu = jump_sensitivity(c, res.j_x_pre, skel.sizes)
                m = res.j_inv_pre @ uu
                contrib = (np.einsum("i,mij->mj", u, m) ** 2).sum(axis=1)
                q = _reduce_by_path(contrib * weight(skel.sizes),
                                    skel.offsets)
            else:
                q = np.zeros(len(indices))
        else:
            # grid-node trapezoid of |u K B1(X)|^2 (jump nodes not in the
            # shared grid; exact when the integrand is continuous in s)
            b1 = c.dsigma_dz(res.states, np.zeros_like(res.states))
            m = res.inv_jac @ b1
            f = (np.einsum("i,tnij->tnj", u, m) ** 2).sum(axis=-1)
            dt = np.diff(res.grid_times)
            q = np.einsum("t,tn->n", dt, 0.5 * (f[:-1] + f[1:]))
        e = np.exp(-lambdas[:, None] * q[None, :])
        s1 += e.sum(axis=1)
        s2 += (e**2).sum(axis=1)
        if nl > 1:
            s_pair += (e[:-1] * e[1:]).sum(axis=1)
        n += len(indices)
    est = s1 / n
    var = np.maximum(s2 / n - est**2, 0.0)
    se = np.sqrt(var / n)
    # paired standard error of consecutive differences
    diffs = est[:-1] - est[1:]
    cov = s_pair / n - est[:-1] * est[1:]
    var_diff = np.maximum(var[:-1] + var[1:] - 2 * cov, 0.0)
    se_diff = np.sqrt(var_diff / n)
    window = (est <= 0.9) & (est >= 1e-6)
    slope, slope_se, win = fit_loglog(lambdas, -np.log(np.maximum(est, 1e-300)),
                                      mask=window)
    monotone = bool(np.all(diffs > 0)) if nl > 1 else True
    monotone_4se = bool(np.all(diffs > 4 * se_diff)) if nl > 1 else True
    return ScanResult(
        abscissae=lambdas, ordinates=est, stderr=se,
        fitted_exponent=slope, exponent_stderr=slope_se, fit_window=win,
        extras={
            "which": which, "t": t, "u": u.tolist(), "n_paths": n,
            "monotone": monotone, "monotone_beyond_4se": monotone_4se,
            "pair_diff": diffs, "pair_diff_se": se_diff,
        },
    )


def malliavin_report(path: PathRecord, c: CoefficientSet, model: LevyModel,
                     weight: CubicWeight | None = None) -> MalliavinReport:
    """Reduced and jump-weighted matrices plus per-direction divergences."""
    if weight is None:
        weight = CubicWeight(model.delta)
    red = reduced_matrix(path, c)
    jw = jump_weighted_matrix(path, c, weight)
    divs = np.array([
        divergence(path, c, model, PerturbationDirection(j, weight))
        for j in range(c.dim)
    ])
    return MalliavinReport(
        reduced=red,
        jump_weighted=jw,
        min_eigenvalue=float(np.linalg.eigvalsh(jw)[0]),
        divergences=divs,
    )
