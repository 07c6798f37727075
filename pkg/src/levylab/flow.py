"""Jump-SDE simulation with Jacobian and inverse-Jacobian flows.

Between jumps the state follows the drift ODE (4th-order Runge-Kutta,
substeps bounded by ``dt_max``); jumps are applied exactly:

    X <- X + sigma(X-, z)
    J <- (I + grad_x sigma(X-, z)) J
    K <- K (I + grad_x sigma(X-, z))^(-1)

so J K - I picks up only the classical ODE error between jumps.  Jump times
are a Poisson process at the truncated measure's total rate; sizes are exact
draws from the normalized truncated measure.  No compensator drift is added
for compensator-free systems (the symmetric-measure integral of sigma
vanishes); otherwise the quadrature correction - int sigma(x, z) nu(dz) and
its x-gradient enter the drift and the variational equations.

Paths are integrated in fixed-size chunks, vectorized across paths.  Each
path's randomness comes from its own counter-based stream keyed by
(seed, path_index), so results are reproducible and independent of scheduling
order and worker count; chunk composition depends only on the configuration.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .coeffs import (CoefficientSet, compensator_drift,
                     compensator_drift_grad, small_inv)
from .errors import ConfigError
from .levy import LevyModel, jump_rate, sample_jumps

__all__ = [
    "SimConfig",
    "JumpLog",
    "PathRecord",
    "simulate",
    "batch_simulate",
    "simulate_with_jumps",
    "batch_endpoints",
    "max_inverse_defect",
    "empirical_moment_report",
    "dump_jsonl",
    "path_rng",
]


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters shared by all Monte-Carlo tasks."""

    t_end: float = 1.0
    dt_max: float = 1e-3
    n_paths: int = 1
    seed: int = 0
    record_jacobians: bool = True
    chunk_size: int = 256
    n_workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.t_end <= 1.0:
            raise ConfigError("t_end must lie in (0, 1]")
        if not 0.0 < self.dt_max <= self.t_end:
            raise ConfigError("dt_max must lie in (0, t_end]")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.chunk_size < 1 or self.n_workers < 1:
            raise ConfigError("chunk_size and n_workers must be >= 1")


@dataclass(frozen=True)
class JumpLog:
    """Realized jumps of one path, with left limits at each jump time."""

    times: np.ndarray  # (m,)
    sizes: np.ndarray  # (m, d)
    state_before: np.ndarray  # (m, d)
    state_after: np.ndarray  # (m, d)
    jac_before: np.ndarray | None = None
    jac_after: np.ndarray | None = None
    inv_jac_before: np.ndarray | None = None
    inv_jac_after: np.ndarray | None = None

    def __len__(self):
        return self.times.shape[0]


@dataclass(frozen=True)
class PathRecord:
    """One simulated trajectory on its recording grid (cadlag convention:
    at a jump time the recorded state/Jacobian is the post-jump value; left
    limits live in ``jumps``)."""

    x0: np.ndarray
    t_end: float
    dt_max: float
    times: np.ndarray
    states: np.ndarray
    jumps: JumpLog
    jacobian: np.ndarray | None
    inverse_jacobian: np.ndarray | None
    rng_tag: tuple[int, int]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def path_rng(seed: int, index: int):
    """Counter-based per-path stream; independent for distinct (seed, index)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# skeletons: jump times and sizes per path
# ---------------------------------------------------------------------------

@dataclass
class _Skeleton:
    counts: np.ndarray  # (nc,)
    offsets: np.ndarray  # (nc+1,)
    times: np.ndarray  # flat
    sizes: np.ndarray  # flat (T, d)


def _draw_skeletons(model: LevyModel | None, seed: int,
                    indices: Sequence[int], t_end: float) -> _Skeleton:
    if model is None:
        nc = len(indices)
        return _Skeleton(np.zeros(nc, dtype=np.int64),
                         np.zeros(nc + 1, dtype=np.int64),
                         np.empty(0), np.empty((0, 1)))
    rate = jump_rate(model)
    counts, all_times, all_sizes = [], [], []
    for i in indices:
        rng = path_rng(seed, i)
        n = int(rng.poisson(rate * t_end))
        t = np.sort(rng.uniform(0.0, t_end, n))
        z = sample_jumps(model, rng, n)
        counts.append(n)
        all_times.append(t)
        all_sizes.append(z)
    counts = np.asarray(counts, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    times = np.concatenate(all_times) if all_times else np.empty(0)
    sizes = (np.concatenate(all_sizes) if all_sizes
             else np.empty((0, model.dim)))
    return _Skeleton(counts, offsets, times, sizes)


def _skeleton_from_arrays(jump_times, jump_sizes, dim) -> _Skeleton:
    t = np.asarray(jump_times, dtype=float)
    z = np.asarray(jump_sizes, dtype=float).reshape(len(t), dim)
    order = np.argsort(t, kind="stable")
    return _Skeleton(np.array([len(t)]), np.array([0, len(t)]),
                     t[order], z[order])


# ---------------------------------------------------------------------------
# chunk integration
# ---------------------------------------------------------------------------

@dataclass
class _ChunkResult:
    grid_times: np.ndarray  # (ng,) recording nodes (incl. 0 and t_end)
    states: np.ndarray | None  # (ng, nc, d)
    jac: np.ndarray | None
    inv_jac: np.ndarray | None
    final_state: np.ndarray  # (nc, d)
    final_jac: np.ndarray | None
    final_inv_jac: np.ndarray | None
    snapshots: np.ndarray | None  # (n_snap, nc, d)
    skeleton: _Skeleton
    j_x_pre: np.ndarray
    j_x_post: np.ndarray
    j_jac_pre: np.ndarray | None
    j_jac_post: np.ndarray | None
    j_inv_pre: np.ndarray | None
    j_inv_post: np.ndarray | None
    jump_only: bool


def _drift_fields(c: CoefficientSet, model: LevyModel | None, need_jac: bool):
    if c.compensator_free or model is None:
        return c.drift, (c.ddrift if need_jac else None)
    corr = compensator_drift(c, model)
    fdrift = lambda x: c.drift(x) - corr(x)  # noqa: E731
    if not need_jac:
        return fdrift, None
    dcorr = compensator_drift_grad(c, model)
    return fdrift, lambda x: c.ddrift(x) - dcorr(x)


def _integrate_chunk(c: CoefficientSet, model: LevyModel | None,
                     x0s: np.ndarray, skel: _Skeleton, t_end: float,
                     dt_max: float, record_jacobians: bool, keep_grid: bool,
                     snapshot_times: np.ndarray | None = None) -> _ChunkResult:
    nc, d = x0s.shape
    eye = np.eye(d)
    jump_only = c.drift_is_zero and c.compensator_free
    total_jumps = int(skel.offsets[-1])

    j_x_pre = np.empty((total_jumps, d))
    j_x_post = np.empty((total_jumps, d))
    if record_jacobians:
        j_jac_pre = np.empty((total_jumps, d, d))
        j_jac_post = np.empty((total_jumps, d, d))
        j_inv_pre = np.empty((total_jumps, d, d))
        j_inv_post = np.empty((total_jumps, d, d))
    else:
        j_jac_pre = j_jac_post = j_inv_pre = j_inv_post = None

    X = np.array(x0s, dtype=float)
    if record_jacobians:
        J = np.broadcast_to(eye, (nc, d, d)).copy()
        K = J.copy()
    else:
        J = K = None

    def apply_jumps(rows, z, slots):
        nonlocal X, J, K
        xp = X[rows]
        j_x_pre[slots] = xp
        X[rows] = xp + c.sigma(xp, z)
        j_x_post[slots] = X[rows]
        if record_jacobians:
            j_jac_pre[slots] = J[rows]
            j_inv_pre[slots] = K[rows]
            if not c.dsigma_dx_is_zero:
                m = c.dsigma_dx(xp, z) + eye
                J[rows] = m @ J[rows]
                K[rows] = K[rows] @ small_inv(m)
            j_jac_post[slots] = J[rows]
            j_inv_post[slots] = K[rows]

    if jump_only:
        # state changes only at jumps; process them in per-path order
        ptr = skel.offsets[:-1].copy()
        end = skel.offsets[1:]
        max_rounds = int(skel.counts.max()) if nc else 0
        for _ in range(max_rounds):
            rows = np.nonzero(ptr < end)[0]
            if rows.size == 0:
                break
            slots = ptr[rows]
            apply_jumps(rows, skel.sizes[slots], slots)
            ptr[rows] += 1
        grid_times = np.array([0.0, t_end])
        states = jac = inv_jac = None
        if keep_grid:
            states = np.stack([x0s, X])
            if record_jacobians:
                ident = np.broadcast_to(eye, (nc, d, d))
                jac = np.stack([ident, J])
                inv_jac = np.stack([ident, K])
        snaps = None
        if snapshot_times is not None:
            snaps = np.empty((len(snapshot_times), nc, d))
            for si, tau in enumerate(snapshot_times):
                snaps[si] = x0s
                for i in range(nc):
                    lo, hi = skel.offsets[i], skel.offsets[i + 1]
                    pos = int(np.searchsorted(skel.times[lo:hi], tau,
                                              side="right"))
                    if pos > 0:
                        snaps[si, i] = j_x_post[lo + pos - 1]
        return _ChunkResult(grid_times, states, jac, inv_jac, X.copy(),
                            None if J is None else J.copy(),
                            None if K is None else K.copy(),
                            snaps, skel, j_x_pre, j_x_post,
                            j_jac_pre, j_jac_post, j_inv_pre, j_inv_post,
                            jump_only=True)

    # drift-active mode: uniform grid (plus snapshot nodes), RK4 in between
    n_steps = int(np.ceil(t_end / dt_max - 1e-12))
    nodes = np.linspace(0.0, t_end, n_steps + 1)
    if snapshot_times is not None and len(snapshot_times):
        nodes = np.union1d(nodes, np.asarray(snapshot_times, dtype=float))
    ng = len(nodes)

    f, g = _drift_fields(c, model, record_jacobians)

    def rk4(rows, dt):
        nonlocal X, J, K
        x = X[rows]
        h = dt[:, None]
        k1 = f(x)
        x2 = x + 0.5 * h * k1
        k2 = f(x2)
        x3 = x + 0.5 * h * k2
        k3 = f(x3)
        x4 = x + h * k3
        k4 = f(x4)
        X[rows] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if record_jacobians:
            hh = dt[:, None, None]
            a1, a2, a3, a4 = g(x), g(x2), g(x3), g(x4)
            j = J[rows]
            q1 = a1 @ j
            q2 = a2 @ (j + 0.5 * hh * q1)
            q3 = a3 @ (j + 0.5 * hh * q2)
            q4 = a4 @ (j + hh * q3)
            J[rows] = j + (hh / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4)
            k = K[rows]
            p1 = -(k @ a1)
            p2 = -((k + 0.5 * hh * p1) @ a2)
            p3 = -((k + 0.5 * hh * p2) @ a3)
            p4 = -((k + hh * p3) @ a4)
            K[rows] = k + (hh / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4)

    states = jac = inv_jac = None
    if keep_grid:
        states = np.empty((ng, nc, d))
        states[0] = X
        if record_jacobians:
            jac = np.empty((ng, nc, d, d))
            inv_jac = np.empty((ng, nc, d, d))
            jac[0] = J
            inv_jac[0] = K
    snap_idx = (np.searchsorted(nodes, snapshot_times)
                if snapshot_times is not None else None)
    snaps = (np.empty((len(snapshot_times), nc, d))
             if snapshot_times is not None else None)
    if snaps is not None:
        for si, gi in enumerate(snap_idx):
            if gi == 0:
                snaps[si] = X

    cur_t = np.zeros(nc)
    ptr = skel.offsets[:-1].copy()
    end = skel.offsets[1:]
    big = np.inf
    safe_times = skel.times if total_jumps else np.zeros(1)
    for gi in range(ng - 1):
        t1 = nodes[gi + 1]
        while total_jumps:
            has = ptr < end
            nxt = np.where(has, safe_times[np.minimum(ptr, total_jumps - 1)], big)
            mask = nxt <= t1
            if not mask.any():
                break
            rows = np.nonzero(mask)[0]
            rk4(rows, nxt[rows] - cur_t[rows])
            cur_t[rows] = nxt[rows]
            slots = ptr[rows]
            apply_jumps(rows, skel.sizes[slots], slots)
            ptr[rows] += 1
        rk4(np.arange(nc), t1 - cur_t)
        cur_t[:] = t1
        if keep_grid:
            states[gi + 1] = X
            if record_jacobians:
                jac[gi + 1] = J
                inv_jac[gi + 1] = K
        if snaps is not None:
            hits = np.nonzero(snap_idx == gi + 1)[0]
            for si in hits:
                snaps[si] = X
    return _ChunkResult(nodes, states, jac, inv_jac, X.copy(),
                        None if J is None else J.copy(),
                        None if K is None else K.copy(),
                        snaps, skel, j_x_pre, j_x_post,
                        j_jac_pre, j_jac_post, j_inv_pre, j_inv_post,
                        jump_only=False)


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

def _records_from_chunk(res: _ChunkResult, x0s, t_end, dt_max, seed,
                        indices) -> list[PathRecord]:
    out = []
    skel = res.skeleton
    rec_jac = res.j_jac_pre is not None
    for row, idx in enumerate(indices):
        lo, hi = skel.offsets[row], skel.offsets[row + 1]
        jt = skel.times[lo:hi]
        log = JumpLog(
            times=jt,
            sizes=skel.sizes[lo:hi],
            state_before=res.j_x_pre[lo:hi],
            state_after=res.j_x_post[lo:hi],
            jac_before=res.j_jac_pre[lo:hi] if rec_jac else None,
            jac_after=res.j_jac_post[lo:hi] if rec_jac else None,
            inv_jac_before=res.j_inv_pre[lo:hi] if rec_jac else None,
            inv_jac_after=res.j_inv_post[lo:hi] if rec_jac else None,
        )
        if res.jump_only:
            times = np.concatenate([[0.0], jt, [t_end]])
            states = np.concatenate([[x0s[row]], res.j_x_post[lo:hi],
                                     [res.final_state[row]]])
            if rec_jac:
                d = x0s.shape[1]
                ident = np.eye(d)[None]
                jac = np.concatenate([ident, res.j_jac_post[lo:hi],
                                      [res.final_jac[row]]])
                inv = np.concatenate([ident, res.j_inv_post[lo:hi],
                                      [res.final_inv_jac[row]]])
            else:
                jac = inv = None
        else:
            base = res.grid_times
            pos = np.searchsorted(base, jt)
            times = np.insert(base, pos, jt)
            states = np.insert(res.states[:, row], pos,
                               res.j_x_post[lo:hi], axis=0)
            if rec_jac:
                jac = np.insert(res.jac[:, row], pos,
                                res.j_jac_post[lo:hi], axis=0)
                inv = np.insert(res.inv_jac[:, row], pos,
                                res.j_inv_post[lo:hi], axis=0)
            else:
                jac = inv = None
        out.append(PathRecord(
            x0=x0s[row], t_end=t_end, dt_max=dt_max, times=times,
            states=states, jumps=log, jacobian=jac, inverse_jacobian=inv,
            rng_tag=(seed, idx),
        ))
    return out


def _chunk_indices(n_paths: int, chunk_size: int):
    for lo in range(0, n_paths, chunk_size):
        yield range(lo, min(lo + chunk_size, n_paths))


def batch_simulate(c: CoefficientSet, model: LevyModel | None,
                   cfg: SimConfig, x0) -> Iterator[PathRecord]:
    """Yield n_paths records; path i is fully determined by (seed, i, cfg)."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != c.dim:
        raise ConfigError("x0 dimension does not match the system")

    def work(idx_range):
        indices = list(idx_range)
        skel = _draw_skeletons(model, cfg.seed, indices, cfg.t_end)
        x0s = np.broadcast_to(x0, (len(indices), c.dim)).copy()
        res = _integrate_chunk(c, model, x0s, skel, cfg.t_end, cfg.dt_max,
                               cfg.record_jacobians, keep_grid=True)
        return _records_from_chunk(res, x0s, cfg.t_end, cfg.dt_max,
                                   cfg.seed, indices)

    chunks = list(_chunk_indices(cfg.n_paths, cfg.chunk_size))
    if cfg.n_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_workers) as pool:
            for recs in pool.map(work, chunks):
                yield from recs
    else:
        for idx_range in chunks:
            yield from work(idx_range)


def simulate(c: CoefficientSet, model: LevyModel | None, cfg: SimConfig,
             x0, path_index: int = 0) -> PathRecord:
    """Simulate one path (the engine runs with a single-row chunk)."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    skel = _draw_skeletons(model, cfg.seed, [path_index], cfg.t_end)
    x0s = x0[None, :].copy()
    res = _integrate_chunk(c, model, x0s, skel, cfg.t_end, cfg.dt_max,
                           cfg.record_jacobians, keep_grid=True)
    return _records_from_chunk(res, x0s, cfg.t_end, cfg.dt_max, cfg.seed,
                               [path_index])[0]


def simulate_with_jumps(c: CoefficientSet, model: LevyModel | None, x0,
                        jump_times, jump_sizes, t_end: float, dt_max: float,
                        record_jacobians: bool = True) -> PathRecord:
    """Deterministic replay: integrate the drift through a given jump record.

    Used for restart checks and for jump-size perturbations, where the
    skeleton is frozen and only the sizes move.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    skel = _skeleton_from_arrays(jump_times, jump_sizes, c.dim)
    x0s = x0[None, :].copy()
    res = _integrate_chunk(c, model, x0s, skel, t_end, dt_max,
                           record_jacobians, keep_grid=True)
    return _records_from_chunk(res, x0s, t_end, dt_max, -1, [0])[0]


def batch_endpoints(c: CoefficientSet, model: LevyModel | None,
                    cfg: SimConfig, x0, snapshot_times=None) -> np.ndarray:
    """States at snapshot times (or t_end), shape (n_snap, n_paths, d).

    Endpoint-only variant of batch_simulate: no grid recording, no
    Jacobians, same per-path randomness (common random numbers across
    different x0 are obtained by reusing the seed).
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    only_end = snapshot_times is None
    snaps = np.array([cfg.t_end]) if only_end else np.asarray(
        snapshot_times, dtype=float)
    if np.any((snaps < 0) | (snaps > cfg.t_end)):
        raise ConfigError("snapshot times must lie in [0, t_end]")

    def work(idx_range):
        indices = list(idx_range)
        skel = _draw_skeletons(model, cfg.seed, indices, cfg.t_end)
        x0s = np.broadcast_to(x0, (len(indices), c.dim)).copy()
        res = _integrate_chunk(c, model, x0s, skel, cfg.t_end, cfg.dt_max,
                               record_jacobians=False, keep_grid=False,
                               snapshot_times=snaps)
        return res.snapshots

    chunks = list(_chunk_indices(cfg.n_paths, cfg.chunk_size))
    if cfg.n_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(r) for r in chunks]
    out = np.concatenate(parts, axis=1)
    return out[0] if only_end else out


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def max_inverse_defect(record: PathRecord) -> float:
    """max over recorded times of the largest entry of |J_t K_t - I|."""
    if record.jacobian is None:
        raise ConfigError("record has no Jacobians")
    prod = record.jacobian @ record.inverse_jacobian
    d = prod.shape[-1]
    return float(np.max(np.abs(prod - np.eye(d))))


def empirical_moment_report(records: Iterable[PathRecord],
                            powers=(2, 4, 8)) -> dict:
    """E sup_t |J_t|^p and E sup_t |K_t|^p (Frobenius), with standard errors."""
    sup_j, sup_k = [], []
    for rec in records:
        if rec.jacobian is None:
            raise ConfigError("records lack Jacobians")
        sup_j.append(np.max(np.linalg.norm(rec.jacobian, axis=(-2, -1))))
        sup_k.append(np.max(np.linalg.norm(rec.inverse_jacobian,
                                           axis=(-2, -1))))
    sup_j = np.asarray(sup_j)
    sup_k = np.asarray(sup_k)
    n = len(sup_j)
    report = {"n_paths": n}
    for p in powers:
        for label, sup in (("J", sup_j), ("K", sup_k)):
            v = sup**p
            mean = float(v.mean())
            se = float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            report[f"E_sup_{label}^{p}"] = mean
            report[f"se_sup_{label}^{p}"] = se
            if not np.isfinite(mean):
                raise ConfigError(f"moment p={p} for {label} is not finite")
    return report


def dump_jsonl(records: Iterable[PathRecord], fp) -> None:
    """One JSON object per line; floats as IEEE-754 doubles in decimal."""
    for rec in records:
        obj = {
            "x0": rec.x0.tolist(),
            "t_end": rec.t_end,
            "times": rec.times.tolist(),
            "states": rec.states.tolist(),
            "jumps": [
                {"s": float(s), "z": z.tolist()}
                for s, z in zip(rec.jumps.times, rec.jumps.sizes)
            ],
            "rng_tag": list(rec.rng_tag),
        }
        if rec.jacobian is not None:
            obj["jacobian"] = rec.jacobian.tolist()
            obj["inverse_jacobian"] = rec.inverse_jacobian.tolist()
        fp.write(json.dumps(obj) + "\n")
