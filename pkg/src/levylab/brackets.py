"""Drift-bracket chains and the uniform spanning (hypoellipticity) check.

The chain starts from the jump direction field B_1(x) = grad_z sigma(x, 0)
and iterates a drift bracket.  The recursion's second term appears in two
transposed variants in the source material, so both are implemented behind an
explicit convention flag:

    NABLA_B_LEFT   B_{j+1} = b . grad B_j - (grad b) B_j      (default)
    B_NABLA_RIGHT  B_{j+1} = b . grad B_j - B_j (grad b)

Here b . grad acts entrywise, (b . grad B)_{il} = sum_k b^k d_k (B)_{il}.
The two conventions agree whenever grad b and B_j commute (always in d = 1).

The spanning constant is the infimum over states x and unit covectors u of
sum_j |u B_j(x)|^2.  On a grid the inner infimum is solved exactly by the
smallest eigenvalue of sum_j B_j B_j^T; low-discrepancy sphere sampling is
kept only as a cross-check of the eigensolve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._quad import sphere_directions
from .coeffs import CoefficientSet
from .errors import ConfigError

__all__ = [
    "CONVENTIONS",
    "BracketChain",
    "GridSpec",
    "UhReport",
    "bracket_chain",
    "evaluate_chain",
    "check_uh",
    "sphere_minimum",
    "convention_gap",
]

CONVENTIONS = ("NABLA_B_LEFT", "B_NABLA_RIGHT")


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned evaluation grid: box corners and points per axis."""

    lo: tuple
    hi: tuple
    shape: tuple

    def points(self) -> np.ndarray:
        axes = [np.linspace(l, h, n) for l, h, n in
                zip(self.lo, self.hi, self.shape)]
        if any(n < 1 for n in self.shape):
            raise ConfigError("grid shape entries must be >= 1")
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def as_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi),
                "shape": list(self.shape)}


@dataclass(frozen=True)
class BracketChain:
    """Matrix fields B_1..B_{j0} as batched callables x -> (..., d, d)."""

    dim: int
    depth: int
    fields: tuple[Callable, ...]
    convention: str


def _matrix_jacobian(field, dim, x, h):
    """d_k field(x)_{il} by central differences, shape (..., d, d, d)."""
    x = np.asarray(x, dtype=float)
    parts = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = h
        parts.append((field(x + e) - field(x - e)) / (2.0 * h))
    return np.stack(parts, axis=-1)


def bracket_chain(c: CoefficientSet, j0: int,
                  convention: str = "NABLA_B_LEFT",
                  fd_step: float = 1e-6) -> BracketChain:
    """Build B_1..B_{j0} for the system c under the chosen convention."""
    if convention not in CONVENTIONS:
        raise ConfigError(f"unknown bracket convention {convention!r}")
    if j0 < 1:
        raise ConfigError("bracket depth j0 must be >= 1")

    def b1(x):
        x = np.asarray(x, dtype=float)
        return c.dsigma_dz(x, np.zeros_like(x))

    fields = [b1]
    for _ in range(j0 - 1):
        prev = fields[-1]

        def nxt(x, prev=prev):
            x = np.asarray(x, dtype=float)
            jac = _matrix_jacobian(prev, c.dim, x, fd_step)
            bvec = c.drift(x)
            directional = np.einsum("...ilk,...k->...il", jac, bvec)
            gb = c.ddrift(x)
            bj = prev(x)
            if convention == "NABLA_B_LEFT":
                second = gb @ bj
            else:
                second = bj @ gb
            return directional - second

        fields.append(nxt)
    return BracketChain(dim=c.dim, depth=j0, fields=tuple(fields),
                        convention=convention)


def evaluate_chain(chain: BracketChain, xs) -> np.ndarray:
    """Stack B_j(xs) into shape (depth, n, d, d)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    return np.stack([f(xs) for f in chain.fields])


def spanning_matrix(chain: BracketChain, xs) -> np.ndarray:
    """sum_j B_j(x) B_j(x)^T, shape (n, d, d)."""
    b = evaluate_chain(chain, xs)
    return np.einsum("jnik,jnlk->nil", b, b)


@dataclass(frozen=True)
class UhReport:
    c0: float
    witness_x: np.ndarray
    witness_u: np.ndarray
    grid: GridSpec
    convention: str
    depth: int
    sphere_samples: int
    sphere_c0: float

    def as_dict(self):
        return {
            "c0": self.c0,
            "witness_x": list(map(float, self.witness_x)),
            "witness_u": list(map(float, self.witness_u)),
            "grid_spec": self.grid.as_dict(),
            "convention": self.convention,
            "depth": self.depth,
            "sphere_samples": self.sphere_samples,
            "sphere_c0": self.sphere_c0,
        }


def sphere_minimum(chain: BracketChain, xs, n_dirs: int = 512) -> np.ndarray:
    """min over sampled unit covectors of sum_j |u B_j(x)|^2, per point."""
    m = spanning_matrix(chain, xs)
    dirs = sphere_directions(chain.dim, n_dirs if chain.dim > 1 else 2)
    vals = np.einsum("sd,nde,se->ns", dirs, m, dirs)
    return vals.min(axis=1)


def check_uh(chain: BracketChain, grid: GridSpec,
             sphere_samples: int = 512) -> UhReport:
    """Grid lower bound for the uniform spanning constant, with witness.

    The inner minimum over |u| = 1 is the smallest eigenvalue of the
    spanning matrix (exact); the reported witness u is the corresponding
    eigenvector at the minimizing grid point.
    """
    xs = grid.points()
    if xs.size == 0:
        raise ConfigError("empty evaluation grid")
    if xs.shape[1] != chain.dim:
        raise ConfigError("grid dimension does not match the chain")
    m = spanning_matrix(chain, xs)
    eigvals, eigvecs = np.linalg.eigh(m)
    lam_min = eigvals[:, 0]
    i = int(np.argmin(lam_min))
    sphere_c0 = float(sphere_minimum(chain, xs, sphere_samples).min())
    return UhReport(
        c0=float(lam_min[i]),
        witness_x=xs[i],
        witness_u=eigvecs[i, :, 0],
        grid=grid,
        convention=chain.convention,
        depth=chain.depth,
        sphere_samples=sphere_samples,
        sphere_c0=sphere_c0,
    )


def convention_gap(c: CoefficientSet, j0: int, xs,
                   fd_step: float = 1e-6) -> float:
    """max over the grid and depths of ||B_j^LEFT - B_j^RIGHT||_F.

    Zero whenever grad b commutes with every B_j (in particular in d = 1).
    """
    left = evaluate_chain(bracket_chain(c, j0, "NABLA_B_LEFT", fd_step), xs)
    right = evaluate_chain(bracket_chain(c, j0, "B_NABLA_RIGHT", fd_step), xs)
    return float(np.max(np.linalg.norm(left - right, axis=(-2, -1))))
