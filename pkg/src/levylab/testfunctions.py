"""Built-in smooth scalar fields used as operator/semigroup test functions.

All are batched callables of x with shape (..., d); gradients and Hessians
are analytic where given and fall back to 4th-order central differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "SmoothFunction",
    "constant",
    "linear",
    "square_coordinate",
    "cos_coordinate",
    "tanh_coordinate",
    "gaussian_bump",
    "smoothed_indicator",
]


def _fd_gradient(fn, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.empty(x.shape)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        out[..., j] = (-fn(x + 2 * e) + 8 * fn(x + e)
                       - 8 * fn(x - e) + fn(x - 2 * e)) / (12 * h)
    return out


def _fd_hessian(fn, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.empty(x.shape[:-1] + (d, d))
    f0 = fn(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        out[..., i, i] = (-fn(x + 2 * ei) + 16 * fn(x + ei) - 30 * f0
                          + 16 * fn(x - ei) - fn(x - 2 * ei)) / (12 * h**2)
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            mixed = (fn(x + ei + ej) - fn(x + ei - ej)
                     - fn(x - ei + ej) + fn(x - ei - ej)) / (4 * h**2)
            out[..., i, j] = mixed
            out[..., j, i] = mixed
    return out


@dataclass(frozen=True)
class SmoothFunction:
    name: str
    fn: Callable
    grad: Callable | None = None
    hess: Callable | None = None

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def gradient(self, x):
        if self.grad is not None:
            return self.grad(np.asarray(x, dtype=float))
        return _fd_gradient(self.fn, x)

    def hessian(self, x):
        if self.hess is not None:
            return self.hess(np.asarray(x, dtype=float))
        return _fd_hessian(self.fn, x)


def _coord_hessian(i, second):
    def hess(x):
        d = x.shape[-1]
        out = np.zeros(x.shape[:-1] + (d, d))
        out[..., i, i] = second(x[..., i])
        return out

    return hess


def constant(value: float = 1.0) -> SmoothFunction:
    return SmoothFunction(
        name=f"const{value:g}",
        fn=lambda x: np.full(x.shape[:-1], float(value)),
        grad=lambda x: np.zeros_like(x),
        hess=lambda x: np.zeros(x.shape[:-1] + (x.shape[-1], x.shape[-1])),
    )


def linear(coeffs) -> SmoothFunction:
    c = np.asarray(coeffs, dtype=float)
    return SmoothFunction(
        name="linear",
        fn=lambda x: x @ c,
        grad=lambda x: np.broadcast_to(c, x.shape).copy(),
        hess=lambda x: np.zeros(x.shape[:-1] + (len(c), len(c))),
    )


def square_coordinate(i: int = 0) -> SmoothFunction:
    def grad(x):
        out = np.zeros_like(x)
        out[..., i] = 2.0 * x[..., i]
        return out

    return SmoothFunction(name=f"x{i}^2", fn=lambda x: x[..., i] ** 2,
                          grad=grad,
                          hess=_coord_hessian(i, lambda u: 2.0 * np.ones_like(u)))


def cos_coordinate(i: int = 0) -> SmoothFunction:
    def grad(x):
        out = np.zeros_like(x)
        out[..., i] = -np.sin(x[..., i])
        return out

    return SmoothFunction(name=f"cos(x{i})", fn=lambda x: np.cos(x[..., i]),
                          grad=grad,
                          hess=_coord_hessian(i, lambda u: -np.cos(u)))


def tanh_coordinate(i: int = 0, scale: float = 1.0) -> SmoothFunction:
    def fn(x):
        return np.tanh(scale * x[..., i])

    def grad(x):
        out = np.zeros_like(x)
        out[..., i] = scale / np.cosh(scale * x[..., i]) ** 2
        return out

    def second(u):
        return -2.0 * scale**2 * np.tanh(scale * u) / np.cosh(scale * u) ** 2

    return SmoothFunction(name=f"tanh({scale:g}*x{i})", fn=fn, grad=grad,
                          hess=_coord_hessian(i, second))


def gaussian_bump(center, width: float) -> SmoothFunction:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    w = float(width)

    def fn(x):
        r2 = ((x - c) ** 2).sum(axis=-1)
        return np.exp(-0.5 * r2 / w**2)

    def grad(x):
        return fn(x)[..., None] * (-(x - c) / w**2)

    def hess(x):
        d = x.shape[-1]
        u = (x - c) / w**2
        outer = u[..., :, None] * u[..., None, :]
        return fn(x)[..., None, None] * (outer - np.eye(d) / w**2)

    return SmoothFunction(name=f"bump(w={w:g})", fn=fn, grad=grad, hess=hess)


def smoothed_indicator(i: int = 0, edge: float = 0.0,
                       scale: float = 0.01) -> SmoothFunction:
    """Indicator of {x_i > edge} smoothed at the given length scale."""

    def fn(x):
        return 0.5 * (1.0 + np.tanh((x[..., i] - edge) / scale))

    def grad(x):
        out = np.zeros_like(x)
        out[..., i] = 0.5 / scale / np.cosh((x[..., i] - edge) / scale) ** 2
        return out

    def second(u):
        v = (u - edge) / scale
        return -np.tanh(v) / np.cosh(v) ** 2 / scale**2

    return SmoothFunction(name=f"step(x{i};{scale:g})", fn=fn, grad=grad,
                          hess=_coord_hessian(i, second))
