"""Level-2 rough paths, controlled paths and the rough integral.

Index conventions: a driver ``x`` is R^d valued with level-2 ``xx[a, b]``
approximating ``int (x^a_u - x^a_s) dx^b_u``. A controlled path ``z`` with
value shape ``S`` has derivative ``zprime`` of shape ``S + (d,)``, so that
``z_t - z_s = zprime_s . (x_t - x_s) + R_z(s, t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import (
    GridPath,
    Increment2,
    TimeGrid,
    _contract,
    delta,
    holder_norm,
    iter_triples,
    max_abs,
)
from .sewing import Germ, RateFit, dyadic_rate, sew


class ChenError(ValueError):
    """Level-2 data inconsistent with ``N xx = dx (x) dx``."""


def chen_defect(x: GridPath, xx: Increment2, budget: str = "auto") -> tuple:
    """Max over sampled triples of ``|N xx - dx (x) dx|`` and the data scale."""
    dx = delta(x)
    defect = scale = 0.0
    for s, u, t in iter_triples(0, x.grid.n, budget):
        a, b = dx(s, u), dx(u, t)
        outer = a[:, :, None] * b[:, None, :]
        st, su, ut = xx(s, t), xx(s, u), xx(u, t)
        defect = max(defect, max_abs(st - su - ut - outer))
        scale = max(scale, max_abs(st), max_abs(su), max_abs(ut), max_abs(outer))
    return defect, scale


@dataclass(frozen=True, eq=False)
class RoughPath2:
    x: GridPath
    xx: Increment2
    gamma: float
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if len(self.x.shape) != 1:
            raise ValueError("driver must be vector valued")
        d = self.x.shape[0]
        if self.xx.shape != (d, d):
            raise ValueError(f"level-2 shape {self.xx.shape} does not match dimension {d}")
        if not self.x.grid.same_as(self.xx.grid):
            raise ValueError("path and level-2 live on different grids")
        if not 1.0 / 3.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (1/3, 1]")
        if self.check:
            defect, scale = chen_defect(self.x, self.xx)
            if defect > 1e-12 * max(scale, 1e-300):
                raise ChenError(f"Chen relation violated by {defect:.3e} (scale {scale:.3e})")

    @property
    def grid(self) -> TimeGrid:
        return self.x.grid

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    def restrict(self, step: int) -> "RoughPath2":
        return RoughPath2(self.x.restrict(step), self.xx.restrict(step), self.gamma, check=False)

    def window(self, a: int, b: int) -> "RoughPath2":
        return RoughPath2(self.x.window(a, b), self.xx.window(a, b), self.gamma, check=False)


def lift_from_cells(x: GridPath, cells, gamma: float) -> RoughPath2:
    """Rough path whose level 2 is prescribed on cells and Chen-chained elsewhere."""
    return RoughPath2(x, Increment2.from_cells(x, cells), gamma)


def linear_lift(x: GridPath, gamma: float) -> RoughPath2:
    """Lift of the piecewise-linear interpolation: cell values ``dx (x) dx / 2``.

    For a scalar path this is exactly ``xx(s,t) = (x_t - x_s)^2 / 2``.
    """
    dx = np.diff(x.values, axis=0)
    return lift_from_cells(x, 0.5 * dx[:, :, None] * dx[:, None, :], gamma)


def same_reference(a: RoughPath2, b: RoughPath2) -> bool:
    if a is b:
        return True
    return (
        a.gamma == b.gamma
        and a.grid.same_as(b.grid)
        and np.array_equal(a.x.values, b.x.values)
        and np.array_equal(a.xx.cells(), b.xx.cells())
    )


@dataclass(frozen=True, eq=False)
class ControlledPath:
    """Pair ``(z, zprime)`` controlled by ``ref``; the remainder is always derived."""

    z: GridPath
    zprime: GridPath
    ref: RoughPath2
    eta: float

    def __post_init__(self):
        g = self.ref.grid
        if not (self.z.grid.same_as(g) and self.zprime.grid.same_as(g)):
            raise ValueError("controlled path and reference live on different grids")
        if self.zprime.shape != self.z.shape + (self.ref.dim,):
            raise ValueError(f"derivative shape {self.zprime.shape} does not match {self.z.shape}+({self.ref.dim},)")
        if self.eta <= self.ref.gamma:
            raise ValueError("remainder order eta must exceed gamma")

    @classmethod
    def of_driver(cls, ref: RoughPath2) -> "ControlledPath":
        """The driver controlled by itself (identity derivative, zero remainder)."""
        d = ref.dim
        eye = np.broadcast_to(np.eye(d), (len(ref.grid), d, d))
        return cls(ref.x, GridPath(ref.grid, eye), ref, 2 * ref.gamma)

    @property
    def grid(self) -> TimeGrid:
        return self.ref.grid

    @property
    def shape(self) -> tuple:
        return self.z.shape

    def remainder(self) -> Increment2:
        dz, dx = delta(self.z), delta(self.ref.x)
        zp = self.zprime.values
        return Increment2(self.grid, self.shape, lambda i, j: dz(i, j) - _contract(zp[i], dx(i, j), 1))

    def restrict(self, step: int) -> "ControlledPath":
        return ControlledPath(self.z.restrict(step), self.zprime.restrict(step), self.ref.restrict(step), self.eta)

    def window(self, a: int, b: int) -> "ControlledPath":
        return ControlledPath(self.z.window(a, b), self.zprime.window(a, b), self.ref.window(a, b), self.eta)

    def _combine(self, other: "ControlledPath", sign: float) -> "ControlledPath":
        if not same_reference(self.ref, other.ref):
            raise ValueError("controlled paths have different references")
        return ControlledPath(
            GridPath(self.grid, self.z.values + sign * other.z.values),
            GridPath(self.grid, self.zprime.values + sign * other.zprime.values),
            self.ref,
            min(self.eta, other.eta),
        )

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, c: float):
        return ControlledPath(c * self.z, c * self.zprime, self.ref, self.eta)

    __rmul__ = __mul__


def controlled_norm(c: ControlledPath, budget: str = "auto") -> float:
    """``||Z'||_inf + ||Z'||_{eta-gamma} + ||R_Z||_eta + ||Z||_gamma`` on the grid."""
    g = c.ref.gamma
    return (
        max_abs(c.zprime.values)
        + holder_norm(delta(c.zprime), c.eta - g, budget)
        + holder_norm(c.remainder(), c.eta, budget)
        + holder_norm(delta(c.z), g, budget)
    )


# --- vector fields ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VectorField:
    """Smooth map ``R^in_dim -> R^out_shape`` with batched value/Jacobian/Hessian.

    ``value(y)`` takes ``y`` of shape ``(N, in_dim)`` and returns
    ``(N, *out_shape)``; the Jacobian appends one ``in_dim`` axis, the Hessian
    two. ``holder_delta`` and ``norm`` are declared regularity estimates.
    """

    in_dim: int
    out_shape: tuple
    value: Callable
    jacobian: Callable
    hessian: Optional[Callable] = None
    holder_delta: float = 1.0
    norm: float = np.inf
    name: str = "custom"

    def __call__(self, y):
        return self.value(np.atleast_2d(y))


def ridge_field(g, g1, g2, weights, offset=None, norm=np.inf, name="ridge") -> VectorField:
    """``phi(y)[c] = g(<weights[c], y> + offset[c])`` for every output component ``c``."""
    w = np.asarray(weights, dtype=float)
    out_shape, m = w.shape[:-1], w.shape[-1]
    wf = w.reshape(-1, m)
    b = np.zeros(wf.shape[0]) if offset is None else np.asarray(offset, dtype=float).reshape(-1)

    def arg(y):
        return y @ wf.T + b

    def value(y):
        return g(arg(y)).reshape((y.shape[0],) + out_shape)

    def jacobian(y):
        return (g1(arg(y))[:, :, None] * wf[None]).reshape((y.shape[0],) + out_shape + (m,))

    def hessian(y):
        h = g2(arg(y))[:, :, None, None] * wf[None, :, :, None] * wf[None, :, None, :]
        return h.reshape((y.shape[0],) + out_shape + (m, m))

    return VectorField(m, tuple(out_shape), value, jacobian, hessian, 1.0, norm, name)


def linear_field(matrix, offset=None) -> VectorField:
    """``phi(y) = matrix . y + offset``; ``matrix`` has shape ``out_shape + (in_dim,)``."""
    one = lambda a: np.ones_like(a)
    zero = lambda a: np.zeros_like(a)
    return ridge_field(lambda a: a, one, zero, matrix, offset, name="linear")


def _default_weights(out_shape: tuple, in_dim: int) -> np.ndarray:
    size = int(np.prod(out_shape, dtype=int))
    w = np.zeros((size, in_dim))
    w[np.arange(size), np.arange(size) % in_dim] = 1.0
    return w.reshape(tuple(out_shape) + (in_dim,))


def sine_field(out_shape=(1, 1), in_dim: int = 1, weights=None, phases=None) -> VectorField:
    """Bounded smooth field ``sin(<w_c, y> + b_c)``; defaults to ``sin(y)`` in 1-d.

    Default weights pick coordinate ``c mod in_dim`` for flat component
    ``c``; default phases are ``0.3 c``.
    """
    out_shape = tuple(out_shape)
    w = _default_weights(out_shape, in_dim) if weights is None else np.asarray(weights, dtype=float)
    size = int(np.prod(out_shape, dtype=int))
    b = 0.3 * np.arange(size) if phases is None else phases
    wn = float(np.abs(w).sum(axis=-1).max())
    return ridge_field(np.sin, np.cos, lambda a: -np.sin(a), w, b, norm=1 + wn + wn**2, name="sine")


def polynomial_field(coeffs, out_shape=(1, 1), in_dim: int = 1, weights=None) -> VectorField:
    """``p(<w_c, y>)`` with ``p(a) = sum_k coeffs[k] a^k``, degree at most 3."""
    c = np.zeros(4)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size > 4:
        raise ValueError("polynomial fields have degree <= 3")
    c[: coeffs.size] = coeffs
    w = _default_weights(tuple(out_shape), in_dim) if weights is None else np.asarray(weights, dtype=float)
    p = lambda a: c[0] + a * (c[1] + a * (c[2] + a * c[3]))
    p1 = lambda a: c[1] + a * (2 * c[2] + 3 * c[3] * a)
    p2 = lambda a: 2 * c[2] + 6 * c[3] * a
    return ridge_field(p, p1, p2, w, name="polynomial")


def identity_field(dim: int) -> VectorField:
    return linear_field(np.eye(dim))


# --- operations ------------------------------------------------------------


def compose_smooth(phi: VectorField, y: ControlledPath) -> ControlledPath:
    """``z = phi(y)`` with derivative ``dphi(y) . yprime``."""
    if y.shape != (phi.in_dim,):
        raise ValueError(f"field expects R^{phi.in_dim}, path is {y.shape}")
    yv = y.z.values
    zv = phi.value(yv)
    jac = phi.jacobian(yv)
    n = yv.shape[0]
    zp = np.einsum("nsm,nmd->nsd", jac.reshape(n, -1, phi.in_dim), y.zprime.values)
    g = y.ref.gamma
    eta = min(g * (1 + phi.holder_delta), y.eta)
    return ControlledPath(
        GridPath(y.grid, zv), GridPath(y.grid, zp.reshape(zv.shape + (y.ref.dim,))), y.ref, eta
    )


def transitivity_recast(z: ControlledPath, y: ControlledPath) -> ControlledPath:
    """Re-express ``z`` (controlled by the path ``y``) as controlled by ``y``'s driver."""
    if not (z.grid.same_as(y.grid) and np.array_equal(z.ref.x.values, y.z.values.reshape(len(y.grid), -1))):
        raise ValueError("z must be controlled by the path y itself")
    n = len(z.grid)
    m = z.ref.dim
    zp = np.einsum("nsm,nmd->nsd", z.zprime.values.reshape(n, -1, m), y.zprime.values.reshape(n, m, -1))
    return ControlledPath(
        z.z, GridPath(z.grid, zp.reshape((n,) + z.shape + (y.ref.dim,))), y.ref, min(z.eta, y.eta)
    )


def rough_germ(z: ControlledPath, w: ControlledPath) -> Germ:
    """``z_s (x) dw_st + (z'_s (x) w'_s) : xx_st``."""
    if not same_reference(z.ref, w.ref):
        raise ValueError("integrand and integrator need the same rough path")
    ref = z.ref
    if z.eta + ref.gamma <= 1:
        raise ValueError("need eta + gamma > 1")
    n, d = len(ref.grid), ref.dim
    zv, wv = z.z.values.reshape(n, -1), w.z.values.reshape(n, -1)
    zp, wp = z.zprime.values.reshape(n, -1, d), w.zprime.values.reshape(n, -1, d)
    xx = ref.xx
    shape = z.shape + w.shape

    def fn(i, j):
        first = zv[i][:, :, None] * (wv[j] - wv[i])[:, None, :]
        second = np.einsum("npa,nqb,nab->npq", zp[i], wp[i], xx(i, j))
        return (first + second).reshape((i.size,) + shape)

    return Germ(ref.grid, shape, fn, [(z.eta, ref.gamma)])


def rough_integral(z: ControlledPath, w: ControlledPath) -> ControlledPath:
    """``int z dw`` by compensated sums, controlled with derivative ``z (x) w'``."""
    I = sew(rough_germ(z, w))
    n, d = len(z.grid), z.ref.dim
    der = z.z.values.reshape(n, -1)[:, :, None, None] * w.zprime.values.reshape(n, 1, -1, d)
    der = der.reshape((n,) + z.shape + w.shape + (d,))
    return ControlledPath(
        GridPath(z.grid, I.values.reshape((n,) + z.shape + w.shape)),
        GridPath(z.grid, der),
        z.ref,
        min(2 * z.ref.gamma, z.eta),
    )


def driver_germ(w: ControlledPath) -> Germ:
    """``w_s . dx_st + w'_s : xx_st`` with ``w'[.., nu, k]`` paired to ``xx[k, nu]``."""
    ref = w.ref
    d = ref.dim
    if w.shape[-1:] != (d,):
        raise ValueError(f"integrand must end in the driver dimension {d}")
    if w.eta + ref.gamma <= 1:
        raise ValueError("need eta + gamma > 1")
    n = len(ref.grid)
    wv = w.z.values.reshape(n, -1, d)
    wp = w.zprime.values.reshape(n, -1, d, d)
    x, xx = ref.x.values, ref.xx
    shape = w.shape[:-1]

    def fn(i, j):
        out = np.einsum("npv,nv->np", wv[i], x[j] - x[i]) + np.einsum("npvk,nkv->np", wp[i], xx(i, j))
        return out.reshape((i.size,) + shape)

    return Germ(ref.grid, shape, fn, [(w.eta, ref.gamma)])


def integral_against_driver(w: ControlledPath) -> ControlledPath:
    """``A = int w dx``; controlled by ``x`` with derivative ``w`` and order ``2 gamma``."""
    A = sew(driver_germ(w))
    n = len(w.grid)
    shape = w.shape[:-1]
    return ControlledPath(
        GridPath(w.grid, A.values.reshape((n,) + shape)), w.z, w.ref, 2 * w.ref.gamma
    )


def rough_rate(z: ControlledPath, w: ControlledPath, levels: int) -> RateFit:
    """Refinement order of compensated sums; theory predicts ``eta + gamma - 1``."""
    return dyadic_rate(rough_germ(z, w), levels, expected=z.eta + z.ref.gamma - 1)
