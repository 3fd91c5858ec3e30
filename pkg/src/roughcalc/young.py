"""Young integration of a rho-Holder integrand against a gamma-Holder path."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .grid import GridPath, Increment3View, _contract, delta, holder_norm
from .sewing import Germ, RateFit, SewingError, dyadic_rate, lambda_of_germ, sew, sewing_constant


def _check_pair(f: GridPath, x: GridPath) -> int:
    if not f.grid.same_as(x.grid):
        raise ValueError("integrand and integrator must share the grid")
    k = len(x.shape)
    if f.shape[len(f.shape) - k :] != x.shape:
        raise ValueError(f"integrand shape {f.shape} cannot act on {x.shape}")
    return k


def young_germ(f: GridPath, x: GridPath, rho: Optional[float] = None, gamma: Optional[float] = None) -> Germ:
    """Germ ``F_s (X_t - X_s)`` with ``N Xi = -dF (x) dX`` of order ``(rho, gamma)``."""
    k = _check_pair(f, x)
    fv = f.values
    dx, df = delta(x), delta(f)
    shape = f.shape[: len(f.shape) - k]

    def fn(i, j):
        return _contract(fv[i], dx(i, j), k)

    def nfn(s, u, t):
        return -_contract(df(s, u), dx(u, t), k)

    factors = (-1.0, df, dx) if f.dim == 1 and x.dim == 1 else None
    comp = Increment3View(f.grid, shape, nfn, factors=factors)
    exps = None if rho is None or gamma is None else [(rho, gamma)]
    return Germ(f.grid, shape, fn, exps, [comp] if exps else None)


def young_integral(f: GridPath, x: GridPath) -> GridPath:
    """``I(t_k) = sum_{j<k} F(t_j) (X(t_{j+1}) - X(t_j))``."""
    return sew(young_germ(f, x))


def young_remainder_bound(f: GridPath, x: GridPath, gamma: float, rho: float, budget: str = "auto") -> float:
    """``||dF||_rho ||dX||_gamma / (2^(gamma+rho) - 2)``."""
    if gamma + rho <= 1:
        raise SewingError("Young integration needs gamma + rho > 1")
    return sewing_constant(gamma + rho) * holder_norm(delta(f), rho, budget) * holder_norm(delta(x), gamma, budget)


def young_remainder_measured(f: GridPath, x: GridPath, gamma: float, rho: float, budget: str = "auto") -> float:
    """Grid sup of ``|int_s^t (F_u - F_s) dX_u| / |t-s|^(gamma+rho)``."""
    return holder_norm(lambda_of_germ(young_germ(f, x, rho, gamma)), gamma + rho, budget)


def young_rate(f: GridPath, x: GridPath, gamma: float, rho: float, levels: int) -> RateFit:
    """Refinement order of Riemann sums; theory predicts at least ``gamma + rho - 1``."""
    return dyadic_rate(young_germ(f, x, rho, gamma), levels, expected=gamma + rho - 1)
