"""Rough differential equations ``dY = phi(Y) dX`` driven by a level-2 rough path."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .controlled import (
    ControlledPath,
    RoughPath2,
    VectorField,
    compose_smooth,
    controlled_norm,
    integral_against_driver,
    lift_from_cells,
)
from .grid import GridPath, Increment2


class RdeError(RuntimeError):
    """Numerical failure while solving; carries the offending step."""

    def __init__(self, msg, step=None, state=None):
        super().__init__(msg)
        self.step = step
        self.state = state


@dataclass(frozen=True, eq=False)
class RdeProblem:
    driver: RoughPath2
    phi: VectorField
    y0: np.ndarray
    interval: Optional[tuple] = None

    def __post_init__(self):
        y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        object.__setattr__(self, "y0", y0)
        m, d = y0.size, self.driver.dim
        if self.phi.in_dim != m or tuple(self.phi.out_shape) != (m, d):
            raise ValueError(f"field must map R^{m} to R^({m}x{d})")
        a, b = self.interval if self.interval is not None else (0, self.driver.grid.n)
        if not 0 <= a < b <= self.driver.grid.n:
            raise ValueError(f"bad interval {a, b}")
        object.__setattr__(self, "interval", (a, b))
        g, dl = self.driver.gamma, self.phi.holder_delta
        ok = (2 + dl) * g > 1 if g <= 0.5 else (1 + dl) * g > 1
        if not ok:
            raise ValueError(f"field regularity delta={dl} too low for gamma={g}")

    @property
    def window(self) -> RoughPath2:
        return self.driver.window(*self.interval)


def solve_step(problem: RdeProblem) -> ControlledPath:
    """Explicit scheme ``Y+ = Y + phi(Y) dx + (dphi(Y) phi(Y)) : xx``."""
    ref = problem.window
    phi = problem.phi
    m, d = problem.y0.size, ref.dim
    dx = np.diff(ref.x.values, axis=0)
    xx = ref.xx.cells()
    n = ref.grid.n
    y = np.empty((n + 1, m))
    y[0] = problem.y0
    for k in range(n):
        yk = y[k : k + 1]
        f = phi.value(yk)[0]
        jac = phi.jacobian(yk)[0]
        corr = np.einsum("mvl,lk,kv->m", jac, f, xx[k])
        y[k + 1] = y[k] + f @ dx[k] + corr
        if not np.all(np.isfinite(y[k + 1])):
            raise RdeError(f"non-finite state at step {k}", step=k, state=y[k].copy())
    return ControlledPath(
        GridPath(ref.grid, y), GridPath(ref.grid, phi.value(y)), ref, 2 * ref.gamma
    )


class PicardError(RdeError):
    pass


@dataclass
class PicardWindow:
    start: int
    stop: int
    iterations: int
    distances: list = field(default_factory=list)


def _picard_window(phi, ref, y_start, tol, max_iter, budget):
    n = len(ref.grid)
    g = ref.gamma
    const = GridPath(ref.grid, np.broadcast_to(y_start, (n, y_start.size)))
    Y = ControlledPath(const, GridPath(ref.grid, np.broadcast_to(phi.value(y_start[None])[0], (n,) + tuple(phi.out_shape))), ref, 2 * g)
    dists = []
    for it in range(max_iter):
        A = integral_against_driver(compose_smooth(phi, Y))
        Ynew = ControlledPath(const + A.z, A.zprime, ref, 2 * g)
        if not np.all(np.isfinite(Ynew.z.values)):
            return None, dists
        dist = controlled_norm(Ynew - Y, budget)
        dists.append(dist)
        Y = Ynew
        if dist < tol:
            return Y, dists
        if len(dists) >= 4 and dists[-1] >= dists[-2] >= dists[-3] >= dists[-4]:
            return None, dists
    return None, dists


def solve_picard(
    problem: RdeProblem,
    tol: float = 1e-10,
    max_iter: int = 60,
    budget: str = "dyadic",
    diagnostics: Optional[list] = None,
) -> ControlledPath:
    """Windowed fixed-point iteration of ``Y -> y_a + int phi(Y) dX``.

    Each window starts from the constant path at its initial value with
    derivative ``phi(y_a)``. A window whose iterate distances stop
    decreasing (or that hits ``max_iter``) is halved; windows below 4 cells
    fail with ``PicardError``. ``diagnostics``, if given, receives one
    ``PicardWindow`` per accepted window.
    """
    a0, b0 = problem.interval
    ref = problem.driver
    phi = problem.phi
    ys = [problem.y0[None]]
    a, width = a0, b0 - a0
    while a < b0:
        width = min(width, b0 - a)
        Y, dists = _picard_window(phi, ref.window(a, a + width), ys[-1][-1], tol, max_iter, budget)
        if Y is None:
            if width // 2 < 4:
                raise PicardError(
                    f"no contraction on a window of {width} cells at index {a}", step=a, state=ys[-1][-1]
                )
            width //= 2
            continue
        if diagnostics is not None:
            diagnostics.append(PicardWindow(a, a + width, len(dists), dists))
        ys.append(Y.z.values[1:])
        a += width
    y = np.concatenate(ys)
    win = problem.window
    return ControlledPath(GridPath(win.grid, y), GridPath(win.grid, phi.value(y)), win, 2 * win.gamma)


def perturb_driver(driver: RoughPath2, h: GridPath, eps: float) -> RoughPath2:
    """Rough path over ``x + eps h`` with cross terms from the linear interpolation of ``h``.

    Cell values are ``xx + eps (dx (x) dh + dh (x) dx)/2 + eps^2 dh (x) dh / 2``;
    general pairs are Chen-chained, so the result is again a rough path.
    """
    if not h.grid.same_as(driver.grid) or h.shape != driver.x.shape:
        raise ValueError("perturbation must match the driver")
    dx = np.diff(driver.x.values, axis=0)
    dh = np.diff(h.values, axis=0)
    outer = lambda a, b: a[:, :, None] * b[:, None, :]
    cells = driver.xx.cells() + 0.5 * eps * (outer(dx, dh) + outer(dh, dx)) + 0.5 * eps**2 * outer(dh, dh)
    return lift_from_cells(driver.x + eps * h, cells, driver.gamma)


def smooth_direction(grid, dim: int, seed: int = 0) -> GridPath:
    """Seeded smooth perturbation ``sum_{k=1}^3 a_k sin(k pi tau + b_k)`` per component."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, 3))
    b = rng.uniform(0, 2 * np.pi, size=(dim, 3))
    t = grid.times
    tau = (t - t[0]) / (t[-1] - t[0])
    k = np.arange(1, 4)
    vals = np.einsum("ck,nck->nc", a, np.sin(np.pi * k[None, None, :] * tau[:, None, None] + b[None]))
    return GridPath(grid, vals)


@dataclass
class ProbeResult:
    eps: np.ndarray
    distances: np.ndarray
    slope: float


def ito_map_probe(
    problem: RdeProblem,
    eps: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
    seed: int = 0,
    solver=solve_step,
) -> ProbeResult:
    """Log-log slope of ``sup |Y - Y_eps|`` against the driver perturbation size."""
    base = solver(problem).z.values
    h = smooth_direction(problem.driver.grid, problem.driver.dim, seed)
    dist = []
    for e in eps:
        pert = RdeProblem(perturb_driver(problem.driver, h, e), problem.phi, problem.y0, problem.interval)
        dist.append(float(np.abs(solver(pert).z.values - base).max()))
    eps, dist = np.asarray(eps, dtype=float), np.asarray(dist)
    if np.any(dist <= 0):
        return ProbeResult(eps, dist, float("nan"))
    slope = float(np.polyfit(np.log(eps), np.log(dist), 1)[0])
    return ProbeResult(eps, dist, slope)
