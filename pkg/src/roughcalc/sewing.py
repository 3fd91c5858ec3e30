"""Sewing: turn an almost-additive germ into a path plus a small remainder.

On a grid the sewing map is realised by compensated sums: the integral of a
germ ``Xi`` is ``I(t_k) = sum_{j<k} Xi(t_j, t_{j+1})`` and the remainder is
``Xi - delta I``. Coarser dyadic sums of the same germ are exposed for
refinement/convergence diagnostics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import (
    GridPath,
    Increment2,
    Increment3View,
    TimeGrid,
    holder_norm,
    holder_norm2,
    iter_pairs,
    iter_triples,
    magnitude,
    max_abs,
    n_op,
)


class SewingError(ValueError):
    """Germ rejected: declared regularity does not give a unique integral."""


@dataclass(frozen=True, eq=False)
class Germ:
    """Integrand germ ``Xi(t_i, t_j)`` on a grid.

    ``exponents`` lists the declared ``(rho_k, z - rho_k)`` of the pieces of
    ``N Xi``; ``components`` optionally gives those pieces explicitly (same
    order) so the sewing bound can be evaluated. ``None`` means undeclared.
    """

    grid: TimeGrid
    shape: tuple
    fn: Callable
    exponents: Optional[Sequence[tuple]] = None
    components: Optional[Sequence[Increment3View]] = None

    def __call__(self, i, j):
        return self.increment()(i, j)

    def increment(self) -> Increment2:
        return Increment2(self.grid, self.shape, self.fn)

    @property
    def z(self) -> Optional[float]:
        if not self.exponents:
            return None
        return min(a + b for a, b in self.exponents)

    def check(self) -> None:
        z = self.z
        if z is not None and z <= 1:
            raise SewingError(f"declared exponent z = {z} <= 1: the integral is not unique")
        if self.components is not None and self.exponents is not None:
            if len(self.components) != len(self.exponents):
                raise SewingError("one component per declared exponent pair")

    def cell_values(self, step: int = 1) -> np.ndarray:
        if self.grid.n % step:
            raise ValueError(f"step {step} does not divide {self.grid.n} cells")
        k = np.arange(0, self.grid.n, step)
        return self.increment()(k, k + step)


def germ_from_increment(r: Increment2, exponents=None, components=None) -> Germ:
    return Germ(r.grid, r.shape, r._fn, exponents, components)


def compensated_sum(germ: Germ, step: int = 1) -> np.ndarray:
    """Partial sums of the germ over cells of ``step`` grid cells each.

    Returns values at grid indices ``0, step, 2 step, ...`` with a leading 0.
    """
    cells = germ.cell_values(step)
    out = np.zeros((cells.shape[0] + 1,) + germ.shape)
    np.cumsum(cells, axis=0, out=out[1:])
    return out


def sew(germ: Germ) -> GridPath:
    germ.check()
    return GridPath(germ.grid, compensated_sum(germ, 1).reshape(len(germ.grid), *germ.shape))


def lambda_of_germ(germ: Germ) -> Increment2:
    """Remainder ``Xi - delta(sew(Xi))``; its N-image equals ``N Xi``."""
    germ.check()
    I = compensated_sum(germ, 1)
    xi = germ.increment()
    return Increment2(germ.grid, germ.shape, lambda i, j: xi(i, j) - (I[j] - I[i]))


def sewing_constant(z: float) -> float:
    return 1.0 / (2.0**z - 2.0)


def sewing_bound(germ: Germ, budget: str = "auto") -> tuple:
    """``(measured ||Lambda N Xi||_z, 1/(2^z-2) * sum_k ||component_k||)``."""
    germ.check()
    if germ.exponents is None:
        raise SewingError("bound needs declared exponents")
    z = germ.z
    comps = germ.components
    if comps is None:
        if len(germ.exponents) != 1:
            raise SewingError("several exponent pairs need explicit components")
        comps = [n_op(germ.increment())]
    rhs = sewing_constant(z) * sum(
        holder_norm2(c, rho, sig, budget) for c, (rho, sig) in zip(comps, germ.exponents)
    )
    return holder_norm(lambda_of_germ(germ), z, budget), rhs


def locality_check(
    germ_a: Germ, germ_b: Germ, window: tuple, rtol: float = 1e-10, budget: str = "auto"
) -> bool:
    """Do the sewn remainders of two germs agree on ``window = (lo, hi)``?

    Requires ``N germ_a == N germ_b`` on the window's triples; a germ pair
    violating that is a contract error and raises ``ValueError``.
    """
    lo, hi = window
    na, nb = n_op(germ_a.increment()), n_op(germ_b.increment())
    scale = 0.0
    gap = 0.0
    for s, u, t in iter_triples(lo, hi, budget):
        va, vb = na(s, u, t), nb(s, u, t)
        scale = max(scale, max_abs(va), max_abs(vb))
        gap = max(gap, max_abs(va - vb))
    if gap > rtol * max(scale, 1.0):
        raise ValueError("locality check inapplicable: N differs on the window")
    ra, rb = lambda_of_germ(germ_a), lambda_of_germ(germ_b)
    scale = gap = 0.0
    for i, j in iter_pairs(lo, hi, budget):
        va, vb = ra(i, j), rb(i, j)
        scale = max(scale, max_abs(va), max_abs(vb))
        gap = max(gap, max_abs(va - vb))
    return gap <= rtol * max(scale, 1.0)


@dataclass
class RateFit:
    """Refinement order of coarse compensated sums.

    ``diffs[l-1]`` is the sup gap between the sums at level ``l`` and level
    ``l - 1`` (Cauchy difference); ``to_finest`` is the gap to the finest sum.
    """

    order: float
    exact: bool
    meshes: np.ndarray
    diffs: np.ndarray
    to_finest: np.ndarray
    fitted: np.ndarray = field(repr=False)
    expected: Optional[float] = None
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def rows(self) -> list:
        return [
            {"level": k + 1, "mesh": m, "value": v, "cauchy_diff": d, "diff_to_finest": f}
            for k, (m, v, d, f) in enumerate(zip(self.meshes, self.values, self.diffs, self.to_finest))
        ]


def dyadic_rate(germ: Germ, levels: int, discard: int = 2, expected=None) -> RateFit:
    """Fit the log of successive-level gaps against the log of the mesh.

    Coarse partitions take every ``2^l``-th grid point, ``l = 1..levels``.
    Gaps between consecutive levels are used rather than gaps to the finest
    sum, which flatten out near the finest level and bias the slope upward.
    The ``discard`` coarsest levels are pre-asymptotic and left out of the
    fit (fewer if that would leave under two points).
    """
    if levels < 3:
        raise ValueError("need at least 3 levels")
    n = germ.grid.n
    if n % (1 << levels) or (1 << levels) >= n:
        raise ValueError(f"grid with {n} cells too small for {levels} dyadic levels")
    finest = compensated_sum(germ, 1)
    scale = max(max_abs(finest), 1.0)
    meshes, diffs, to_finest, values = [], [], [], []
    prev = finest
    for lvl in range(1, levels + 1):
        step = 1 << lvl
        coarse = compensated_sum(germ, step)
        diffs.append(max_abs(coarse - prev[::2]))
        to_finest.append(max_abs(coarse - finest[::step]))
        values.append(float(np.ravel(coarse[-1])[0]))
        meshes.append(germ.grid.restrict(step).mesh())
        prev = coarse
    meshes, diffs = np.array(meshes), np.array(diffs)
    drop = min(discard, levels - 2)
    fitted = np.arange(levels) < levels - drop
    if np.all(diffs <= 1e-11 * scale):
        order, exact = np.inf, True
    else:
        order = float(np.polyfit(np.log(meshes[fitted]), np.log(np.maximum(diffs[fitted], 1e-300)), 1)[0])
        exact = False
    return RateFit(order, exact, meshes, diffs, np.array(to_finest), fitted, expected, np.array(values))


def write_refinement_csv(germ: Germ, levels: int, fh) -> None:
    """Rows ``level, mesh, value, cauchy_diff`` for successive dyadic coarsenings."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["level", "mesh", "value", "cauchy_diff"])
    prev = None
    for lvl in range(levels, -1, -1):
        step = 1 << lvl
        s = compensated_sum(germ, step)
        diff = "" if prev is None else format(max_abs(s[::2] - prev), ".17g")
        w.writerow([lvl, format(germ.grid.restrict(step).mesh(), ".17g"),
                    format(float(np.ravel(s[-1])[0]), ".17g"), diff])
        prev = s

