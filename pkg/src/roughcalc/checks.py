"""Randomized algebraic invariants of the increment calculus.

Each check draws one random instance from a generator and returns the
worst relative violation; a value at or below the tolerance is a pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    GridPath,
    Increment2,
    TimeGrid,
    delta,
    external_product,
    holder_norm,
    iter_quadruples,
    iter_triples,
    left_mul,
    max_abs,
    n2_op,
    n_op,
    patch_norm_bound,
)


def _random_grid(rng, lo=6, hi=24) -> TimeGrid:
    n = int(rng.integers(lo, hi + 1))
    gaps = rng.uniform(0.2, 1.0, n)
    return TimeGrid(np.concatenate([[0.0], np.cumsum(gaps)]) * rng.uniform(0.5, 2.0) / gaps.sum())


def _random_increment(rng, grid, shape=()) -> Increment2:
    size = len(grid)
    table = rng.normal(size=(size, size) + shape)
    return Increment2.from_dense(grid, table)


def _rel(gap, scale):
    return gap / max(scale, 1e-300)


def _triple_gap(a, b, grid):
    gap = scale = 0.0
    for s, u, t in iter_triples(0, grid.n, "exact"):
        va, vb = a(s, u, t), b(s, u, t)
        gap = max(gap, max_abs(va - vb))
        scale = max(scale, max_abs(va), max_abs(vb))
    return gap, scale


def check_n_delta(rng) -> float:
    """``N delta A = 0``."""
    g = _random_grid(rng)
    a = GridPath(g, rng.normal(size=(len(g), int(rng.integers(1, 4)))) * 10 ** rng.uniform(-3, 3))
    gap, _ = _triple_gap(n_op(delta(a)), lambda s, u, t: 0.0, g)
    return _rel(gap, max_abs(a.values))


def check_n2_n(rng) -> float:
    """``N_2 N R = 0``."""
    g = _random_grid(rng, 5, 14)
    r = _random_increment(rng, g, (2,))
    rule = n2_op(n_op(r))
    gap = 0.0
    for q in iter_quadruples(0, g.n, "exact"):
        gap = max(gap, max_abs(rule(*q)))
    scale = max_abs(r.dense())
    return _rel(gap, scale)


def check_leibnitz_left(rng) -> float:
    """``N(F R)_{sut} = F_s (N R)_{sut} - dF_{su} R_{ut}``."""
    g = _random_grid(rng)
    f = GridPath(g, rng.normal(size=len(g)))
    r = _random_increment(rng, g)
    fv, df = f.values[:, 0], delta(f)
    lhs = n_op(left_mul(f, r))
    nr = n_op(r)
    rhs = lambda s, u, t: (fv[s] * nr(s, u, t) - df(s, u)[:, 0] * r(u, t))[:, None]
    gap, scale = _triple_gap(lhs, rhs, g)
    return _rel(gap, scale)


def check_leibnitz_right(rng) -> float:
    """``N(R F)_{sut} = F_t (N R)_{sut} + R_{su} dF_{ut}``."""
    g = _random_grid(rng)
    fv = rng.normal(size=len(g))
    r = _random_increment(rng, g)
    rf = Increment2(g, (), lambda i, j: r(i, j) * fv[j])
    nr = n_op(r)
    rhs = lambda s, u, t: fv[t] * nr(s, u, t) + r(s, u) * (fv[t] - fv[u])
    gap, scale = _triple_gap(n_op(rf), rhs, g)
    return _rel(gap, scale)


def check_leibnitz_product(rng) -> float:
    """``N_2(A B) = (N A) B - A (N B)`` for 2-increments ``A, B``."""
    g = _random_grid(rng, 5, 14)
    a, b = _random_increment(rng, g), _random_increment(rng, g)
    lhs = n2_op(external_product(a, b))
    na, nb = n_op(a), n_op(b)
    gap = scale = 0.0
    for s, u, v, t in iter_quadruples(0, g.n, "exact"):
        x = lhs(s, u, v, t)
        y = na(s, u, v) * b(v, t) - a(s, u) * nb(u, v, t)
        gap = max(gap, max_abs(x - y))
        scale = max(scale, max_abs(x), max_abs(y))
    return _rel(gap, scale)


def check_norm_comparison(rng) -> float:
    """``||R||_g1 <= T^(g2 - g1) ||R||_g2`` for ``g1 < g2``; returns the relative excess."""
    g = _random_grid(rng)
    r = _random_increment(rng, g)
    g1, g2 = sorted(rng.uniform(0.05, 2.0, 2))
    span = g.times[-1] - g.times[0]
    lhs = holder_norm(r, g1, "exact")
    rhs = span ** (g2 - g1) * holder_norm(r, g2, "exact")
    return max(0.0, _rel(lhs - rhs, rhs))


def check_patch(rng) -> float:
    """Patching inequality across a random split; returns the relative excess."""
    g = _random_grid(rng)
    r = _random_increment(rng, g)
    gamma = rng.uniform(0.2, 1.5)
    rho1 = gamma * rng.uniform(0.1, 0.9)
    split = int(rng.integers(1, g.n))
    lhs, rhs = patch_norm_bound(r, split, gamma, rho1, gamma - rho1, "exact")
    return max(0.0, _rel(lhs - rhs, rhs))


CHECKS = {
    "n_delta": check_n_delta,
    "n2_n": check_n2_n,
    "leibnitz_left": check_leibnitz_left,
    "leibnitz_right": check_leibnitz_right,
    "leibnitz_product": check_leibnitz_product,
    "norm_comparison": check_norm_comparison,
    "patch": check_patch,
}


@dataclass
class InvariantReport:
    name: str
    instances: int
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def run_invariants(instances: int = 100, seed: int = 0, tol: float = 1e-12) -> list:
    out = []
    for k, (name, fn) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, k])
        worst = max(fn(rng) for _ in range(instances))
        out.append(InvariantReport(name, instances, float(worst), tol))
    return out
