"""Truncated tensor series over grid pairs: Chen products, extension, correction.

A tensor series of dimension ``d`` truncated at level ``n`` is a list
``[a_0, a_1, ..., a_n]`` with ``a_k`` of shape ``(d,) * k``. Batched series
carry a leading batch axis on every level (``a_0`` then has shape ``(B,)``).
"""

from __future__ import annotations

import json
from math import factorial
from typing import Callable, Optional

import numpy as np

from .grid import TimeGrid, iter_pairs, iter_triples, max_abs


class NonConvergenceError(RuntimeError):
    """Refinement differences failed to decrease."""

    def __init__(self, msg, diffs):
        super().__init__(msg)
        self.diffs = np.asarray(diffs)


# --- tensor series algebra -------------------------------------------------


def unit(dim: int, level: int, batch: Optional[int] = None) -> list:
    lead = () if batch is None else (batch,)
    out = [np.ones(lead)]
    out += [np.zeros(lead + (dim,) * k) for k in range(1, level + 1)]
    return out


def _batched(a: list) -> bool:
    return np.ndim(a[0]) == 1


def chen_mul(a: list, b: list, level: Optional[int] = None) -> list:
    """Truncated tensor product; level ``k`` is ``sum_{i+j=k} a_i (x) b_j``."""
    if len(a) != len(b):
        raise ValueError("series truncated at different levels")
    level = len(a) - 1 if level is None else level
    batched = _batched(a)
    if batched != _batched(b):
        raise ValueError("cannot mix batched and single series")
    if not batched:
        return [x[0] for x in chen_mul([x[None] for x in a], [x[None] for x in b], level)]
    B = a[0].shape[0]
    d = a[1].shape[1] if level >= 1 else 1
    if level >= 1 and b[1].shape[1] != d:
        raise ValueError("series of different dimension")
    out = []
    for k in range(level + 1):
        acc = np.zeros((B, d**k))
        for i in range(k + 1):
            left = a[i].reshape(B, -1)
            right = b[k - i].reshape(B, -1)
            acc += (left[:, :, None] * right[:, None, :]).reshape(B, -1)
        out.append(acc.reshape((B,) + (d,) * k))
    return out


def tensor_exp(v, level: int) -> list:
    """``sum_k v^(x)k / k!`` for ``v`` of shape ``(d,)`` or ``(B, d)``."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    B, d = v.shape
    out = [np.ones(B)]
    cur = np.ones((B, 1))
    for k in range(1, level + 1):
        cur = (cur[:, :, None] * v[:, None, :]).reshape(B, -1) / k
        out.append(cur.reshape((B,) + (d,) * k))
    return [x[0] for x in out] if single else out


def tensor_inverse(a: list) -> list:
    """Inverse of a series with unit level 0 (``sum_m (1 - a)^m``)."""
    level = len(a) - 1
    x = [np.zeros_like(a[0])] + [-ak for ak in a[1:]]
    one = [np.ones_like(a[0])] + [np.zeros_like(ak) for ak in a[1:]]
    out, power = [o.copy() for o in one], one
    for _ in range(level):
        power = chen_mul(power, x, level)
        out = [o + p for o, p in zip(out, power)]
    return out


def _take(a: list, idx) -> list:
    return [x[idx] for x in a]


def _concat(parts: list) -> list:
    return [np.concatenate([p[k] for p in parts]) for k in range(len(parts[0]))]


def _reduce_product(series: list, B: int, M: int) -> list:
    """Chen product over the middle axis of batch ``B * M`` series (ordered)."""
    cur = [x.reshape((B, M) + x.shape[1:]) for x in series]
    m = M
    while m > 1:
        half = m // 2
        left = [x[:, 0 : 2 * half : 2].reshape((B * half,) + x.shape[2:]) for x in cur]
        right = [x[:, 1 : 2 * half : 2].reshape((B * half,) + x.shape[2:]) for x in cur]
        prod = [p.reshape((B, half) + p.shape[1:]) for p in chen_mul(left, right)]
        if m % 2:
            prod = [np.concatenate([p, x[:, -1:]], axis=1) for p, x in zip(prod, cur)]
        cur, m = prod, half + m % 2
    return [x[:, 0] for x in cur]


# --- functionals on grid pairs ---------------------------------------------


class TensorFunc:
    """Two-parameter tensor series on a grid.

    Grid pairs take their values from ``pair_fn(i, j)``, else from
    ``time_fn(s, t)`` (a rule on real times, also used for sub-cell
    refinement), else from Chen chaining of the stored adjacent-cell values.
    ``chain=True`` forces chaining, which makes the functional
    multiplicative by construction.
    ``p`` is the declared roughness, used only for precondition checks.
    """

    def __init__(self, grid: TimeGrid, dim: int, level: int, adjacent=None,
                 pair_fn: Optional[Callable] = None, time_fn: Optional[Callable] = None,
                 p: Optional[float] = None, chain: bool = False):
        self.grid, self.dim, self.level, self.p = grid, dim, level, p
        self.chain = chain
        self.pair_fn, self.time_fn = pair_fn, time_fn
        if adjacent is None:
            k = np.arange(grid.n)
            if pair_fn is not None:
                adjacent = pair_fn(k, k + 1)
            elif time_fn is not None:
                adjacent = time_fn(grid.times[:-1], grid.times[1:])
            else:
                raise ValueError("need adjacent values or a rule")
        self.adjacent = [np.asarray(a, dtype=float) for a in adjacent]
        if len(self.adjacent) != level + 1:
            raise ValueError("one array per level 0..level")
        if not all(np.all(np.isfinite(a)) for a in self.adjacent):
            raise ValueError("adjacent values must be finite")
        if not np.allclose(self.adjacent[0], 1.0, rtol=0, atol=0):
            raise ValueError("level 0 must be identically 1")
        self._prefix = None

    def prefix(self) -> list:
        """``Z(0, k)`` for every grid index by sequential Chen products."""
        if self._prefix is None:
            n = self.grid.n
            out = [np.empty((n + 1,) + (self.dim,) * k) for k in range(self.level + 1)]
            cur = unit(self.dim, self.level, 1)
            for k in range(self.level + 1):
                out[k][0] = cur[k][0]
            for c in range(n):
                cur = chen_mul(cur, [a[c : c + 1] for a in self.adjacent])
                for k in range(self.level + 1):
                    out[k][c + 1] = cur[k][0]
            self._prefix = out
        return self._prefix

    def chained(self, i, j) -> list:
        P = self.prefix()
        i, j = np.atleast_1d(i), np.atleast_1d(j)
        return chen_mul(tensor_inverse(_take(P, i)), _take(P, j))

    def values(self, i, j) -> list:
        i, j = np.atleast_1d(np.asarray(i, dtype=np.intp)), np.atleast_1d(np.asarray(j, dtype=np.intp))
        if self.chain:
            return self.chained(i, j)
        if self.pair_fn is not None:
            return self.pair_fn(i, j)
        if self.time_fn is not None:
            t = self.grid.times
            return self.time_fn(t[i], t[j])
        return self.chained(i, j)


def from_rough2(rp, tol: float = 1e-12, budget: str = "auto") -> TensorFunc:
    """Level-2 functional ``(1, dx, xx)``; pair values come from the rough path itself.

    Raises ``ValueError`` when Chen chaining of the cell values fails to
    reproduce ``xx`` on the sampled pairs.
    """
    x, xx = rp.x.values, rp.xx

    def pair_fn(i, j):
        return [np.ones(i.size), x[j] - x[i], xx(i, j)]

    tf = TensorFunc(rp.grid, rp.dim, 2, pair_fn=pair_fn, p=1.0 / rp.gamma)
    gap = scale = 0.0
    for i, j in iter_pairs(0, rp.grid.n, budget):
        direct = xx(i, j)
        gap = max(gap, max_abs(tf.chained(i, j)[2] - direct))
        scale = max(scale, max_abs(direct))
    if gap > tol * max(scale, 1e-300):
        raise ValueError(f"Chen chaining misses xx by {gap:.3e}")
    return tf


def mult_defect(z: TensorFunc, budget: str = "auto") -> float:
    """Max over sampled triples and levels of ``|Z_st - Z_su (x) Z_ut|``."""
    worst = 0.0
    for s, u, t in iter_triples(0, z.grid.n, budget):
        st = z.values(s, t)
        prod = chen_mul(z.values(s, u), z.values(u, t))
        worst = max(worst, max(max_abs(a - b) for a, b in zip(st, prod)))
    return worst


def functional_scale(z: TensorFunc, budget: str = "auto") -> float:
    worst = 0.0
    for i, j in iter_pairs(0, z.grid.n, budget):
        worst = max(worst, max(max_abs(a) for a in z.values(i, j)[1:]))
    return worst


def levelwise_norms(z: TensorFunc, exponents=None, budget: str = "auto") -> list:
    """``sup |Z^k_st| / |t-s|^(e_k)`` per level ``k >= 1``; ``e_k = k`` by default."""
    t = z.grid.times
    exps = list(range(1, z.level + 1)) if exponents is None else list(exponents)
    out = [0.0] * z.level
    for i, j in iter_pairs(0, z.grid.n, budget):
        vals = z.values(i, j)
        for k in range(1, z.level + 1):
            mag = np.abs(vals[k].reshape(i.size, -1)).max(axis=1) / (t[j] - t[i]) ** exps[k - 1]
            out[k - 1] = max(out[k - 1], float(mag.max()))
    return out


def _substeps(s, t, M):
    frac = np.arange(M + 1) / M
    pts = s[:, None] + (t - s)[:, None] * frac
    pts[:, -1] = t
    return pts[:, :-1].ravel(), pts[:, 1:].ravel()


def extend_level(z: TensorFunc, M: int = 64, tol: float = 1e-10, budget: str = "auto") -> TensorFunc:
    """Unique multiplicative extension from level ``k`` to ``k + 1``.

    Each cell is split into ``M`` equal substeps; the level-``k`` values on
    the substeps, with level ``k + 1`` set to 0, are Chen-multiplied. The
    result converges to the extension as ``M`` grows. ``M > 1`` needs a
    ``time_fn`` on ``z``.
    """
    k = z.level
    if z.p is not None and not k + 1 > z.p:
        raise ValueError(f"level {k + 1} does not exceed roughness p = {z.p}")
    scale = functional_scale(z, budget)
    defect = mult_defect(z, budget)
    if defect > tol * max(scale, 1.0):
        raise ValueError(f"input is not multiplicative (defect {defect:.3e})")
    if M > 1 and z.time_fn is None:
        raise ValueError("sub-cell refinement needs a time rule")
    d = z.dim
    base = z.time_fn

    def time_fn(s, t):
        s, t = np.atleast_1d(s).astype(float), np.atleast_1d(t).astype(float)
        a, b = _substeps(s, t, M)
        vals = base(a, b) if M > 1 else z.values(np.searchsorted(z.grid.times, s), np.searchsorted(z.grid.times, t))
        vals = list(vals) + [np.zeros((a.size,) + (d,) * (k + 1))]
        return _reduce_product(vals, s.size, M)

    if M > 1:
        adjacent = time_fn(z.grid.times[:-1], z.grid.times[1:])
        rule = time_fn
    else:
        cells = z.adjacent + [np.zeros((z.grid.n,) + (d,) * (k + 1))]
        adjacent, rule = cells, None
    return TensorFunc(z.grid, d, k + 1, adjacent=adjacent, time_fn=rule, p=z.p, chain=True)


def multiplicativize(z: TensorFunc, levels: int = 10, z_exponent: Optional[float] = None) -> TensorFunc:
    """Multiplicative functional closest to an almost-multiplicative one.

    Every cell is split into ``2^levels`` dyadic pieces and ``z`` is
    Chen-multiplied across them. Gaps between successive refinement levels
    must shrink; otherwise ``NonConvergenceError`` carries the gaps.
    """
    if z.time_fn is None:
        raise ValueError("dyadic refinement needs a time rule")
    if z_exponent is not None and z_exponent <= 1:
        raise NonConvergenceError(f"declared remainder exponent {z_exponent} <= 1", [])
    s, t = z.grid.times[:-1], z.grid.times[1:]

    def refine(s, t, lvl):
        M = 1 << lvl
        a, b = _substeps(s, t, M)
        return _reduce_product(z.time_fn(a, b), s.size, M)

    prev = refine(s, t, 0)
    scale = max(max_abs(x) for x in prev[1:])
    diffs = []
    for lvl in range(1, levels + 1):
        cur = refine(s, t, lvl)
        diffs.append(max(max_abs(a - b) for a, b in zip(cur, prev)))
        prev = cur
    tiny = 1e-14 * max(scale, 1.0)
    last = diffs[-3:]
    converging = all(d <= tiny for d in last) or all(b < a for a, b in zip(last, last[1:]))
    if not converging:
        raise NonConvergenceError("refinement differences are not decreasing", diffs)
    return TensorFunc(z.grid, z.dim, z.level, adjacent=prev, time_fn=lambda a, b: refine(np.atleast_1d(a), np.atleast_1d(b), levels), p=z.p, chain=True)


# --- rules -----------------------------------------------------------------


def line_rule(v, level: int) -> Callable:
    """Signature of ``X(t) = v t``: ``exp(v (t - s))`` truncated at ``level``."""
    v = np.asarray(v, dtype=float)
    return lambda s, t: tensor_exp((np.asarray(t) - np.asarray(s))[:, None] * v[None], level)


def smooth_lift_rule(path_fn: Callable, deriv_fn: Callable, nodes: int = 24) -> Callable:
    """Level-2 signature of a smooth path by Gauss-Legendre quadrature.

    ``path_fn(t)`` and ``deriv_fn(t)`` map an array of times to ``(len, d)``.
    """
    xi, wts = np.polynomial.legendre.leggauss(nodes)

    def rule(s, t):
        s, t = np.atleast_1d(s).astype(float), np.atleast_1d(t).astype(float)
        half = 0.5 * (t - s)
        u = s[:, None] + half[:, None] * (xi[None] + 1.0)
        B, q = u.shape
        xs = path_fn(s)
        xu = path_fn(u.ravel()).reshape(B, q, -1)
        du = deriv_fn(u.ravel()).reshape(B, q, -1)
        lvl2 = np.einsum("bq,bqa,bqc->bac", half[:, None] * wts[None], xu - xs[:, None], du)
        return [np.ones(B), path_fn(t) - xs, lvl2]

    return rule


def iterated_sums(increments: np.ndarray, level: int) -> list:
    """Discrete signature ``sum_{i_1 < ... < i_k} D_{i_1} (x) ... (x) D_{i_k}`` per level."""
    n, d = increments.shape
    out = [np.ones(()), increments.sum(axis=0)]
    running = [np.ones(()), np.zeros(d)]
    for k in range(2, level + 1):
        running.append(np.zeros((d,) * k))
    for row in increments:
        for k in range(level, 0, -1):
            running[k] = running[k] + np.multiply.outer(running[k - 1], row)
    return running


def signature_factorial_norms(v, level: int) -> list:
    """``max_c |v_c|^k / k!`` for k = 1..level (the line path's levelwise norms)."""
    a = float(np.abs(v).max())
    return [a**k / factorial(k) for k in range(1, level + 1)]


# --- JSON ------------------------------------------------------------------


def to_json(z: TensorFunc) -> str:
    doc = {
        "dim": z.dim,
        "level": z.level,
        "times": [float(t) for t in z.grid.times],
        "adjacent": [
            [[float(v) for v in np.ravel(z.adjacent[k][c])] for k in range(z.level + 1)]
            for c in range(z.grid.n)
        ],
    }
    return json.dumps(doc)


def from_json(text: str) -> TensorFunc:
    doc = json.loads(text)
    d, level = int(doc["dim"]), int(doc["level"])
    grid = TimeGrid(np.array(doc["times"], dtype=float))
    adj = [
        np.array([cell[k] for cell in doc["adjacent"]], dtype=float).reshape((grid.n,) + (d,) * k)
        for k in range(level + 1)
    ]
    return TensorFunc(grid, d, level, adjacent=adj)
