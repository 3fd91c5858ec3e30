"""Time grids, sampled paths and 2-/3-increments.

Everything lives on a finite grid ``t_0 < t_1 < ... < t_n``. Paths are
arrays of values at grid times; increments are *rules* evaluated lazily on
index pairs (or triples), so that an ``n = 4096`` grid never materialises a
dense ``n x n`` table.

Tensor-valued objects use row-major component order and the magnitude of a
tensor is its largest absolute component.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

# cell counts above which the `auto` budget samples pairs / triples at dyadic lags
EXACT_PAIR_LIMIT = 4096
EXACT_TRIPLE_LIMIT = 256

_CHUNK = 1 << 18


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two points")
        if not np.all(np.diff(t) > 0):
            raise ValueError("grid times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, n: int, t0: float = 0.0, t1: float = 1.0) -> "TimeGrid":
        """Uniform grid with ``n`` cells (``n + 1`` points) on ``[t0, t1]``."""
        if n < 1:
            raise ValueError("need at least one cell")
        return cls(np.linspace(t0, t1, n + 1))

    @property
    def n(self) -> int:
        """Number of cells."""
        return self.times.size - 1

    def __len__(self) -> int:
        return self.times.size

    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    def restrict(self, step: int) -> "TimeGrid":
        """Every ``step``-th point; ``step`` must divide the number of cells."""
        if step < 1 or self.n % step:
            raise ValueError(f"step {step} does not divide {self.n} cells")
        return TimeGrid(self.times[::step])

    def window(self, a: int, b: int) -> "TimeGrid":
        return TimeGrid(self.times[a : b + 1])

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (
            self.times.shape == other.times.shape and np.array_equal(self.times, other.times)
        )


@dataclass(frozen=True, eq=False)
class GridPath:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != len(self.grid):
            raise ValueError(
                f"{v.shape[0]} values for a grid of {len(self.grid)} points"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple:
        """Shape of a single value (``(d,)`` for an R^d path)."""
        return self.values.shape[1:]

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def restrict(self, step: int) -> "GridPath":
        return GridPath(self.grid.restrict(step), self.values[::step])

    def window(self, a: int, b: int) -> "GridPath":
        return GridPath(self.grid.window(a, b), self.values[a : b + 1])

    def __add__(self, other: "GridPath") -> "GridPath":
        _check_grids(self.grid, other.grid)
        return GridPath(self.grid, self.values + other.values)

    def __sub__(self, other: "GridPath") -> "GridPath":
        _check_grids(self.grid, other.grid)
        return GridPath(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridPath":
        return GridPath(self.grid, c * self.values)

    __rmul__ = __mul__


def _check_grids(a: TimeGrid, b: TimeGrid):
    if not a.same_as(b):
        raise ValueError("objects live on different grids")


class Increment2:
    """A 2-increment: a rule ``(i, j) -> value`` on ordered grid index pairs.

    ``fn`` receives two equal-length integer arrays and returns an array of
    shape ``(len, *shape)``. Values on the diagonal are forced to zero.
    """

    def __init__(self, grid: TimeGrid, shape: tuple, fn: Callable):
        self.grid = grid
        self.shape = tuple(shape)
        self._fn = fn

    def __call__(self, i, j) -> np.ndarray:
        i, j = np.broadcast_arrays(np.asarray(i, dtype=np.intp), np.asarray(j, dtype=np.intp))
        scalar = i.ndim == 0
        i1, j1 = np.atleast_1d(i).ravel(), np.atleast_1d(j).ravel()
        out = np.array(self._fn(i1, j1), dtype=float).reshape((i1.size,) + self.shape)
        diag = i1 == j1
        if diag.any():
            out[diag] = 0.0
        return out[0] if scalar else out.reshape(i.shape + self.shape)

    @classmethod
    def from_dense(cls, grid: TimeGrid, table) -> "Increment2":
        table = np.array(table, dtype=float)
        if table.shape[:2] != (len(grid), len(grid)):
            raise ValueError("dense table must be indexed by grid points twice")
        table.setflags(write=False)
        return cls(grid, table.shape[2:], lambda i, j: table[i, j])

    @classmethod
    def from_cells(cls, path: GridPath, cells) -> "Increment2":
        """Chen-chained increment ``XX`` with prescribed values on adjacent cells.

        General pairs satisfy ``XX(i,k) = XX(i,j) + XX(j,k) + dX(i,j) (x) dX(j,k)``
        by construction, evaluated in O(1) from prefix sums.
        """
        x = path.values.reshape(len(path.grid), -1)
        d = x.shape[1]
        cells = np.asarray(cells, dtype=float).reshape(path.grid.n, d, d)
        dx = np.diff(x, axis=0)
        off = x - x[0]
        steps = cells + off[:-1, :, None] * dx[:, None, :]
        prefix = np.concatenate([np.zeros((1, d, d)), np.cumsum(steps, axis=0)])
        prefix.setflags(write=False)
        off.setflags(write=False)

        def fn(i, j):
            return prefix[j] - prefix[i] - off[i][:, :, None] * (off[j] - off[i])[:, None, :]

        return cls(path.grid, (d, d), fn)

    def dense(self) -> np.ndarray:
        m = len(self.grid)
        i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        return self(i, j)

    def cells(self) -> np.ndarray:
        k = np.arange(self.grid.n)
        return self(k, k + 1)

    def restrict(self, step: int) -> "Increment2":
        return Increment2(self.grid.restrict(step), self.shape, lambda i, j: self(i * step, j * step))

    def window(self, a: int, b: int) -> "Increment2":
        return Increment2(self.grid.window(a, b), self.shape, lambda i, j: self(i + a, j + a))

    def _combine(self, other: "Increment2", op) -> "Increment2":
        _check_grids(self.grid, other.grid)
        return Increment2(self.grid, self.shape, lambda i, j: op(self(i, j), other(i, j)))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, c: float):
        return Increment2(self.grid, self.shape, lambda i, j: c * self(i, j))

    __rmul__ = __mul__


class Increment3View:
    """Lazy 3-increment on ordered triples ``(s, u, t)``.

    When ``factors = (sign, left, right)`` is set, the value is known to be
    ``sign * left(s,u) (x) right(u,t)`` (outer product); norms then use an
    exact O(n^2) factorised sup instead of scanning triples.
    """

    def __init__(self, grid: TimeGrid, shape: tuple, fn: Callable, factors=None):
        self.grid = grid
        self.shape = tuple(shape)
        self._fn = fn
        self.factors = factors

    def __call__(self, s, u, t) -> np.ndarray:
        s, u, t = np.broadcast_arrays(*(np.asarray(a, dtype=np.intp) for a in (s, u, t)))
        scalar = s.ndim == 0
        s1, u1, t1 = (np.atleast_1d(a).ravel() for a in (s, u, t))
        out = np.array(self._fn(s1, u1, t1), dtype=float).reshape((s1.size,) + self.shape)
        return out[0] if scalar else out.reshape(s.shape + self.shape)


def external_product(left: Increment2, right: Increment2, sign: float = 1.0) -> Increment3View:
    """``(A B)_{sut} = A_{su} (x) B_{ut}`` as a factorised 3-increment."""
    _check_grids(left.grid, right.grid)
    shape = left.shape + right.shape

    def fn(s, u, t):
        a = left(s, u).reshape(s.size, -1)
        b = right(u, t).reshape(s.size, -1)
        return sign * (a[:, :, None] * b[:, None, :])

    return Increment3View(left.grid, shape, fn, factors=(sign, left, right))


# --- operators -------------------------------------------------------------


def delta(path: GridPath) -> Increment2:
    """``(delta A)(i, j) = A_j - A_i``."""
    v = path.values
    return Increment2(path.grid, path.shape, lambda i, j: v[j] - v[i])


def n_op(r: Increment2) -> Increment3View:
    """``(N R)_{sut} = R_{st} - R_{ut} - R_{su}``."""
    return Increment3View(r.grid, r.shape, lambda s, u, t: r(s, t) - r(u, t) - r(s, u))


def n2_op(a: Increment3View) -> Callable:
    """Coboundary on 3-increments, returned as a rule on quadruples ``(s,u,v,t)``."""

    def rule(s, u, v, t):
        return -a(u, v, t) + a(s, v, t) - a(s, u, t) + a(s, u, v)

    return rule


def left_mul(f: GridPath, r: Increment2) -> Increment2:
    """``(F R)_{st} = F_s R_{st}``; matrix-vector contraction over R's shape."""
    fv = f.values
    k = len(r.shape)

    def fn(i, j):
        return _contract(fv[i], r(i, j), k)

    out_shape = f.shape[: len(f.shape) - k] if k else f.shape
    return Increment2(r.grid, out_shape, fn)


def _contract(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """Batched contraction of the trailing ``k`` axes of ``a`` with all of ``b``."""
    if k == 0:
        return a * b.reshape(b.shape + (1,) * (a.ndim - 1))
    n = a.shape[0]
    bs = b.reshape(n, -1)
    lead = a.shape[1 : a.ndim - k]
    return np.einsum("npq,nq->np", a.reshape(n, -1, bs.shape[1]), bs).reshape((n,) + lead)


# --- index sampling --------------------------------------------------------


def _resolve(budget: str, count: int, limit: int) -> str:
    if budget == "auto":
        return "exact" if count <= limit else "dyadic"
    if budget not in ("exact", "dyadic"):
        raise ValueError(f"unknown budget {budget!r}")
    return budget


def iter_pairs(lo: int, hi: int, budget: str = "auto") -> Iterator[tuple]:
    """Ordered index pairs ``lo <= i < j <= hi`` in chunks of arrays."""
    policy = _resolve(budget, hi - lo, EXACT_PAIR_LIMIT)
    span = hi - lo
    lags = range(1, span + 1) if policy == "exact" else [1 << k for k in range(span.bit_length()) if (1 << k) <= span]
    bi, bj, size = [], [], 0
    for lag in lags:
        i = np.arange(lo, hi - lag + 1)
        bi.append(i)
        bj.append(i + lag)
        size += i.size
        if size >= _CHUNK:
            yield np.concatenate(bi), np.concatenate(bj)
            bi, bj, size = [], [], 0
    if bi:
        yield np.concatenate(bi), np.concatenate(bj)


def iter_triples(lo: int, hi: int, budget: str = "auto") -> Iterator[tuple]:
    """Ordered index triples ``lo <= s < u < t <= hi`` in chunks."""
    policy = _resolve(budget, hi - lo, EXACT_TRIPLE_LIMIT)
    if policy == "exact":
        bs, bu, bt, size = [], [], [], 0
        for s in range(lo, hi - 1):
            u, t = np.triu_indices(hi - s + 1, k=1)
            keep = u > 0
            u, t = u[keep] + s, t[keep] + s
            bs.append(np.full(u.size, s))
            bu.append(u)
            bt.append(t)
            size += u.size
            if size >= _CHUNK:
                yield np.concatenate(bs), np.concatenate(bu), np.concatenate(bt)
                bs, bu, bt, size = [], [], [], 0
        if bs:
            yield np.concatenate(bs), np.concatenate(bu), np.concatenate(bt)
        return
    span = hi - lo
    pows = [1 << k for k in range(span.bit_length()) if (1 << k) < span]
    for a in pows:
        for b in pows:
            if a + b > span:
                continue
            s = np.arange(lo, hi - a - b + 1)
            yield s, s + a, s + a + b


def iter_quadruples(lo: int, hi: int, budget: str = "auto") -> Iterator[tuple]:
    """Ordered quadruples; exact for tiny grids, dyadic gaps otherwise."""
    span = hi - lo
    if _resolve(budget, span, 48) == "exact":
        idx = np.array(
            [(s, u, v, t) for s in range(lo, hi + 1) for u in range(s + 1, hi + 1)
             for v in range(u + 1, hi + 1) for t in range(v + 1, hi + 1)],
            dtype=np.intp,
        ).reshape(-1, 4)
        for k in range(0, len(idx), _CHUNK):
            c = idx[k : k + _CHUNK]
            yield c[:, 0], c[:, 1], c[:, 2], c[:, 3]
        return
    pows = [1 << k for k in range(span.bit_length()) if (1 << k) < span]
    for a in pows:
        for b in pows:
            for c in pows:
                if a + b + c > span:
                    continue
                s = np.arange(lo, hi - a - b - c + 1)
                yield s, s + a, s + a + b, s + a + b + c


def magnitude(values: np.ndarray, batch: int) -> np.ndarray:
    return np.abs(values.reshape(batch, -1)).max(axis=1)


def max_abs(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.abs(x).max()) if x.size else 0.0


# --- seminorms -------------------------------------------------------------


def holder_norm(
    r: Increment2, gamma: float, budget: str = "auto", window: Optional[tuple] = None
) -> float:
    """Grid sup of ``|r(i,j)| / (t_j - t_i)^gamma`` over ordered pairs."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    lo, hi = window if window is not None else (0, r.grid.n)
    if not 0 <= lo < hi <= r.grid.n:
        raise ValueError(f"bad window {lo, hi}")
    t = r.grid.times
    best = 0.0
    for i, j in iter_pairs(lo, hi, budget):
        ratio = magnitude(r(i, j), i.size) / (t[j] - t[i]) ** gamma
        best = max(best, float(ratio.max()))
    return best


def _one_sided_sup(r: Increment2, exponent: float, budget: str, left: bool) -> np.ndarray:
    """For each grid index u: sup over s<u (left) or t>u of the Holder ratio."""
    t = r.grid.times
    out = np.zeros(len(r.grid))
    for i, j in iter_pairs(0, r.grid.n, budget):
        ratio = magnitude(r(i, j), i.size) / (t[j] - t[i]) ** exponent
        np.maximum.at(out, j if left else i, ratio)
    return out


def holder_norm2(a: Increment3View, rho: float, gamma: float, budget: str = "auto") -> float:
    """Grid sup of ``|a(s,u,t)| / ((u-s)^rho (t-u)^gamma)`` over ordered triples."""
    if rho <= 0 or gamma <= 0:
        raise ValueError("exponents must be positive")
    if a.factors is not None:
        sign, left, right = a.factors
        lsup = _one_sided_sup(left, rho, budget, left=True)
        rsup = _one_sided_sup(right, gamma, budget, left=False)
        return float(abs(sign) * np.max(lsup * rsup))
    t = a.grid.times
    best = 0.0
    for s, u, tt in iter_triples(0, a.grid.n, budget):
        den = (t[u] - t[s]) ** rho * (t[tt] - t[u]) ** gamma
        best = max(best, float((magnitude(a(s, u, tt), s.size) / den).max()))
    return best


def patch_norm_bound(
    r: Increment2, split: int, gamma: float, rho1: float, rho2: float, budget: str = "auto"
) -> tuple:
    """Measured ``||r||_gamma`` on the whole grid and the patching right-hand side.

    The grid is cut at index ``split`` into two adjacent intervals sharing
    that point; the bound is ``2(||r||_I + ||r||_J) + ||N r||_{rho1,rho2}``.
    """
    if not np.isclose(rho1 + rho2, gamma):
        raise ValueError("rho1 + rho2 must equal gamma")
    if not 0 < split < r.grid.n:
        raise ValueError(f"split index {split} out of range")
    lhs = holder_norm(r, gamma, budget)
    rhs = 2.0 * (
        holder_norm(r, gamma, budget, window=(0, split))
        + holder_norm(r, gamma, budget, window=(split, r.grid.n))
    ) + holder_norm2(n_op(r), rho1, rho2, budget)
    return lhs, rhs


def sup_norm(path: GridPath) -> float:
    return max_abs(path.values)


# --- CSV -------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def component_names(prefix: str, shape: tuple) -> list:
    if not shape:
        return [prefix]
    return [prefix + "_" + "_".join(map(str, idx)) for idx in np.ndindex(*shape)]


def write_path_csv(path: GridPath, fh, prefix: str = "x") -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t"] + component_names(prefix, path.shape))
    flat = path.values.reshape(len(path.grid), -1)
    for t, row in zip(path.times, flat):
        w.writerow([_fmt(t)] + [_fmt(v) for v in row])


def read_path_csv(fh) -> GridPath:
    rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if header[0] != "t":
        raise ValueError("first column must be `t`")
    return GridPath(TimeGrid(body[:, 0]), body[:, 1:])


def write_increment_csv(r: Increment2, fh, prefix: str = "r") -> None:
    """All ordered pairs ``i < j`` as rows ``i, j, components...``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "j"] + component_names(prefix, r.shape))
    for i in range(r.grid.n):
        j = np.arange(i + 1, len(r.grid))
        vals = r(np.full(j.size, i), j).reshape(j.size, -1)
        for b, row in zip(j, vals):
            w.writerow([i, int(b)] + [_fmt(v) for v in row])


def read_increment_csv(fh, grid: TimeGrid, shape: Sequence[int] = ()) -> Increment2:
    rows = list(csv.reader(fh))
    body = np.array(rows[1:], dtype=float)
    m = len(grid)
    table = np.zeros((m, m, int(np.prod(shape, dtype=int))))
    i, j = body[:, 0].astype(int), body[:, 1].astype(int)
    table[i, j] = body[:, 2:]
    return Increment2.from_dense(grid, table.reshape((m, m) + tuple(shape)))
