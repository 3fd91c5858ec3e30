import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from roughcalc.brownian import BrownianConfig, levy_area_ito
from roughcalc.grid import (
    GridPath,
    Increment2,
    Increment3View,
    TimeGrid,
    delta,
    external_product,
    holder_norm,
    holder_norm2,
    iter_pairs,
    iter_triples,
    left_mul,
    n2_op,
    n_op,
    patch_norm_bound,
    read_increment_csv,
    read_path_csv,
    write_increment_csv,
    write_path_csv,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def grids(draw, lo=3, hi=16):
    n = draw(st.integers(lo, hi))
    gaps = draw(arrays(float, n, elements=st.floats(0.05, 2.0)))
    return TimeGrid(np.concatenate([[0.0], np.cumsum(gaps)]))


@st.composite
def paths(draw, dim=None):
    g = draw(grids())
    d = draw(st.integers(1, 3)) if dim is None else dim
    vals = draw(arrays(float, (len(g), d), elements=finite))
    return GridPath(g, vals)


def all_triples(n):
    return np.array([(s, u, t) for s in range(n + 1) for u in range(s, n + 1) for t in range(u, n + 1)]).T


# --- types ---


def test_grid_rejects_bad_times():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        TimeGrid.uniform(0)


def test_mesh_and_restrict():
    g = TimeGrid(np.array([0.0, 0.1, 0.5, 0.6, 1.0]))
    assert g.mesh() == pytest.approx(0.4)
    assert np.array_equal(g.restrict(2).times, [0.0, 0.5, 1.0])
    assert np.array_equal(g.window(1, 3).times, [0.1, 0.5, 0.6])


def test_path_length_must_match():
    with pytest.raises(ValueError):
        GridPath(TimeGrid.uniform(4), np.zeros(3))


def test_increment_diagonal_vanishes():
    g = TimeGrid.uniform(5)
    r = Increment2(g, (), lambda i, j: np.ones(i.size))
    d = r.dense()
    assert np.all(np.diag(d) == 0)
    assert r(1, 3) == 1.0


# --- delta ---


def test_delta_constant_is_zero():
    g = TimeGrid.uniform(6)
    assert np.all(delta(GridPath(g, np.full(7, 3.5))).dense() == 0)


def test_delta_identity_path():
    g = TimeGrid(np.array([0.0, 0.5, 1.0]))
    d = delta(GridPath(g, g.times))
    assert d(0, 2)[0] == 1.0 and d(0, 1)[0] == 0.5


def test_delta_square_path():
    g = TimeGrid(np.array([0.0, 1.0, 2.0]))
    assert delta(GridPath(g, g.times**2))(1, 2)[0] == 3.0


# --- N and N2 ---


@settings(max_examples=40, deadline=None)
@given(paths())
def test_n_kills_delta(a):
    s, u, t = all_triples(a.grid.n)
    out = n_op(delta(a))(s, u, t)
    assert np.abs(out).max() <= 1e-12 * max(np.abs(a.values).max(), 1.0)


def test_n_of_square_increment():
    g = TimeGrid(np.sort(np.random.default_rng(0).uniform(0, 1, 9)))
    t = g.times
    r = Increment2(g, (), lambda i, j: (t[j] - t[i]) ** 2)
    s, u, tt = all_triples(g.n)
    want = 2 * (t[u] - t[s]) * (t[tt] - t[u])
    assert np.allclose(n_op(r)(s, u, tt), want, atol=1e-14)


def test_n_of_young_germ():
    rng = np.random.default_rng(1)
    g = TimeGrid.uniform(7)
    F, X = rng.normal(size=8), rng.normal(size=8)
    r = Increment2(g, (), lambda i, j: F[i] * (X[j] - X[i]))
    s, u, t = all_triples(g.n)
    want = -(F[u] - F[s]) * (X[t] - X[u])
    assert np.allclose(n_op(r)(s, u, t), want, atol=1e-14)


def _quads(n):
    return np.array([(s, u, v, t) for s in range(n + 1) for u in range(s, n + 1)
                     for v in range(u, n + 1) for t in range(v, n + 1)]).T


@settings(max_examples=30, deadline=None)
@given(grids(3, 8), st.data())
def test_n2_kills_n(g, data):
    table = data.draw(arrays(float, (len(g), len(g)), elements=finite))
    r = Increment2.from_dense(g, table)
    out = n2_op(n_op(r))(*_quads(g.n))
    assert np.abs(out).max() <= 1e-12 * max(np.abs(table).max(), 1.0)


def test_n2_of_product_expansion():
    rng = np.random.default_rng(2)
    g = TimeGrid.uniform(6)
    X, Y = rng.normal(size=7), rng.normal(size=7)
    a = Increment3View(g, (), lambda s, u, t: (X[u] - X[s]) * (Y[t] - Y[u]))
    s, u, v, t = _quads(g.n)
    dX = lambda p, q: X[q] - X[p]
    dY = lambda p, q: Y[q] - Y[p]
    want = -dX(u, v) * dY(v, t) + dX(s, v) * dY(v, t) - dX(s, u) * dY(u, t) + dX(s, u) * dY(u, v)
    assert np.allclose(n2_op(a)(s, u, v, t), want, atol=1e-14)


def test_n2_of_zero():
    g = TimeGrid.uniform(5)
    a = Increment3View(g, (), lambda s, u, t: np.zeros(s.size))
    assert np.all(n2_op(a)(*_quads(5)) == 0)


@settings(max_examples=30, deadline=None)
@given(paths(dim=1), st.data())
def test_leibnitz_left_product(f, data):
    g = f.grid
    table = data.draw(arrays(float, (len(g), len(g)), elements=finite))
    r = Increment2.from_dense(g, table)
    s, u, t = all_triples(g.n)
    fv = f.values[:, 0]
    lhs = n_op(left_mul(f, r))(s, u, t)[:, 0]
    rhs = fv[s] * n_op(r)(s, u, t) - (fv[u] - fv[s]) * r(u, t)
    scale = max(np.abs(fv).max() * np.abs(table).max(), 1.0)
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale


def test_external_product_is_factorised():
    rng = np.random.default_rng(3)
    g = TimeGrid.uniform(10)
    a = delta(GridPath(g, rng.normal(size=11)))
    b = delta(GridPath(g, rng.normal(size=11)))
    prod = external_product(a, b, -1.0)
    plain = Increment3View(g, prod.shape, prod._fn)
    assert holder_norm2(prod, 0.6, 0.7, "exact") == pytest.approx(holder_norm2(plain, 0.6, 0.7, "exact"), rel=1e-12)


# --- norms ---


def test_holder_norm_identity_path():
    g = TimeGrid.uniform(32)
    assert holder_norm(delta(GridPath(g, g.times)), 1.0, "exact") == pytest.approx(1.0, rel=1e-12)


def test_holder_norm_zero():
    g = TimeGrid.uniform(8)
    assert holder_norm(delta(GridPath(g, np.zeros(9))), 0.5) == 0.0


def test_holder_norm_sqrt_ratio():
    g = TimeGrid.uniform(64)
    t = g.times
    r = Increment2(g, (), lambda i, j: np.sqrt(t[j] - t[i]))
    assert holder_norm(r, 0.5, "exact") == pytest.approx(1.0, rel=1e-12)


def test_holder_norm2_examples():
    g = TimeGrid.uniform(20)
    t = g.times
    zero = Increment3View(g, (), lambda s, u, tt: np.zeros(s.size))
    assert holder_norm2(zero, 0.5, 0.5) == 0.0
    prod = Increment3View(g, (), lambda s, u, tt: (t[u] - t[s]) * (t[tt] - t[u]))
    assert holder_norm2(prod, 1.0, 1.0, "exact") == pytest.approx(1.0, rel=1e-12)
    ident = GridPath(g, t)
    germ = left_mul(ident, delta(ident))
    assert holder_norm2(n_op(germ), 1.0, 1.0, "exact") == pytest.approx(1.0, rel=1e-12)


def test_dyadic_budget_below_exact():
    rng = np.random.default_rng(4)
    g = TimeGrid.uniform(128)
    r = delta(GridPath(g, np.cumsum(rng.normal(size=129))))
    assert holder_norm(r, 0.5, "dyadic") <= holder_norm(r, 0.5, "exact") + 1e-15


def test_pair_and_triple_samplers_cover_exact():
    pairs = sum(i.size for i, _ in iter_pairs(0, 10, "exact"))
    assert pairs == 55
    triples = sum(s.size for s, _, _ in iter_triples(0, 6, "exact"))
    assert triples == len([1 for s in range(7) for u in range(s + 1, 7) for t in range(u + 1, 7)])


@settings(max_examples=30, deadline=None)
@given(grids(4, 14), st.data())
def test_norm_comparison(g, data):
    table = data.draw(arrays(float, (len(g), len(g)), elements=finite))
    r = Increment2.from_dense(g, table)
    lo = data.draw(st.floats(0.1, 1.0))
    hi = lo + data.draw(st.floats(0.05, 1.0))
    span = g.times[-1] - g.times[0]
    lhs = holder_norm(r, lo, "exact")
    rhs = span ** (hi - lo) * holder_norm(r, hi, "exact")
    assert lhs <= rhs * (1 + 1e-12)


def test_patch_smooth_and_zero():
    g = TimeGrid.uniform(40)
    r = delta(GridPath(g, np.sin(3 * g.times)))
    lhs, rhs = patch_norm_bound(r, 17, 0.9, 0.4, 0.5, "exact")
    assert lhs <= rhs
    z = delta(GridPath(g, np.zeros(41)))
    assert patch_norm_bound(z, 5, 0.9, 0.4, 0.5) == (0.0, 0.0)


def test_patch_brownian_area():
    cfg = BrownianConfig(2, TimeGrid.uniform(64), 5, 8)
    xx = levy_area_ito(cfg)
    lhs, rhs = patch_norm_bound(xx, 23, 0.8, 0.4, 0.4, "exact")
    assert lhs <= rhs


def test_patch_rejects_bad_split():
    g = TimeGrid.uniform(8)
    r = delta(GridPath(g, g.times))
    with pytest.raises(ValueError):
        patch_norm_bound(r, 0, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        patch_norm_bound(r, 8, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        patch_norm_bound(r, 3, 1.0, 0.5, 0.6)


# --- io ---


@settings(max_examples=20, deadline=None)
@given(paths())
def test_path_csv_round_trip(p):
    buf = io.StringIO()
    write_path_csv(p, buf)
    buf.seek(0)
    back = read_path_csv(buf)
    assert np.array_equal(back.values, p.values) and np.array_equal(back.times, p.times)


def test_increment_csv_round_trip():
    rng = np.random.default_rng(5)
    g = TimeGrid.uniform(6)
    r = Increment2.from_dense(g, rng.normal(size=(7, 7, 2, 2)))
    buf = io.StringIO()
    write_increment_csv(r, buf)
    buf.seek(0)
    back = read_increment_csv(buf, g, (2, 2))
    i, j = np.triu_indices(7, 1)
    assert np.array_equal(back(i, j), r(i, j))
