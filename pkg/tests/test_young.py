import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughcalc.brownian import weierstrass_path
from roughcalc.grid import GridPath, TimeGrid, delta, holder_norm
from roughcalc.sewing import SewingError, sew
from roughcalc.young import (
    young_germ,
    young_integral,
    young_rate,
    young_remainder_bound,
    young_remainder_measured,
)


def test_constant_integrand_telescopes():
    g = TimeGrid.uniform(50)
    x = GridPath(g, np.sin(7 * g.times))
    f = GridPath(g, np.full(51, 2.5))
    out = young_integral(f, x).values[:, 0]
    assert np.allclose(out, 2.5 * (x.values[:, 0] - x.values[0, 0]), atol=1e-14)


def test_t_against_t_squared():
    g = TimeGrid.uniform(1 << 14)
    f, x = GridPath(g, g.times), GridPath(g, g.times**2)
    assert young_integral(f, x).values[-1, 0] == pytest.approx(2 / 3, abs=2 * g.mesh())


def test_self_integral_smooth():
    g = TimeGrid.uniform(1 << 14)
    x = GridPath(g, np.cos(3 * g.times))
    v = x.values[:, 0]
    assert young_integral(x, x).values[-1, 0] == pytest.approx(0.5 * (v[-1] ** 2 - v[0] ** 2), abs=1e-3)


def test_matrix_integrand():
    g = TimeGrid.uniform(10)
    rng = np.random.default_rng(0)
    f = GridPath(g, rng.normal(size=(11, 2, 3)))
    x = GridPath(g, rng.normal(size=(11, 3)))
    out = young_integral(f, x).values
    dx = np.diff(x.values, axis=0)
    want = np.concatenate([[np.zeros(2)], np.cumsum(np.einsum("nab,nb->na", f.values[:-1], dx), axis=0)])
    assert np.allclose(out, want, atol=1e-13)


def test_shape_and_grid_mismatch():
    g = TimeGrid.uniform(10)
    with pytest.raises(ValueError):
        young_integral(GridPath(g, np.zeros((11, 2))), GridPath(g, np.zeros((11, 3))))
    with pytest.raises(ValueError):
        young_integral(GridPath(g, g.times), GridPath(TimeGrid.uniform(10, 0, 2), g.times))


def test_remainder_zero_for_constant():
    g = TimeGrid.uniform(64)
    x = weierstrass_path(0.75, g)
    f = GridPath(g, np.ones(65))
    # telescoping holds up to cumulative-sum rounding, amplified by |t-s|^-1.5 <= 512
    assert young_remainder_measured(f, x, 0.75, 0.75) <= 1e-15 * 512 * 64
    assert young_remainder_bound(f, x, 0.75, 0.75) == 0.0


def test_remainder_weierstrass_within_bound():
    g = TimeGrid.uniform(512)
    x = weierstrass_path(0.75, g)
    assert young_remainder_measured(x, x, 0.75, 0.75) <= young_remainder_bound(x, x, 0.75, 0.75) * 1.05


def test_remainder_linear_paths():
    # f = a t, x = b t: remainder over (s,t) is a b (t-s)^2 / 2 minus its grid analogue
    g = TimeGrid.uniform(256)
    f, x = GridPath(g, 2 * g.times), GridPath(g, -3 * g.times)
    measured = young_remainder_measured(f, x, 1.0, 1.0)
    assert measured <= young_remainder_bound(f, x, 1.0, 1.0)
    assert measured == pytest.approx(3.0 * (1 - 1 / 256), rel=1e-10)


def test_bound_rejects_small_exponents():
    g = TimeGrid.uniform(8)
    x = GridPath(g, g.times)
    with pytest.raises(SewingError):
        young_remainder_bound(x, x, 0.5, 0.5)


def test_rate_smooth_superconvergent():
    g = TimeGrid.uniform(1 << 12)
    f, x = GridPath(g, np.sin(g.times)), GridPath(g, np.cos(2 * g.times))
    assert young_rate(f, x, 1.0, 1.0, 6).order >= 1.0


def test_rate_weierstrass():
    g = TimeGrid.uniform(1 << 12)
    x = weierstrass_path(0.75, g)
    fit = young_rate(x, x, 0.75, 0.75, 6)
    assert abs(fit.order - 0.5) <= 0.15
    assert fit.expected == pytest.approx(0.5)


def test_rate_constant_is_exact():
    g = TimeGrid.uniform(256)
    fit = young_rate(GridPath(g, np.ones(257)), weierstrass_path(0.75, g), 0.75, 0.75, 4)
    assert fit.exact and fit.order == np.inf
    assert np.all(fit.diffs <= 1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    g = TimeGrid.uniform(40)
    f1, f2, x = (GridPath(g, np.cumsum(rng.normal(size=41))) for _ in range(3))
    lhs = young_integral(f1 * a + f2 * b, x).values
    rhs = young_integral(f1, x).values * a + young_integral(f2, x).values * b
    scale = max(1.0, np.abs(young_integral(f1, x).values).max(), np.abs(young_integral(f2, x).values).max())
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale * (abs(a) + abs(b) + 1)


def test_chasles_locality():
    rng = np.random.default_rng(4)
    g = TimeGrid.uniform(60)
    f, x = GridPath(g, rng.normal(size=61)), GridPath(g, rng.normal(size=61))
    I = young_integral(f, x).values
    fv, xv = f.values.copy(), x.values.copy()
    fv[40:] += 100.0
    xv[:10] -= 7.0
    J = young_integral(GridPath(g, fv), GridPath(g, xv)).values
    assert np.allclose(I[40] - I[11], J[40] - J[11], atol=1e-13)


def test_agrees_with_sew_bitwise():
    g = TimeGrid.uniform(100)
    x = weierstrass_path(0.6, g)
    f = weierstrass_path(0.8, g, seed=3)
    assert np.array_equal(young_integral(f, x).values, sew(young_germ(f, x)).values)
