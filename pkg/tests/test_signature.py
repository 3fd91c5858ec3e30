import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from roughcalc.brownian import BrownianConfig, brownian_rough_path
from roughcalc.controlled import RoughPath2, linear_lift
from roughcalc.grid import GridPath, Increment2, TimeGrid
from roughcalc.signature import (
    NonConvergenceError,
    TensorFunc,
    chen_mul,
    extend_level,
    from_json,
    from_rough2,
    iterated_sums,
    levelwise_norms,
    line_rule,
    mult_defect,
    multiplicativize,
    signature_factorial_norms,
    smooth_lift_rule,
    tensor_exp,
    tensor_inverse,
    to_json,
    unit,
)

small = st.floats(-2, 2, allow_nan=False)


def series(draw, d, level):
    return [np.ones(())] + [draw(arrays(float, (d,) * k, elements=small)) for k in range(1, level + 1)]


def close(a, b, tol=1e-12):
    return all(np.allclose(x, y, atol=tol, rtol=0) for x, y in zip(a, b))


def smooth_path():
    path = lambda t: np.stack([np.sin(2 * t), np.cos(3 * t)], axis=-1)
    deriv = lambda t: np.stack([2 * np.cos(2 * t), -3 * np.sin(3 * t)], axis=-1)
    return path, deriv


# --- algebra ---


def test_unit_is_identity():
    a = tensor_exp(np.array([0.3, -1.0]), 3)
    e = unit(2, 3)
    assert close(chen_mul(e, a), a, 0) and close(chen_mul(a, e), a, 0)


def test_level_one_product_adds():
    a, b = tensor_exp(np.array([1.0, 2.0]), 1), tensor_exp(np.array([-0.5, 4.0]), 1)
    assert np.array_equal(chen_mul(a, b)[1], [0.5, 6.0])


def test_line_exponentials_compose():
    v = np.array([0.4, -0.9, 1.3])
    prod = chen_mul(tensor_exp(0.3 * v, 4), tensor_exp(0.5 * v, 4))
    assert close(prod, tensor_exp(0.8 * v, 4), 1e-15)


@settings(max_examples=40, deadline=None)
@given(st.data(), st.integers(1, 3), st.integers(1, 4))
def test_product_associative(data, d, level):
    a, b, c = (series(data.draw, d, level) for _ in range(3))
    assert close(chen_mul(chen_mul(a, b), c), chen_mul(a, chen_mul(b, c)), 1e-10)


@settings(max_examples=30, deadline=None)
@given(st.data(), st.integers(1, 3), st.integers(1, 4))
def test_inverse(data, d, level):
    a = series(data.draw, d, level)
    assert close(chen_mul(a, tensor_inverse(a)), unit(d, level), 1e-9)


def test_product_rejects_mismatch():
    with pytest.raises(ValueError):
        chen_mul(unit(2, 2), unit(2, 3))
    with pytest.raises(ValueError):
        chen_mul(unit(2, 2), unit(3, 2))


def test_iterated_sums_match_products():
    rng = np.random.default_rng(0)
    inc = rng.normal(size=(7, 2))
    prod = unit(2, 3)
    for row in inc:
        # one step of a piecewise-constant jump path contributes only the increment
        step = [np.ones(()), row, np.zeros((2, 2)), np.zeros((2, 2, 2))]
        prod = chen_mul(prod, step)
    assert close(prod, iterated_sums(inc, 3), 1e-12)


# --- level-2 functionals from rough paths ---


def test_from_rough2_geometric():
    g = TimeGrid.uniform(32)
    rp = linear_lift(GridPath(g, np.stack([np.sin(g.times), g.times**2], axis=1)), 1.0)
    z = from_rough2(rp)
    assert mult_defect(z) <= 1e-14


@pytest.mark.parametrize("kind", ["ito", "strat"])
def test_from_rough2_brownian(kind):
    rp = brownian_rough_path(BrownianConfig(2, TimeGrid.uniform(64), 3, 8), kind)
    assert mult_defect(from_rough2(rp)) <= 1e-13


def test_from_rough2_rejects_corrupted_area():
    g = TimeGrid.uniform(16)
    rp = linear_lift(GridPath(g, np.stack([g.times, np.sin(g.times)], axis=1)), 1.0)
    bad = Increment2(g, (2, 2), lambda i, j: rp.xx(i, j) + 1e-3 * (j - i > 3)[:, None, None])
    with pytest.raises(ValueError):
        from_rough2(RoughPath2(rp.x, bad, 1.0, check=False))


def test_tensorfunc_validation():
    g = TimeGrid.uniform(4)
    with pytest.raises(ValueError):
        TensorFunc(g, 2, 2)
    with pytest.raises(ValueError):
        TensorFunc(g, 2, 2, adjacent=[np.ones(4), np.zeros((4, 2))])
    with pytest.raises(ValueError):
        TensorFunc(g, 1, 1, adjacent=[np.full(4, 2.0), np.zeros((4, 1))])


# --- extension ---


def test_extension_of_line():
    v = np.array([0.7, -1.2])
    g = TimeGrid.uniform(8)
    z = TensorFunc(g, 2, 2, time_fn=line_rule(v, 2), p=2.0)
    z3 = extend_level(z, 16384)
    i, j = np.triu_indices(9, 1)
    want = tensor_exp((g.times[j] - g.times[i])[:, None] * v, 3)[3]
    assert np.abs(z3.values(i, j)[3] - want).max() <= 1e-10
    # lower levels untouched
    assert close(z3.values(i, j)[:3], z.values(i, j), 1e-13)


def test_extension_of_unit_is_unit():
    g = TimeGrid.uniform(6)
    z = TensorFunc(g, 2, 2, time_fn=lambda s, t: unit(2, 2, np.size(s)), p=2.0)
    z3 = extend_level(z, 8)
    i, j = np.triu_indices(7, 1)
    assert all(np.all(a == 0) for a in z3.values(i, j)[1:])


def test_extension_of_smooth_path():
    path, deriv = smooth_path()
    g = TimeGrid.uniform(8)
    z = TensorFunc(g, 2, 2, time_fn=smooth_lift_rule(path, deriv), p=2.0)
    z3 = extend_level(z, 512)
    i, j = np.triu_indices(9, 1)
    fine = TimeGrid.uniform(8 * 2048).times
    inc = np.diff(path(fine), axis=0)
    want = np.array([iterated_sums(inc[a * 2048 : b * 2048], 3)[3] for a, b in zip(i, j)])
    assert np.abs(z3.values(i, j)[3] - want).max() <= 5 * g.mesh()
    assert mult_defect(z3) <= 1e-12


def test_extension_stable_in_substeps():
    path, deriv = smooth_path()
    g = TimeGrid.uniform(4)
    z = TensorFunc(g, 2, 2, time_fn=smooth_lift_rule(path, deriv), p=2.0)
    i, j = np.triu_indices(5, 1)
    a = extend_level(z, 256).values(i, j)[3]
    b = extend_level(z, 512).values(i, j)[3]
    c = extend_level(z, 1024).values(i, j)[3]
    assert np.abs(b - c).max() <= 0.6 * np.abs(a - b).max()


def test_extension_preconditions():
    g = TimeGrid.uniform(4)
    z = TensorFunc(g, 2, 2, time_fn=line_rule([1.0, 0.0], 2), p=3.0)
    with pytest.raises(ValueError):
        extend_level(z, 8)
    no_rule = TensorFunc(g, 2, 2, adjacent=line_rule([1.0, 0.0], 2)(g.times[:-1], g.times[1:]))
    with pytest.raises(ValueError):
        extend_level(no_rule, 8)
    broken = TensorFunc(g, 1, 1, time_fn=lambda s, t: [np.ones(np.size(s)), ((t - s) ** 2)[:, None]])
    with pytest.raises(ValueError):
        extend_level(broken, 8)


def test_dropped_level_two_defect():
    # level 1 of a line signature with level 2 set to zero misses dx_su (x) dx_ut
    v = np.array([1.0, -2.0])
    g = TimeGrid.uniform(4)
    z1 = TensorFunc(g, 2, 1, time_fn=line_rule(v, 1), p=1.0)
    zero2 = TensorFunc(g, 2, 2, time_fn=lambda s, t: line_rule(v, 1)(s, t) + [np.zeros((np.size(s), 2, 2))])
    assert mult_defect(z1) <= 1e-15
    # (u-s)(t-u) peaks at s=0, u=1/2, t=1
    assert mult_defect(zero2) == pytest.approx(0.25 * np.abs(np.outer(v, v)).max(), rel=1e-12)


def test_factorial_norms():
    v = np.array([0.5, -1.5, 1.0])
    g = TimeGrid.uniform(4)
    z = extend_level(TensorFunc(g, 3, 3, time_fn=line_rule(v, 3), p=1.0), 4096)
    got = levelwise_norms(z)
    assert np.allclose(got, signature_factorial_norms(v, 4), rtol=1e-10, atol=0)
    assert signature_factorial_norms([2.0], 3) == [2.0, 2.0, 8.0 / 6]


# --- multiplicativization ---


def perturbed(E, expo, grid):
    path, deriv = smooth_path()
    base = smooth_lift_rule(path, deriv)

    def rule(s, t):
        out = base(s, t)
        out[2] = out[2] + ((np.asarray(t) - np.asarray(s)) ** expo)[:, None, None] * E
        return out

    return TensorFunc(grid, 2, 2, time_fn=rule)


def test_multiplicativize_fixed_point():
    path, deriv = smooth_path()
    g = TimeGrid.uniform(8)
    z = TensorFunc(g, 2, 2, time_fn=smooth_lift_rule(path, deriv))
    out = multiplicativize(z, 6)
    i, j = np.triu_indices(9, 1)
    assert close(out.values(i, j), z.values(i, j), 1e-12)


def test_multiplicativize_almost_multiplicative():
    E = np.array([[0.3, -1.0], [0.5, 0.2]])
    z = perturbed(E, 1.5, TimeGrid.uniform(8))
    assert mult_defect(z) > 1e-3
    out = multiplicativize(z, 10, z_exponent=1.5)
    assert mult_defect(out) <= 1e-12
    # the perturbation is removed, leaving the smooth lift up to the remainder size
    path, deriv = smooth_path()
    clean = TensorFunc(z.grid, 2, 2, time_fn=smooth_lift_rule(path, deriv))
    i, j = np.triu_indices(9, 1)
    assert np.abs(out.values(i, j)[2] - clean.values(i, j)[2]).max() <= 0.05


def test_multiplicativize_flags_bad_exponent():
    E = np.array([[0.3, -1.0], [0.5, 0.2]])
    z = perturbed(E, 0.9, TimeGrid.uniform(8))
    with pytest.raises(NonConvergenceError) as e:
        multiplicativize(z, 10)
    assert e.value.diffs.size == 10
    with pytest.raises(NonConvergenceError):
        multiplicativize(perturbed(E, 1.5, z.grid), 4, z_exponent=0.9)


# --- JSON ---


def test_json_round_trip_bit_exact():
    rp = brownian_rough_path(BrownianConfig(2, TimeGrid.uniform(16), 7, 4))
    z = from_rough2(rp)
    back = from_json(to_json(z))
    assert back.dim == 2 and back.level == 2
    assert np.array_equal(back.grid.times, z.grid.times)
    assert all(np.array_equal(a, b) for a, b in zip(back.adjacent, z.adjacent))
    assert to_json(back) == to_json(z)
