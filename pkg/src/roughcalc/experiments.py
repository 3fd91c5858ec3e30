"""Experiment definitions behind the command line.

Each experiment has a parameter table ``{key: (type, default, check)}`` and
a runner ``params -> Outcome``. The runner does the numerics only; file
output and exit codes live in ``cli``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .brownian import (
    BrownianConfig,
    brownian_rough_path,
    correction_identity_check,
    grr_diagnostic,
    strat_from_ito,
    weierstrass_path,
)
from .checks import run_invariants
from .controlled import (
    ControlledPath,
    RoughPath2,
    compose_smooth,
    linear_field,
    linear_lift,
    rough_integral,
    rough_rate,
    sine_field,
)
from .grid import GridPath, TimeGrid, max_abs
from .rde import RdeProblem, ito_map_probe, solve_picard, solve_step
from .sewing import sewing_bound
from .signature import (
    NonConvergenceError,
    TensorFunc,
    extend_level,
    from_rough2,
    iterated_sums,
    line_rule,
    mult_defect,
    multiplicativize,
    smooth_lift_rule,
    tensor_exp,
)
from .young import young_germ, young_rate


@dataclass
class Outcome:
    header: list
    rows: list
    metrics: dict
    passed: bool
    notes: dict = field(default_factory=dict)


def _pos(x):
    return x > 0


def _pow2(x):
    return x >= 2 and x & (x - 1) == 0


def _unit(x):
    return 0 < x <= 1


def _field(name):
    """Scalar fields ``phi(y) = y`` and ``phi(y) = sin(y)``."""
    if name == "linear":
        return linear_field(np.ones((1, 1, 1)))
    if name == "sine":
        return sine_field()
    raise ValueError(f"unknown field {name!r}")


def _bm(p, dim=None) -> BrownianConfig:
    return BrownianConfig(dim or p.get("dim", 1), TimeGrid.uniform(p["n"]), p["seed"], p["refinement"])


# least-squares slopes carry rounding; thresholds equal to the exact order need this slack
FIT_ROUNDING = 1e-9


def _fit(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def _rate_rows(fit):
    return [[r["level"], r["mesh"], r["value"], r["cauchy_diff"]] for r in fit.rows()]


# --- experiments -----------------------------------------------------------


def young_rate_exp(p) -> Outcome:
    grid = TimeGrid.uniform(p["n"])
    x = weierstrass_path(p["gamma"], grid, p["terms"])
    f = weierstrass_path(p["rho"], grid, p["terms"])
    fit = young_rate(f, x, p["gamma"], p["rho"], p["levels"])
    order = float(fit.order)
    return Outcome(
        ["level", "mesh", "value", "cauchy_diff"], _rate_rows(fit),
        {"order": order, "expected": fit.expected}, order >= p["min_order"],
    )


def rough_rate_exp(p) -> Outcome:
    rp = brownian_rough_path(_bm(p, 1), p["lift"], p["gamma"])
    X = ControlledPath.of_driver(rp)
    fit = rough_rate(compose_smooth(sine_field((1,), 1), X), X, p["levels"])
    order = float(fit.order)
    return Outcome(
        ["level", "mesh", "value", "cauchy_diff"], _rate_rows(fit),
        {"order": order, "expected": 3 * p["gamma"] - 1}, order >= p["min_order"],
    )


def sew_bound_exp(p) -> Outcome:
    grid = TimeGrid.uniform(p["n"])
    rows, worst = [], 0.0
    for k in range(p["trials"]):
        f = weierstrass_path(p["rho"], grid, p["terms"], seed=p["seed"] + 2 * k)
        x = weierstrass_path(p["gamma"], grid, p["terms"], seed=p["seed"] + 2 * k + 1)
        measured, bound = sewing_bound(young_germ(f, x, p["rho"], p["gamma"]))
        rows.append([k, measured, bound, measured / bound])
        worst = max(worst, measured / bound)
    return Outcome(
        ["trial", "measured", "bound", "ratio"], rows,
        {"worst_ratio": worst, "slack": p["slack"]}, worst <= p["slack"],
    )


def _sine_driver(n, t1):
    grid = TimeGrid.uniform(n, 0.0, t1)
    return linear_lift(GridPath(grid, np.sin(grid.times)), 1.0)


def rde_solve_exp(p) -> Outcome:
    rp = _sine_driver(p["n"], p["t1"])
    prob = RdeProblem(rp, _field("linear"), [p["y0"]])
    step = solve_step(prob).z.values[:, 0]
    pic = solve_picard(prob, tol=p["tol"]).z.values[:, 0]
    t = rp.grid.times
    exact = p["y0"] * np.exp(np.sin(t) - np.sin(t[0]))
    err = float(np.abs(step - exact).max())
    gap = float(np.abs(pic - step).max())
    rows = [[a, b, c, e] for a, b, c, e in zip(t, step, pic, exact)]
    ok = err <= p["max_err"] and gap <= 10 * p["tol"]
    return Outcome(["t", "y_step", "y_picard", "y_exact"], rows, {"step_error": err, "picard_gap": gap}, ok)


def rde_order_exp(p) -> Outcome:
    rows, meshes, errs = [], [], []
    n = p["n_min"]
    while n <= p["n_max"]:
        rp = _sine_driver(n, p["t1"])
        y = solve_step(RdeProblem(rp, _field("linear"), [1.0])).z.values[:, 0]
        t = rp.grid.times
        err = float(np.abs(y - np.exp(np.sin(t))).max())
        rows.append([n, rp.grid.mesh(), err])
        meshes.append(rp.grid.mesh())
        errs.append(err)
        n *= 2
    order = _fit(meshes, errs)
    return Outcome(["n", "mesh", "sup_error"], rows, {"order": order}, order >= p["min_order"])


def ito_map_exp(p) -> Outcome:
    rp = brownian_rough_path(_bm(p, 1), p["lift"], p["gamma"])
    prob = RdeProblem(rp, _field(p["field"]), [p["y0"]])
    eps = tuple(10.0 ** -k for k in range(1, p["eps_levels"] + 1))
    res = ito_map_probe(prob, eps, seed=p["seed"])
    rows = [[e, d] for e, d in zip(res.eps, res.distances)]
    ok = p["slope_lo"] <= res.slope <= p["slope_hi"]
    return Outcome(["epsilon", "distance"], rows, {"slope": res.slope}, bool(ok))


def bm_gen_exp(p) -> Outcome:
    cfg = BrownianConfig(p["dim"], TimeGrid.uniform(p["n"], p["t0"], p["t1"]), p["seed"], p["refinement"])
    metrics, ok = {}, True
    for kind in ("ito", "strat"):
        rp = brownian_rough_path(cfg, kind, p["gamma"])
        z = from_rough2(rp)
        defect = mult_defect(z)
        scale = max(max_abs(rp.xx.dense()), max_abs(rp.x.values))
        metrics[f"{kind}_defect"] = defect
        metrics[f"{kind}_scale"] = scale
        ok = ok and defect <= 1e-12 * scale
    x = rp.x
    rows = [[t] + list(v) for t, v in zip(x.times, x.values)]
    header = ["t"] + [f"x_{c}" for c in range(p["dim"])]
    return Outcome(header, rows, metrics, ok)


def ito_strat_exp(p) -> Outcome:
    if p["phi"] == "linear":
        phi = linear_field(np.array([[[2.0]]]), [0.5])
        chk = correction_identity_check(phi, _bm(p, 1), p["gamma"])
        rows = [[t, a, b] for t, a, b in zip(TimeGrid.uniform(p["n"]).times, chk.lhs.ravel(), chk.rhs.ravel())]
        return Outcome(["t", "lhs", "rhs"], rows, {"gap": chk.gap}, chk.gap <= p["max_gap"])
    if p["phi"] != "sine":
        raise ValueError(f"unknown field {p['phi']!r}")
    # nested coarse grids over one fine path: n * refinement fixed
    fine = p["n"] * p["refinement"]
    rows, meshes, gaps = [], [], []
    for k in range(p["sweep"] - 1, -1, -1):
        n = p["n"] >> k
        cfg = BrownianConfig(1, TimeGrid.uniform(n), p["seed"], fine // n)
        gap = correction_identity_check(sine_field(), cfg, p["gamma"]).gap
        rows.append([n, cfg.grid.mesh(), gap])
        meshes.append(cfg.grid.mesh())
        gaps.append(gap)
    order = _fit(meshes, gaps)
    return Outcome(["n", "mesh", "gap"], rows, {"order": order}, order >= p["min_order"] - FIT_ROUNDING)


def ito_shift_exp(p) -> Outcome:
    cfg = BrownianConfig(p["dim"], TimeGrid.uniform(p["n"]), p["seed"], p["refinement"])
    ito = brownian_rough_path(cfg, "ito", p["gamma"]).xx
    strat = strat_from_ito(ito)
    t = cfg.grid.times
    diff = strat.dense() - ito.dense()
    want = 0.5 * (t[None, :] - t[:, None])[:, :, None, None] * np.eye(p["dim"])
    upper = np.triu(np.ones((t.size, t.size), bool), 1)
    off = ~np.eye(p["dim"], dtype=bool)
    offdiag_equal = bool(np.array_equal(strat.dense()[upper][:, off], ito.dense()[upper][:, off]))
    # a + b - a reproduces b only up to one rounding of a + b
    gap = float(np.abs(diff - want)[upper].max())
    scale = float(np.abs(strat.dense()).max())
    rows = [[j, diff[0, j, 0, 0], want[0, j, 0, 0]] for j in range(1, t.size)]
    ok = offdiag_equal and gap <= 4 * np.finfo(float).eps * scale
    return Outcome(["j", "shift_00", "expected"], rows, {"diag_gap": gap, "offdiag_equal": offdiag_equal, "scale": scale}, ok)


def rough_identity_exp(p) -> Outcome:
    rp = brownian_rough_path(_bm(p, 1), "ito", p["gamma"])
    geo = linear_lift(rp.x, p["gamma"])
    X = ControlledPath.of_driver(geo)
    I = rough_integral(X, X).z.values.ravel()
    x = rp.x.values[:, 0]
    exact = 0.5 * (x**2 - x[0] ** 2)
    rel = float(np.abs(I - exact).max() / np.abs(exact).max())
    rows = [[t, a, b] for t, a, b in zip(rp.grid.times, I, exact)]
    return Outcome(["t", "integral", "exact"], rows, {"rel_error": rel}, rel <= p["max_rel"])


def _smooth_path():
    path = lambda t: np.stack([np.sin(2 * t), np.cos(3 * t)], -1)
    deriv = lambda t: np.stack([2 * np.cos(2 * t), -3 * np.sin(3 * t)], -1)
    return path, deriv


def sig_extend_exp(p) -> Outcome:
    grid = TimeGrid.uniform(p["n"])
    L = p["level"]
    i, j = np.triu_indices(len(grid), 1)
    if p["path"] == "line":
        v = np.array([0.7, -1.2, 0.4])
        z = TensorFunc(grid, 3, L - 1, time_fn=line_rule(v, L - 1), p=float(L - 1))
        zl = extend_level(z, p["M"])
        want = tensor_exp((grid.times[j] - grid.times[i])[:, None] * v, L)[L]
        got = zl.values(i, j)[L]
        err = float(np.abs(got - want).max())
        tol = p["max_err"]
    elif p["path"] == "smooth":
        if L != 3:
            raise ValueError("the smooth path is lifted at level 2, so level must be 3")
        path, deriv = _smooth_path()
        z = TensorFunc(grid, 2, 2, time_fn=smooth_lift_rule(path, deriv), p=2.0)
        zl = extend_level(z, p["M"])
        fine = TimeGrid.uniform(p["n"] * p["brute"]).times
        inc = np.diff(path(fine), axis=0)
        got = zl.values(i, j)[L]
        want = np.array([iterated_sums(inc[a * p["brute"] : b * p["brute"]], L)[L] for a, b in zip(i, j)])
        err = float(np.abs(got - want).max())
        tol = 5 * grid.mesh()
    else:
        raise ValueError(f"unknown path {p['path']!r}")
    per_pair = np.abs(got - want).reshape(i.size, -1).max(axis=1)
    rows = [[a, b, e] for a, b, e in zip(i, j, per_pair)]
    defect = mult_defect(zl)
    return Outcome(
        ["i", "j", "abs_err"], rows, {"max_abs_err": err, "tol": tol, "defect": defect}, err <= tol
    )


def _perturbed_rule(E, expo):
    path, deriv = _smooth_path()
    base = smooth_lift_rule(path, deriv)

    def rule(s, t):
        out = base(s, t)
        out[2] = out[2] + ((np.asarray(t) - np.asarray(s)) ** expo)[:, None, None] * E
        return out

    return rule


def sig_mult_exp(p) -> Outcome:
    grid = TimeGrid.uniform(p["n"])
    E = np.random.default_rng(p["seed"]).normal(size=(2, 2))
    rows, metrics = [], {}
    good = TensorFunc(grid, 2, 2, time_fn=_perturbed_rule(E, p["good_exponent"]))
    fixed = multiplicativize(good, p["levels"], z_exponent=p["good_exponent"])
    metrics["defect_in"] = mult_defect(good)
    metrics["defect_out"] = mult_defect(fixed)
    rows.append([p["good_exponent"], metrics["defect_in"], metrics["defect_out"], 1])
    bad = TensorFunc(grid, 2, 2, time_fn=_perturbed_rule(E, p["bad_exponent"]))
    try:
        multiplicativize(bad, p["levels"])
        flagged = False
    except NonConvergenceError:
        flagged = True
    metrics["bad_flagged"] = flagged
    rows.append([p["bad_exponent"], mult_defect(bad), float("nan"), int(not flagged)])
    ok = metrics["defect_out"] <= p["max_defect"] and flagged
    return Outcome(["exponent", "defect_in", "defect_out", "converged"], rows, metrics, ok)


def grr_exp(p) -> Outcome:
    rp = brownian_rough_path(_bm(p, 1), "ito", 0.45)
    rows, ratios = [], []
    for k in range(p["sweep"] - 1, -1, -1):
        r = rp.xx.restrict(1 << k)
        res = grr_diagnostic(r, p["gamma"], p["p"])
        rows.append([r.grid.n, res.U, res.nr_norm, res.measured, res.ratio])
        ratios.append(res.ratio)
    ratios = np.array(ratios)
    spread = float(np.abs(ratios / ratios[-1] - 1).max())
    return Outcome(
        ["n", "U", "nr_norm", "measured", "ratio"], rows,
        {"ratio_finest": float(ratios[-1]), "max_rel_spread": spread}, spread <= 0.5,
    )


def invariants_exp(p) -> Outcome:
    reps = run_invariants(p["instances"], p["seed"], p["tol"])
    rows = [[r.name, r.instances, r.worst, int(r.passed)] for r in reps]
    return Outcome(
        ["invariant", "instances", "worst_rel", "passed"], rows,
        {r.name: r.worst for r in reps}, all(r.passed for r in reps),
    )


# --- parameter tables ------------------------------------------------------

_BM = {"n": (int, 1024, _pow2), "seed": (int, 0, None), "refinement": (int, 16, _pos)}

EXPERIMENTS = {
    "young-rate": (young_rate_exp, {
        "gamma": (float, 0.75, _unit), "rho": (float, 0.75, _unit), "n": (int, 4096, _pow2),
        "levels": (int, 6, lambda x: x >= 3), "terms": (int, 24, _pos), "min_order": (float, 0.35, None)}),
    "rough-rate": (rough_rate_exp, {
        **_BM, "n": (int, 4096, _pow2), "seed": (int, 3, None), "gamma": (float, 0.45, lambda g: 1 / 3 < g <= 0.5),
        "lift": (str, "strat", {"ito", "strat"}.__contains__), "levels": (int, 6, lambda x: x >= 3),
        "min_order": (float, 0.20, None)}),
    "sew-bound": (sew_bound_exp, {
        "gamma": (float, 0.75, _unit), "rho": (float, 0.75, _unit), "n": (int, 1024, _pos),
        "trials": (int, 20, _pos), "seed": (int, 0, None), "terms": (int, 24, _pos), "slack": (float, 1.05, _pos)}),
    "rde-solve": (rde_solve_exp, {
        "n": (int, 4096, _pos), "t1": (float, 1.0, _pos), "y0": (float, 1.0, None),
        "tol": (float, 1e-10, _pos), "max_err": (float, 1e-5, _pos)}),
    "rde-order": (rde_order_exp, {
        "n_min": (int, 256, _pow2), "n_max": (int, 4096, _pow2), "t1": (float, 1.0, _pos), "min_order": (float, 1.5, None)}),
    "ito-map": (ito_map_exp, {
        **_BM, "seed": (int, 11, None), "gamma": (float, 0.45, lambda g: 1 / 3 < g <= 0.5),
        "lift": (str, "strat", {"ito", "strat"}.__contains__), "field": (str, "linear", {"linear", "sine"}.__contains__),
        "y0": (float, 1.0, None), "eps_levels": (int, 4, lambda k: 2 <= k <= 8),
        "slope_lo": (float, 0.8, None), "slope_hi": (float, 1.2, None)}),
    "bm-gen": (bm_gen_exp, {
        **_BM, "dim": (int, 2, lambda d: 1 <= d <= 3), "t0": (float, 0.0, None), "t1": (float, 1.0, None),
        "gamma": (float, 0.45, lambda g: 1 / 3 < g <= 0.5)}),
    "ito-strat": (ito_strat_exp, {
        **_BM, "seed": (int, 7, None), "phi": (str, "linear", {"linear", "sine"}.__contains__),
        "gamma": (float, 0.45, lambda g: 1 / 3 < g <= 0.5), "sweep": (int, 5, lambda k: 2 <= k <= 8),
        "max_gap": (float, 1e-12, _pos), "min_order": (float, 1.0, None)}),
    "ito-shift": (ito_shift_exp, {
        **_BM, "n": (int, 256, _pow2), "dim": (int, 2, lambda d: 1 <= d <= 3),
        "gamma": (float, 0.45, lambda g: 1 / 3 < g <= 0.5)}),
    "rough-identity": (rough_identity_exp, {
        **_BM, "n": (int, 4096, _pow2), "seed": (int, 7, None), "refinement": (int, 4, _pos),
        "gamma": (float, 0.45, lambda g: 1 / 3 < g <= 0.5), "max_rel": (float, 1e-12, _pos)}),
    "sig-extend": (sig_extend_exp, {
        "path": (str, "line", {"line", "smooth"}.__contains__), "level": (int, 3, lambda k: 3 <= k <= 5),
        "n": (int, 16, _pos), "M": (int, 16384, _pos), "brute": (int, 256, _pos), "max_err": (float, 1e-10, _pos)}),
    "sig-mult": (sig_mult_exp, {
        "n": (int, 16, _pos), "levels": (int, 12, lambda k: 3 <= k <= 16), "seed": (int, 1, None),
        "good_exponent": (float, 1.5, lambda z: z > 1), "bad_exponent": (float, 0.9, lambda z: 0 < z <= 1),
        "max_defect": (float, 1e-10, _pos)}),
    "grr-diag": (grr_exp, {
        **_BM, "gamma": (float, 0.8, _pos), "p": (float, 8.0, lambda q: q >= 1), "sweep": (int, 3, lambda k: 2 <= k <= 5)}),
    "invariants": (invariants_exp, {
        "instances": (int, 100, _pos), "seed": (int, 0, None), "tol": (float, 1e-12, _pos)}),
}
