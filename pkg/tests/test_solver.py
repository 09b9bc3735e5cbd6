import numpy as np
import pytest
from sklearn.base import clone

from degparabolic.barriers import exact_solution
from degparabolic.geometry import HalfCylinderGrid
from degparabolic.operators import Problem, make_operator
from degparabolic.solver import (CauchyDirichletSolver, MonotonicityError, SchemeConfig,
                                 SolverDivergence, _Marcher, cfl_dt, perron_bounds,
                                 solve_cauchy_dirichlet, step)


def zero_problem(gamma=0.5, key="laplacian", ell=(1.0, 1.0), **kw):
    return Problem(gamma, make_operator(key, ell), lambda x, t: 0.0, lambda x, t: 0.0, **kw)


def test_zero_data_gives_zero():
    res = solve_cauchy_dirichlet(zero_problem(), h=1 / 16)
    assert np.all(res.field.values == 0)
    assert 0 <= res.stability_margin < 1


@pytest.mark.parametrize("key,ell", [("laplacian", (1, 1)), ("pucci+", (1, 2)),
                                     ("pucci-", (1, 2)), ("bellman:inf:1,2;2,1", (1, 2))])
@pytest.mark.parametrize("gamma", [-1.0, 0.0, 0.5])
def test_step_is_monotone_at_the_bound(key, ell, gamma):
    prob = zero_problem(gamma, key, ell)
    grid = prob.grid(1 / 8)
    dt = cfl_dt(grid, gamma, prob.op.ellipticity)
    rng = np.random.default_rng(11)
    for _ in range(20):
        v = rng.normal(size=grid.spatial_shape)
        v[grid.boundary] = 0
        bump = rng.uniform(0, 2, grid.spatial_shape)
        bump[grid.boundary] = 0
        a = step(v + bump, prob, grid, 0.0, dt)
        b = step(v, prob, grid, 0.0, dt)
        assert np.all(a >= b - 1e-12)


def test_oversized_step_is_rejected():
    prob = zero_problem()
    grid = prob.grid(1 / 8)
    dt = cfl_dt(grid, 0.5, prob.op.ellipticity)
    with pytest.raises(MonotonicityError):
        step(np.zeros(grid.spatial_shape), prob, grid, 0.0, 1.5 * dt)
    with pytest.raises(MonotonicityError):
        solve_cauchy_dirichlet(prob, grid, SchemeConfig(dt=2 * dt))
    with pytest.raises(MonotonicityError):
        SchemeConfig(cfl_safety=1.2)


def test_non_monotone_step_actually_violates_comparison():
    # beyond the bound the step can reverse order, which is why the guard exists
    prob = zero_problem(0.0)
    grid = prob.grid(1 / 8)
    dt = 3 * cfl_dt(grid, 0.0, prob.op.ellipticity)
    v = np.zeros(grid.spatial_shape)
    bump = v.copy()
    bump[4, 4] = 1.0
    march = _Marcher(prob, grid)
    out = march.advance(v + bump, 0.0, dt, dt) - march.advance(v, 0.0, dt, dt)
    assert out.min() < 0


def test_nonfinite_data_aborts():
    prob = Problem(0.0, make_operator("laplacian"), lambda x, t: 0.0,
                   lambda x, t: np.where(x[..., 0] > 0.5, np.inf, 0.0))
    with pytest.raises(SolverDivergence):
        solve_cauchy_dirichlet(prob, h=1 / 8)
    bad_f = Problem(0.0, make_operator("laplacian"),
                    lambda x, t: np.where(t > 0.1, np.nan, 0.0), lambda x, t: 0.0)
    with pytest.raises(SolverDivergence, match="non-finite"):
        solve_cauchy_dirichlet(bad_f, h=1 / 8)


def test_exact_discrete_scaling():
    gamma = 0.5
    g = lambda x, t: x[..., -1] * (1 + x[..., 0]) + t
    r = 0.5
    g_r = lambda x, t: g(x / r, t / r ** (2 - gamma))
    big = Problem(gamma, make_operator("pucci+", (1, 2)), lambda x, t: 0.0, g)
    small = Problem(gamma, make_operator("pucci+", (1, 2)), lambda x, t: 0.0, g_r, radius=r,
                    horizon=r ** (2 - gamma))
    gb = HalfCylinderGrid(2, 1 / 32, radius=1.0, horizon=1.0, dt=1 / 128, gamma=gamma)
    gs = HalfCylinderGrid(2, r / 32, radius=r, horizon=r ** (2 - gamma),
                          dt=r ** (2 - gamma) / 128, gamma=gamma)
    ub = solve_cauchy_dirichlet(big, gb)
    us = solve_cauchy_dirichlet(small, gs)
    assert ub.substeps == us.substeps
    assert np.allclose(us.field.values, ub.field.values, rtol=0, atol=1e-12)


def test_remark14_error_decreases():
    u, f, gfun = exact_solution("remark14", 0.5)
    prob = Problem(0.5, make_operator("laplacian"), f, gfun, exact=u)
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        est = CauchyDirichletSolver(h=h).fit(prob)
        errs.append(-est.score(prob))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 5e-3
    assert np.log2(errs[1] / errs[2]) > 1


def test_perron_containment_random_data():
    rng = np.random.default_rng(4)
    for gamma in (-1.0, 0.0, 0.5):
        c = rng.normal(size=3)
        prob = Problem(gamma, make_operator("pucci-", (1, 2)),
                       lambda x, t: c[0] * np.cos(3 * x[..., 0]),
                       lambda x, t: c[1] * x[..., -1] + c[2] * np.sin(t))
        grid = prob.grid(1 / 8, 1 / 16)
        field = solve_cauchy_dirichlet(prob, grid).field
        lo, hi = perron_bounds(prob, grid)
        assert np.all(lo.values <= field.values + 1e-12)
        assert np.all(field.values <= hi.values + 1e-12)


def test_perron_bound_is_attained_scale():
    prob = Problem(0.0, make_operator("laplacian"), lambda x, t: 2.0, lambda x, t: -3.0)
    lo, hi = perron_bounds(prob, prob.grid(1 / 4, 1 / 4))
    assert hi.meta["scale"] == 5.0
    assert hi.values[0].max() == 5.0
    assert lo.values[-1].min() == pytest.approx(-5.0 * np.e)


def test_estimator_api():
    est = CauchyDirichletSolver(h=1 / 8, cfl_safety=0.5)
    params = est.get_params()
    assert params["h"] == 1 / 8 and params["cfl_safety"] == 0.5
    twin = clone(est)
    assert twin.get_params() == params
    with pytest.raises(Exception):
        est.predict(np.zeros((1, 2)))
    u, f, gfun = exact_solution("remark14", 0.5)
    prob = Problem(0.5, make_operator("laplacian"), f, gfun, exact=u)
    est.fit(prob)
    pts = np.array([[0.0, 0.5], [0.25, 0.25]])
    pred = est.predict(pts)
    assert pred.shape == (2,)
    assert np.allclose(pred, u(pts, est.grid_.times[-1]), atol=2e-2)
    with pytest.raises(TypeError):
        est.fit("not a problem")


def test_coefficient_cap_lowers_substeps():
    prob = zero_problem(-1.0)
    grid = prob.grid(1 / 16, 1 / 64)
    plain = solve_cauchy_dirichlet(prob, grid)
    capped = solve_cauchy_dirichlet(prob, grid, SchemeConfig(coefficient_cap=4.0))
    assert capped.substeps < plain.substeps
