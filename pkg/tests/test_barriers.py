import json

import numpy as np
import pytest

from degparabolic.barriers import (BARRIER_CATALOG, SOLUTION_CATALOG, HopfDegenerateBarrier,
                                   HopfSingularBarrier, LipschitzBarrier, certify_hopf_degenerate,
                                   certify_hopf_singular, certify_lipschitz, exact_solution,
                                   hopf_barrier_degenerate, hopf_barrier_singular,
                                   hopf_singular_threshold, lipschitz_barrier, lipschitz_threshold,
                                   sample_hopf_degenerate_domain, sample_upper_cylinder,
                                   subsolution_inequality, supersolution_inequality,
                                   verify_certificate)
from degparabolic.operators import pucci_minus, pucci_plus

E12 = (1.0, 2.0)


def _points(rng, count=40, n=2, lo=0.2):
    x = np.column_stack([rng.uniform(-0.6, 0.6, (count, n - 1)), rng.uniform(lo, 0.9, count)])
    t = rng.uniform(-0.2, -0.02, count)
    return x, t


FIELDS = [
    ("lipschitz", lambda: LipschitzBarrier(2.5, 8.0, 0.5)),
    ("lipschitz-singular", lambda: LipschitzBarrier(1.01, 8.0, -1.0)),
    ("hopf-singular", lambda: HopfSingularBarrier(12.0, -1.0)),
    ("hopf-degenerate-w", lambda: HopfDegenerateBarrier(6.0, 0.01, 0.5)),
    ("hopf-degenerate-xi", lambda: HopfDegenerateBarrier(6.0, 0.01, 0.5, part="xi")),
    ("hopf-degenerate-psi", lambda: HopfDegenerateBarrier(6.0, 0.01, 0.5, part="psi")),
    ("remark12", lambda: exact_solution("remark12", 0.5, eps=0.5)[0]),
    ("remark14", lambda: exact_solution("remark14", 0.5, linear=[0.3, -0.2], offset=1.0)[0]),
    ("heat", lambda: exact_solution("heat_sines", 0.0)[0]),
    ("lipschitz-3d", lambda: LipschitzBarrier(2.5, 8.0, 0.5, n=3)),
]


@pytest.mark.parametrize("name,make", FIELDS, ids=[f[0] for f in FIELDS])
def test_closed_form_derivatives_against_differences(name, make):
    fld = make()
    rng = np.random.default_rng(0)
    x, t = _points(rng, n=fld.n)
    coarse = fld.finite_difference_errors(x, t, 1e-2)
    fine = fld.finite_difference_errors(x, t, 5e-3)
    for c, f in zip(coarse, fine):
        # second-order differences: halving h divides the error by about 4
        assert f < 1e-8 or c / f > 3.0, (name, coarse, fine)


@pytest.mark.parametrize("name,make", FIELDS, ids=[f[0] for f in FIELDS])
def test_normalized_derivatives_rescale(name, make):
    fld = make()
    x, t = _points(np.random.default_rng(1), n=fld.n)
    raw = fld.derivatives(x, t)
    norm = fld.derivatives(x, t, normalized=True)
    s = raw.value / norm.value
    assert np.all(s > 0)
    assert np.allclose(norm.hess * s[:, None, None], raw.hess, rtol=1e-12, atol=1e-300)
    assert np.allclose(fld(x, t), raw.value, rtol=1e-13)


@pytest.mark.parametrize("kind,gamma,params", [("remark12", 0.5, {"eps": 0.5}),
                                               ("remark12", 0.7, {"eps": 0.3}),
                                               ("remark14", 0.5, {"linear": [1.0, 2.0]}),
                                               ("remark14", 0.25, {}),
                                               ("heat_sines", 0.0, {})])
def test_exact_solutions_solve_the_equation(kind, gamma, params):
    u, f, g = exact_solution(kind, gamma, **params)
    x, t = _points(np.random.default_rng(2))
    d = u.derivatives(x, t)
    lhs = d.dt - x[:, -1] ** gamma * np.trace(d.hess, axis1=-2, axis2=-1)
    assert np.allclose(lhs, f(x, t), rtol=1e-12, atol=1e-12)
    # independent check through difference quotients of the values only
    h = 1e-3
    ut = (u(x, t + h) - u(x, t - h)) / (2 * h)
    lap = sum((u(x + h * e, t) - 2 * u(x, t) + u(x - h * e, t)) / h**2 for e in np.eye(2))
    assert np.allclose(ut - x[:, -1] ** gamma * lap, f(x, t), atol=1e-4 * (1 + np.abs(ut).max()))
    assert np.array_equal(g(x, t), u(x, t))


def test_exact_solution_validation():
    with pytest.raises(ValueError, match="eps"):
        exact_solution("remark12", 0.5, eps=0.6)
    with pytest.raises(ValueError):
        exact_solution("remark14", -0.5)
    with pytest.raises(ValueError):
        exact_solution("heat_sines", 0.5)
    with pytest.raises(ValueError, match="unknown"):
        exact_solution("nope", 0.5)
    assert set(SOLUTION_CATALOG) == {"remark12", "remark14", "heat_sines"}
    assert set(BARRIER_CATALOG) == {"lipschitz", "hopf-singular", "hopf-degenerate"}


def test_threshold_guards():
    assert lipschitz_threshold(2, E12) == 2.0
    assert lipschitz_threshold(4, (1, 3)) == 8.0
    with pytest.raises(ValueError, match="must exceed"):
        lipschitz_barrier(1.0, 2.0, 0.5, ellipticity=E12)
    assert lipschitz_barrier(1.0, 1.0, 0.5, ellipticity=E12, strict=False).beta == 1.0
    with pytest.raises(ValueError):
        lipschitz_barrier(0.0, 4.0, 0.5)
    thr = hopf_singular_threshold(2, E12, -1.0)
    assert thr == pytest.approx(4 * (16 + 8))
    with pytest.raises(ValueError):
        hopf_barrier_singular(thr, -1.0, ellipticity=E12)
    with pytest.raises(ValueError, match="gamma < 0"):
        hopf_barrier_singular(1e3, 0.5)
    with pytest.raises(ValueError, match="delta"):
        hopf_barrier_degenerate(1e3, 0.05, 0.5, ellipticity=E12)
    with pytest.raises(ValueError):
        hopf_barrier_degenerate(1e3, 0.01, -0.5)


def test_singular_threshold_is_the_root():
    lam, Lam, n, g = 1.0, 2.0, 2, -1.0
    b = hopf_singular_threshold(n, (lam, Lam), g)
    assert 4 ** (1 - g) * b - lam * b * b / 4 + 2 * n * Lam * b == pytest.approx(0, abs=1e-9)


def test_lipschitz_barrier_interior_margin_closed_form():
    # v_t = 0, so the margin is -x_n^gamma M+(D^2 v); check it against a direct eigenvalue sum
    v = LipschitzBarrier(2.67, 8.0, 0.5)
    x, t = sample_upper_cylinder(2, 0.5, m=16, sobol_log2=6)
    d = v.derivatives(x, t)
    eig = np.linalg.eigvalsh(d.hess)
    direct = -x[:, -1] ** 0.5 * np.where(eig > 0, 2.0 * eig, 1.0 * eig).sum(-1)
    rep = verify_certificate(v, supersolution_inequality(0.5, E12, 2.0), (x, t))
    assert rep.min_margin == pytest.approx(direct.min() - 2.0, rel=1e-10)
    assert np.allclose(-x[:, -1] ** 0.5 * pucci_plus(d.hess, E12), direct)


def test_lipschitz_certificate_passes_above_threshold():
    for gamma in (0.5, -1.0):
        rep = certify_lipschitz(gamma=gamma)
        assert rep.passed, rep.extra["checks"]
        assert rep.label == "numerical evidence"
        assert rep.params["beta"] == 8.0
        assert all(c["passed"] for c in rep.extra["checks"])


def test_lipschitz_negative_control_fails_at_the_pole():
    rep = certify_lipschitz(gamma=0.5, beta=1.0, strict=False)
    assert not rep.passed
    lat = [c for c in rep.extra["checks"] if c["name"] == "lateral"][0]
    assert not lat["passed"]
    assert lat["worst_point"] == pytest.approx([0.0, 1.0])


def test_singular_hopf_certificate():
    rep = certify_hopf_singular(gamma=-1.0)
    assert rep.passed
    bad = certify_hopf_singular(gamma=-1.0, beta=10.0, strict=False)
    assert not bad.passed


def test_singular_hopf_normalized_v_boundary_values():
    phi = HopfSingularBarrier(120.0, -1.0)
    c = np.array([0.0, 0.5])
    assert phi.normalized_v(c + [0.0, 0.25], 0.0) == pytest.approx(1.0)
    outer = np.sqrt(0.25 + 16 * -0.01)
    assert phi.normalized_v(c + [outer, 0.0], -0.01) == pytest.approx(0.0, abs=1e-12)


def test_degenerate_xi_part_meets_its_bound():
    rep = certify_hopf_degenerate(beta=300.0, strict=False)
    xi = [c for c in rep.extra["checks"] if c["name"] == "xi bound"][0]
    assert xi["passed"]


def test_degenerate_combined_failure_sits_next_to_the_outer_boundary():
    # the combined inequality is violated only where |psi| is comparable to xi,
    # i.e. in a thin layer at the moving outer boundary
    w = HopfDegenerateBarrier(300.0, 0.01, 0.5)
    x, t = sample_hopf_degenerate_domain(2, 0.5)
    d = w.derivatives(x, t, normalized=True)
    expr = subsolution_inequality(0.5, E12).expression(d, x, t)
    fail = expr > 0
    ratio = np.exp(w.psi_exponent(x, t) - w.xi_exponent(x, t))
    assert 0 < fail.mean() < 0.05
    assert ratio[fail].min() > 0.1


def test_degenerate_psi_matches_definition():
    w = HopfDegenerateBarrier(5.0, 0.01, 0.5, part="psi")
    x, t = _points(np.random.default_rng(3))
    expected = -np.exp(-5.0 * (16 ** 0.75 - 0.01) * t * x[:, -1])
    assert np.allclose(w(x, t), expected, rtol=1e-12)


def test_subsolution_expression_is_sup_over_coefficients():
    # for diagonal Hessians the sup over a in [lam, Lam] of -sum a_i d_i is -M-(D)
    rng = np.random.default_rng(4)
    D = rng.uniform(-3, 3, (50, 2))
    hess = np.stack([np.diag(d) for d in D])
    grid = np.linspace(1, 2, 501)
    brute = np.array([sum((-grid * di).max() for di in d) for d in D])
    assert np.allclose(-pucci_minus(hess, E12), brute, atol=1e-12)


def test_report_serialization_round_trip():
    rep = certify_hopf_singular(gamma=-1.0, beta=200.0)
    back = json.loads(rep.to_json())
    assert back["passed"] == rep.passed
    assert back["params"]["beta"] == 200.0
    assert back["label"] == "numerical evidence"


def test_empty_samples_rejected():
    with pytest.raises(ValueError, match="empty"):
        verify_certificate(HopfSingularBarrier(100.0, -1.0), subsolution_inequality(-1, E12),
                           (np.zeros((0, 2)), np.zeros(0)))
