"""Acceptance criteria, each run at its stated tolerance.

Every test records one pass/fail line which the terminal summary prints.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from conftest import record
from degparabolic.barriers import (certify_hopf_degenerate, certify_hopf_singular,
                                   certify_lipschitz)
from degparabolic.harness import build_problem, presets, run_experiment
from degparabolic.operators import EllipticityPair, eval_operator, make_operator, pucci_minus, pucci_plus
from degparabolic.regularity import check_hopf_bound, check_lipschitz_bound, estimate_exponent
from degparabolic.solver import perron_bounds, solve_cauchy_dirichlet

E12 = EllipticityPair(1.0, 2.0)


def check(report, name):
    matches = [c for c in report.checks if c.name == name]
    assert matches, f"no check named {name!r}"
    return matches[0]


@pytest.fixture(scope="module")
def remark14_run():
    start = time.perf_counter()
    rep = run_experiment(presets()["remark14-gamma05"], stages=["solve", "fit", "converge"])
    return rep, time.perf_counter() - start


@pytest.fixture(scope="module")
def positive_forcing_runs():
    prob, _ = build_problem("positive-forcing", 0.5)
    out = {}
    for h in (1 / 32, 1 / 64):
        grid = prob.grid(h)
        out[h] = (solve_cauchy_dirichlet(prob, grid).field, prob)
    return out


def test_criterion_1_exact_solution_reproduction(remark14_run):
    rep, _ = remark14_run
    err = check(rep, "exact-solution error")
    conv = check(rep, "convergence")
    containment = check(rep, "perron containment")
    solve_time = check(rep, "perron containment").runtime
    orders = conv.measured["orders"]
    ok = (err.measured["max_error"] <= 5e-3 and min(orders) >= 1.0 and conv.passed
          and containment.passed and solve_time <= 120)
    record(1, ok, f"max error {err.measured['max_error']:.3e} (<= 5e-3) at h=1/64, "
                  f"orders {', '.join(f'{o:.2f}' for o in orders)} (>= 1.0), "
                  f"solve {solve_time:.1f}s (<= 120s), envelope containment {containment.passed}")
    assert ok


def test_criterion_2_sharp_first_order_exponent():
    rep = run_experiment(presets()["remark12-gamma05"], stages=["solve", "fit"])
    fit = check(rep, "order-1 boundary fit (solution)")
    containment = check(rep, "perron containment")
    a, r2 = fit.measured["alpha_raw"], fit.measured["r2"]
    ok = a is not None and 0.45 <= a <= 0.55 and r2 >= 0.98 and containment.passed
    record(2, ok, f"alpha_hat={a:.4f} in [0.45, 0.55], R^2={r2:.5f} (>= 0.98), "
                  f"h={fit.measured['h']:g}, envelope containment {containment.passed}")
    assert ok


def test_criterion_3_sharp_second_order_exponent(remark14_run):
    rep, _ = remark14_run
    exact = check(rep, "order-2 boundary fit (exact)")
    solved = check(rep, "order-2 boundary fit (solution)")
    ae, asol = exact.measured["alpha_raw"], solved.measured["alpha_raw"]
    ok = 0.48 <= ae <= 0.52 and 0.40 <= asol <= 0.60
    record(3, ok, f"analytic alpha_hat={ae:.4f} in [0.48, 0.52], "
                  f"solved alpha_hat={asol:.4f} in [0.40, 0.60]")
    assert ok


def test_criterion_4_discrete_comparison():
    cfg = presets()["comparison"]
    rep = run_experiment(cfg, stages=["compare"])
    ordering = [c for c in rep.checks if c.name.startswith("comparison ordering")]
    containment = [c for c in rep.checks if c.name.startswith("perron containment")]
    violations = sum(c.measured["violations"] for c in ordering)
    trials = {c.name: c.measured["trials"] for c in ordering}
    outside = sum(c.measured["nodes_outside"] for c in containment)
    guard = check(rep, "non-monotone step rejected")
    ok = (len(ordering) == 3 and all(t == 20 for t in trials.values()) and violations == 0
          and outside == 0 and guard.passed)
    record(4, ok, f"{violations} ordering violations over 3 x 20 trials at gamma in "
                  f"{{-1, 0, 0.5}}, {outside} nodes outside the envelopes, "
                  f"unsafe step rejected {guard.passed}")
    assert ok


def test_criterion_5a_lipschitz_certificates():
    reps = {g: certify_lipschitz(2, E12, g) for g in (0.5, -1.0)}
    ok = all(r.passed for r in reps.values())
    interior = {g: r.extra["checks"][0]["min_margin"] + 2.0 for g, r in reps.items()}
    record("5a", ok, "Lipschitz barrier, (n, lam, Lam) = (2, 1, 2): " + "; ".join(
        f"gamma={g:g} beta={r.params['beta']:g} M={r.params['M']:g} interior min {interior[g]:.4g}"
        f" (>= 2) {'pass' if r.passed else 'fail'}" for g, r in reps.items()))
    assert ok


def test_criterion_5b_singular_hopf_certificate():
    rep = certify_hopf_singular(2, E12, -1.0)
    record("5b", rep.passed, f"singular Hopf barrier at gamma=-1, beta={rep.params['beta']:g}: "
                             f"min margin {rep.min_margin:.4g}")
    assert rep.passed


def test_criterion_5c_degenerate_hopf_certificate():
    rep = certify_hopf_degenerate(2, E12, 0.5)
    parts = {c["name"]: c for c in rep.extra["checks"]}
    xi, w = parts["xi bound"], parts["w margin"]
    record("5c", rep.passed,
           f"degenerate Hopf barrier at gamma=0.5, delta={rep.params['delta']:g}, beta searched "
           f"up to {rep.extra['beta_tried'][-1]:g}: xi bound {'pass' if xi['passed'] else 'fail'}, "
           f"combined w margin min {w['min_margin']:.4g} at x={w['worst_point']}, "
           f"t={w['worst_time']:.4g} ({'pass' if w['passed'] else 'fail'})")
    assert rep.passed


def test_criterion_5d_negative_controls():
    controls = {
        "lipschitz beta=1": certify_lipschitz(2, E12, 0.5, beta=1.0, strict=False),
        "singular beta=10": certify_hopf_singular(2, E12, -1.0, beta=10.0, strict=False),
        "degenerate beta=4": certify_hopf_degenerate(2, E12, 0.5, beta=4.0, strict=False),
    }
    ok = not any(r.passed for r in controls.values())
    record("5d", ok, "negative controls " + ", ".join(
        f"{k}: {'fails' if not r.passed else 'PASSES'} (min margin {r.min_margin:.3g})"
        for k, r in controls.items()))
    assert ok


def test_criterion_6_pucci_correctness():
    rng = np.random.default_rng(2024)
    grid = np.linspace(1.0, 2.0, 1000)
    worst_oracle = 0.0
    for _ in range(100):
        d = rng.uniform(-5, 5, 2)
        plus = sum(max(grid * di) for di in d)
        minus = sum(min(grid * di) for di in d)
        D = np.diag(d)
        worst_oracle = max(worst_oracle, abs(pucci_plus(D, E12) - plus),
                           abs(pucci_minus(D, E12) - minus))
    A = rng.normal(scale=3, size=(1000, 2, 2))
    M = (A + A.transpose(0, 2, 1)) / 2
    B = rng.normal(scale=3, size=(1000, 2, 2))
    N = (B + B.transpose(0, 2, 1)) / 2
    c = rng.uniform(0, 10, 1000)
    duality = np.max(np.abs(pucci_minus(M, E12) + pucci_plus(-M, E12)))
    homog = np.max(np.abs(pucci_plus(c[:, None, None] * M, E12) - c * pucci_plus(M, E12)))
    sandwich = 0.0
    x = np.column_stack([rng.uniform(-1, 1, 1000), rng.uniform(0, 1, 1000)])
    for key in ("laplacian", "pucci+", "pucci-", "bellman:inf:1,2;2,1@0.3", "perturbed:0.3,0.5"):
        op = make_operator(key, E12, 2)
        diff = eval_operator(op, M, x, 0.0) - eval_operator(op, N, x, 0.0)
        sandwich = max(sandwich, float(np.max(pucci_minus(M - N, E12) - diff)),
                       float(np.max(diff - pucci_plus(M - N, E12))))
    ok = worst_oracle <= 1e-3 and duality <= 1e-12 and homog <= 1e-12 * 10 and sandwich <= 1e-12
    record(6, ok, f"oracle gap {worst_oracle:.2e} (<= 1e-3), duality {duality:.1e}, "
                  f"homogeneity {homog:.1e}, sandwich excess {max(sandwich, 0):.1e} (<= 1e-12)")
    assert ok


def test_criterion_7_estimator_calibration():
    r = 2.0 ** -np.arange(1, 6)
    worst, min_r2 = 0.0, 1.0
    for alpha in (0.1, 0.3, 0.5, 0.9):
        est = estimate_exponent(r, 0.7 * r ** (1 + alpha), 1)
        worst = max(worst, abs(est.alpha_raw - alpha))
        min_r2 = min(min_r2, est.r2)
    ok = worst <= 1e-12 and min_r2 == pytest.approx(1.0, abs=1e-15)
    record(7, ok, f"max |alpha_hat - alpha| = {worst:.1e} (<= 1e-12), min R^2 = {min_r2!r}")
    assert ok


def test_criterion_8_lipschitz_and_hopf_checks(positive_forcing_runs):
    consts, hopf, inside = {}, None, True
    for h, (fld, prob) in positive_forcing_runs.items():
        grid = fld.grid
        f_norm = max(float(np.max(np.abs(prob.forcing_values(grid.coords[grid.interior], t))))
                     for t in grid.times)
        consts[h], _ = check_lipschitz_bound(fld, f_norm=f_norm)
        lo, hi = perron_bounds(prob, grid)
        inside &= bool(np.all(lo.values <= fld.values) and np.all(fld.values <= hi.values))
        if h == 1 / 64:
            hopf = check_hopf_bound(fld)
    c32, c64 = consts[1 / 32], consts[1 / 64]
    change = abs(c64 - c32) / c64
    ok = np.isfinite(c32) and np.isfinite(c64) and change <= 0.10 and hopf.constant > 0 and inside
    record(8, ok, f"Lipschitz C = {c32:.4f} (h=1/32), {c64:.4f} (h=1/64), change "
                  f"{100 * change:.1f}% (<= 10%); Hopf C = {hopf.constant:.4f} (> 0); "
                  f"envelope containment {inside}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
