"""End-to-end pipelines and property suites producing SuiteReports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import barriers
from ..geometry import SampledField
from ..operators import Problem
from ..regularity import (SCHEMA_VERSION, check_hopf_bound, check_lipschitz_bound,
                          dyadic_fits)
from ..solver import (MonotonicityError, SchemeConfig, perron_bounds,
                      solve_cauchy_dirichlet)
from .catalog import build_problem
from .config import ExperimentConfig

__all__ = [
    "CheckResult",
    "SuiteReport",
    "StageError",
    "run_experiment",
    "comparison_suite",
    "convergence_study",
    "certificate_suite",
    "jsonable",
]


class StageError(RuntimeError):
    """An error raised inside one pipeline stage, tagged with the stage name."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage
        self.original = exc


def jsonable(obj):
    """Recursively convert to JSON-safe values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    mandatory: bool = True
    runtime: float = 0.0
    message: str = ""

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        opt = "" if self.mandatory else " (informational)"
        return f"[{tag}] {self.name}{opt}: {self.message}"


@dataclass
class SuiteReport:
    name: str
    checks: List[CheckResult] = field(default_factory=list)
    artifacts: Dict[str, object] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.mandatory)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def extend(self, other: "SuiteReport"):
        self.checks.extend(other.checks)
        self.artifacts.update(other.artifacts)

    def summary(self) -> dict:
        """Deterministic summary (no wall-clock values)."""
        return jsonable({
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "passed": self.passed,
            "checks": [{"name": c.name, "status": c.status, "mandatory": c.mandatory,
                        "measured": c.measured, "tolerance": c.tolerance,
                        "message": c.message} for c in self.checks],
        })

    def timing(self) -> dict:
        return {"schema_version": SCHEMA_VERSION,
                "runtime_seconds": {c.name: c.runtime for c in self.checks}}

    def checks_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "status", "mandatory", "measured", "tolerance"])
        for c in self.checks:
            w.writerow([c.name, c.status, int(c.mandatory),
                        json.dumps(jsonable(c.measured), sort_keys=True),
                        json.dumps(jsonable(c.tolerance), sort_keys=True)])
        return buf.getvalue()

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        (out / "timing.json").write_text(json.dumps(self.timing(), indent=2, sort_keys=True))
        (out / "checks.csv").write_text(self.checks_csv())
        for name, text in self.artifacts.items():
            (out / name).write_text(text if isinstance(text, str) else
                                    json.dumps(jsonable(text), indent=2, sort_keys=True))
        return out


def _timed(func, *args, **kw):
    start = time.perf_counter()
    out = func(*args, **kw)
    return out, time.perf_counter() - start


# ------------------------------------------------------------- solve stage

def perron_containment(field: SampledField, prob: Problem) -> CheckResult:
    lower, upper = perron_bounds(prob, field.grid)
    scale = upper.meta["scale"]
    tol = 1e-12 * max(1.0, scale)
    below = int(np.count_nonzero(field.values < lower.values - tol))
    above = int(np.count_nonzero(field.values > upper.values + tol))
    return CheckResult("perron containment", below + above == 0,
                       {"nodes_below": below, "nodes_above": above, "envelope_scale": scale,
                        "nodes": int(field.values.size)},
                       {"absolute": tol},
                       message=f"{below + above} of {field.values.size} nodes outside "
                               f"+/-{scale:.4g} e^t")


def boundary_match(field: SampledField, prob: Problem) -> CheckResult:
    grid = field.grid
    bad = 0
    g0 = prob.boundary_values(grid.coords, grid.times[0])
    bad += int(np.count_nonzero(field.values[0] != g0))
    xb = grid.coords[grid.boundary]
    for k in range(1, grid.n_steps + 1):
        bad += int(np.count_nonzero(field.values[k][grid.boundary]
                                    != prob.boundary_values(xb, grid.times[k])))
    return CheckResult("boundary data match", bad == 0, {"mismatched_nodes": bad},
                       {"exact": True}, message=f"{bad} parabolic-boundary nodes differ from g")


def _final_slice_csv(field: SampledField, exact=None) -> str:
    grid = field.grid
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = [f"x{i + 1}" for i in range(grid.n)] + ["t", "u"] + (["exact"] if exact else [])
    w.writerow(cols)
    x = grid.coords.reshape(-1, grid.n)
    u = field.final.reshape(-1)
    ex = None
    if exact is not None:
        ex = np.broadcast_to(exact(grid.coords, grid.times[-1]), grid.spatial_shape).reshape(-1)
    t = repr(float(grid.times[-1]))
    for i in range(len(u)):
        row = [repr(float(v)) for v in x[i]] + [t, repr(float(u[i]))]
        if ex is not None:
            row.append(repr(float(ex[i])))
        w.writerow(row)
    return buf.getvalue()


def _solve_checks(prob, grid, scheme, report, max_error=None):
    res, dt = _timed(solve_cauchy_dirichlet, prob, grid, scheme)
    fld = res.field
    c = report.add(perron_containment(fld, prob))
    c.runtime = dt
    report.add(boundary_match(fld, prob))
    if prob.exact is not None:
        ref = SampledField.from_function(grid, prob.exact)
        err = float(np.max(np.abs(fld.values - ref.values)))
        ok = True if max_error is None else err <= max_error
        report.add(CheckResult("exact-solution error", ok,
                               {"max_error": err, "h": grid.h, "dt": res.dt,
                                "substeps": res.substeps},
                               {} if max_error is None else {"max_error": max_error},
                               mandatory=max_error is not None,
                               message=f"max nodewise error {err:.3e} at h={grid.h:g}"))
    return res


# --------------------------------------------------------------- fit stage

def _fit_checks(field, fit_req, reductions, report, label="solution", operator=None):
    order = int(fit_req["order"])
    levels = fit_req.get("levels", [1, 2, 3, 4, 5])
    rep = dyadic_fits(field, order, levels, subtract=reductions.get(order),
                      min_nodes=int(fit_req.get("min_nodes", 4)),
                      method=fit_req.get("method", "lp"), operator=operator)
    band = fit_req.get("alpha_band")
    min_r2 = fit_req.get("min_r2")
    est = rep.estimate
    measured = {"alpha": None if est is None else est.alpha,
                "alpha_raw": None if est is None else est.alpha_raw,
                "r2": None if est is None else est.r2,
                "exact_polynomial": bool(est is not None and est.exact_polynomial),
                "residuals": rep.residuals, "radii": rep.radii, "h": field.grid.h}
    ok = est is not None
    if ok and band is not None:
        ok = band[0] <= est.alpha_raw <= band[1]
    if ok and min_r2 is not None:
        ok = est.r2 >= min_r2
    if est is None:
        msg = "; ".join(rep.notes)
    elif est.exact_polynomial:
        msg = "zero residual at every level: exact polynomial profile"
    else:
        msg = f"alpha_hat={est.alpha_raw:.4f}, R^2={est.r2:.5f}"
    tol = {}
    if band is not None:
        tol["alpha_band"] = band
    if min_r2 is not None:
        tol["min_r2"] = min_r2
    report.add(CheckResult(f"order-{order} boundary fit ({label})", ok, measured, tol,
                           message=msg))
    report.artifacts[f"fit_order{order}_{label}.csv"] = rep.to_csv()
    report.artifacts[f"fit_order{order}_{label}.json"] = rep.summary()
    return rep


def _bound_checks(field, prob, kinds, report):
    grid = field.grid
    if "lipschitz" in kinds:
        f_norm = max(float(np.max(np.abs(prob.forcing_values(grid.coords[grid.interior], t))))
                     for t in grid.times)
        C, ok = check_lipschitz_bound(field, f_norm=f_norm)
        report.add(CheckResult("lipschitz bound", ok, {"C": C, "h": grid.h, "f_norm": f_norm},
                               {"finite": True}, message=f"empirical C={C:.4f}"))
    if "hopf" in kinds:
        hc = check_hopf_bound(field)
        report.add(CheckResult("hopf bound", hc.passed,
                               {"C": hc.constant, "probe_value": hc.probe_value,
                                "probe": hc.probe, "h": grid.h},
                               {"positive": True},
                               message=f"empirical C={hc.constant:.4f}" + (
                                   f" ({hc.flag})" if hc.flag else "")))


# ----------------------------------------------------------------- suites

def convergence_study(prob: Problem, resolutions: Sequence[float],
                      scheme: SchemeConfig = SchemeConfig(), time_spacing=None):
    """Rows ``(h, max error, observed order)`` against ``prob.exact``.

    The observed order between consecutive rows is
    ``log(e_prev / e) / log(h_prev / h)``.
    """
    if prob.exact is None:
        raise ValueError("convergence study needs a problem with an exact solution")
    if len(resolutions) < 3:
        raise ValueError("need at least 3 resolutions")
    rows = []
    for h in sorted(resolutions, reverse=True):
        grid = prob.grid(h, time_spacing)
        res, dt = _timed(solve_cauchy_dirichlet, prob, grid, scheme)
        ref = SampledField.from_function(grid, prob.exact)
        err = float(np.max(np.abs(res.field.values - ref.values)))
        order = None
        if rows:
            hp, ep = rows[-1]["h"], rows[-1]["error"]
            order = (math.log(ep / err) / math.log(hp / h)) if err > 0 and ep > 0 else math.inf
        rows.append({"h": h, "error": err, "order": order, "dt": res.dt, "runtime": dt})
    return rows


def _convergence_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "max_error", "observed_order", "dt"])
    for r in rows:
        w.writerow([repr(r["h"]), repr(r["error"]), "" if r["order"] is None else repr(r["order"]),
                    repr(r["dt"])])
    return buf.getvalue()


def _convergence_checks(prob, spec, scheme, time_spacing, report):
    rows = convergence_study(prob, spec["resolutions"], scheme, time_spacing)
    orders = [r["order"] for r in rows[1:]]
    min_order = spec.get("min_order")
    max_error = spec.get("max_error")
    finest = rows[-1]["error"]
    ok = all(b["error"] <= a["error"] for a, b in zip(rows, rows[1:])) or finest < 1e-12
    if min_order is not None and finest >= 1e-12:
        ok = ok and min(orders) >= min_order
    if max_error is not None:
        ok = ok and finest <= max_error
    report.add(CheckResult("convergence", ok,
                           {"h": [r["h"] for r in rows], "errors": [r["error"] for r in rows],
                            "orders": orders},
                           {k: v for k, v in (("min_order", min_order),
                                              ("max_error", max_error)) if v is not None},
                           runtime=sum(r["runtime"] for r in rows),
                           message="errors " + ", ".join(f"{r['error']:.2e}" for r in rows)
                                   + "; orders " + ", ".join(f"{o:.2f}" for o in orders)))
    report.artifacts["convergence.csv"] = _convergence_csv(rows)
    return rows


def _rng(seed: int, *stream) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


def _random_smooth(rng, n, count, amplitude, nonnegative):
    centers = np.column_stack([rng.uniform(-1, 1, (count, n - 1)), rng.uniform(0, 1, count)])
    widths = rng.uniform(0.15, 0.5, count)
    amps = amplitude * (rng.uniform(0, 1, count) if nonnegative else rng.uniform(-1, 1, count))
    rates = rng.uniform(-1, 1, count)

    def func(x, t):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, w, a, s in zip(centers, widths, amps, rates):
            out = out + a * np.exp(-np.sum((x - c) ** 2, axis=-1) / w**2) * np.exp(s * t)
        return out

    return func


def comparison_suite(base: Problem, trials: int = 20, seed: int = 0, h: float = 1 / 16,
                     bump: float = 0.5, scheme: SchemeConfig = SchemeConfig(),
                     time_spacing=None, label: str = "") -> SuiteReport:
    """Ordered boundary-data pairs ``(g, g + bump)``: count ordering violations.

    Each trial perturbs ``base.boundary`` by a random smooth signed field and
    adds a random nonnegative bump for the second solve. Node differences
    below ``8 eps max(1, |u|)`` are treated as rounding, not violations.
    Envelope containment is checked for every solve.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    label = label or f"gamma={base.gamma.value:g}"
    report = SuiteReport(f"comparison {label}")
    grid = base.grid(h, time_spacing)
    violations = 0
    outside = 0
    worst = 0.0
    spread = 0.0
    start = time.perf_counter()
    stream = int(round((base.gamma.value + 8) * 1000))
    for k in range(trials):
        rng = _rng(seed, stream, k)
        shift = _random_smooth(rng, base.n, 3, 1.0, nonnegative=False)
        add = _random_smooth(rng, base.n, 3, bump, nonnegative=True)
        g1 = lambda x, t, s=shift: base.boundary_values(x, t) + s(x, t)
        g2 = lambda x, t, s=shift, a=add: base.boundary_values(x, t) + s(x, t) + a(x, t)
        p1 = Problem(base.gamma, base.op, base.forcing, g1, base.n, base.radius, base.horizon)
        p2 = Problem(base.gamma, base.op, base.forcing, g2, base.n, base.radius, base.horizon)
        u1 = solve_cauchy_dirichlet(p1, grid, scheme).field
        u2 = solve_cauchy_dirichlet(p2, grid, scheme).field
        tol = 8 * np.finfo(float).eps * max(1.0, u1.sup_norm(), u2.sup_norm())
        diff = u1.values - u2.values
        violations += int(np.count_nonzero(diff > tol))
        worst = max(worst, float(diff.max()))
        spread = min(spread, float(diff.min()))
        for fld, p in ((u1, p1), (u2, p2)):
            pc = perron_containment(fld, p)
            outside += pc.measured["nodes_below"] + pc.measured["nodes_above"]
    runtime = time.perf_counter() - start
    report.add(CheckResult(f"comparison ordering ({label})", violations == 0,
                           {"trials": trials, "violations": violations,
                            "max_u1_minus_u2": worst, "min_u1_minus_u2": spread, "h": h},
                           {"violations": 0}, runtime=runtime,
                           message=f"{violations} violations over {trials} trials"))
    report.add(CheckResult(f"perron containment ({label})", outside == 0,
                           {"nodes_outside": outside, "solves": 2 * trials},
                           {"nodes_outside": 0},
                           message=f"{outside} nodes outside the envelopes in {2 * trials} solves"))
    # identical data must give identical fields
    same = solve_cauchy_dirichlet(base, grid, scheme).field
    again = solve_cauchy_dirichlet(base, grid, scheme).field
    report.add(CheckResult(f"identical data ({label})",
                           bool(np.array_equal(same.values, again.values)),
                           {}, {"exact": True}, message="repeat solve is bit-identical"))
    return report


def monotonicity_guard(base: Problem, h: float = 1 / 16, safety: float = 4.0) -> CheckResult:
    """Negative control: a time step beyond the monotone bound must be refused."""
    try:
        scheme = SchemeConfig(cfl_safety=safety)
        solve_cauchy_dirichlet(base, base.grid(h), scheme)
    except MonotonicityError as exc:
        return CheckResult("non-monotone step rejected", True, {"cfl_safety": safety},
                           {"expect": "MonotonicityError"}, message=str(exc))
    return CheckResult("non-monotone step rejected", False, {"cfl_safety": safety},
                       {"expect": "MonotonicityError"}, message="scheme accepted an unsafe step")


def certificate_suite(specs: Sequence[dict]) -> SuiteReport:
    """Run barrier certificates; each spec may set ``expect='fail'`` for negative controls."""
    report = SuiteReport("certificates")
    reports = []
    for spec in specs:
        kind = spec["kind"]
        kw = {"n": int(spec.get("n", 2)), "ellipticity": spec.get("ellipticity", [1.0, 2.0]),
              "gamma": spec.get("gamma")}
        if kw["gamma"] is None:
            kw.pop("gamma")
        expect = spec.get("expect", "pass")
        strict = expect == "pass"
        if kind == "lipschitz":
            func = barriers.certify_lipschitz
            kw.update(beta=spec.get("beta"), M=spec.get("M"), strict=strict)
        elif kind == "hopf-singular":
            func = barriers.certify_hopf_singular
            kw.update(beta=spec.get("beta"), strict=strict)
        elif kind == "hopf-degenerate":
            func = barriers.certify_hopf_degenerate
            kw.update(beta=spec.get("beta"), delta=spec.get("delta"), strict=strict)
        else:
            raise ValueError(f"unknown certificate {kind!r}")
        rep, dt = _timed(func, **kw)
        reports.append(rep.to_dict())
        ok = rep.passed if expect == "pass" else not rep.passed
        p = rep.params
        name = f"certificate {kind} gamma={p['gamma']:g}" + (
            " (negative control)" if expect == "fail" else "")
        report.add(CheckResult(name, ok,
                               {"certificate_passed": rep.passed, "min_margin": rep.min_margin,
                                "worst_point": rep.worst_point, "worst_time": rep.worst_time,
                                "params": p, "n_samples": rep.n_samples},
                               {"expect": expect}, runtime=dt,
                               message=f"certificate {'passed' if rep.passed else 'failed'} "
                                       f"(min margin {rep.min_margin:.4g}, params "
                                       + ", ".join(f"{k}={v:.6g}" for k, v in p.items()
                                                   if isinstance(v, float)) + ")"))
    report.artifacts["certificates.json"] = {"schema_version": SCHEMA_VERSION,
                                             "label": "numerical evidence",
                                             "reports": reports}
    return report


# -------------------------------------------------------------- pipelines

STAGES = ("solve", "fit", "bounds", "converge", "compare", "certify")


def default_stages(cfg: ExperimentConfig):
    a = cfg.analyses
    stages = []
    if a.fits or a.bounds or a.max_error is not None:
        stages.append("solve")
    if a.fits:
        stages.append("fit")
    if a.bounds:
        stages.append("bounds")
    if a.convergence:
        stages.append("converge")
    if a.comparison:
        stages.append("compare")
    if a.certificates:
        stages.append("certify")
    return stages or ["solve"]


def run_experiment(cfg: ExperimentConfig, out_dir=None, stages: Optional[Sequence[str]] = None
                   ) -> SuiteReport:
    """Validate ``cfg``, run the requested stages and optionally write artifacts.

    Errors inside a stage are re-raised as :class:`StageError` naming the stage.
    """
    cfg.validate()
    stages = list(default_stages(cfg) if stages is None else stages)
    bad = set(stages) - set(STAGES)
    if bad:
        raise ValueError(f"unknown stages {sorted(bad)}; known: {STAGES}")
    if ("fit" in stages or "bounds" in stages) and "solve" not in stages:
        stages.insert(0, "solve")
    p = cfg.problem
    report = SuiteReport(cfg.name)
    try:
        prob, reductions = build_problem(p.catalog, p.gamma, p.operator, p.ellipticity, p.n,
                                         p.radius, p.horizon, p.params)
        scheme = SchemeConfig(cfg.scheme.cfl_safety, cfg.scheme.dt, cfg.scheme.coefficient_cap)
        grid = prob.grid(cfg.grid.h, cfg.grid.time_spacing)
    except Exception as exc:
        raise StageError("setup", exc) from exc

    def stage(name, func, *args):
        try:
            return func(*args)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    res = None
    if "solve" in stages:
        res = stage("solve", _solve_checks, prob, grid, scheme, report, cfg.analyses.max_error)
        report.artifacts["solution_final.csv"] = _final_slice_csv(res.field, prob.exact)
    if "fit" in stages:
        for req in cfg.analyses.fits:
            if req.get("source", "solution") == "exact":
                if prob.exact is None:
                    raise StageError("fit", ValueError("fit source 'exact' needs an exact solution"))
                fld = stage("fit", SampledField.from_function, grid, prob.exact)
                stage("fit", _fit_checks, fld, req, reductions, report, "exact", prob.op)
            else:
                stage("fit", _fit_checks, res.field, req, reductions, report, "solution", prob.op)
    if "bounds" in stages:
        stage("bounds", _bound_checks, res.field, prob, cfg.analyses.bounds, report)
    if "converge" in stages:
        spec = cfg.analyses.convergence or {"resolutions": [cfg.grid.h * 4, cfg.grid.h * 2,
                                                            cfg.grid.h]}
        stage("converge", _convergence_checks, prob, spec, scheme, cfg.grid.time_spacing, report)
    if "compare" in stages:
        spec = cfg.analyses.comparison or {}
        gammas = spec.get("gammas", [p.gamma])
        for g in gammas:
            base, _ = stage("compare", build_problem, p.catalog, g, p.operator, p.ellipticity,
                            p.n, p.radius, p.horizon, p.params)
            sub = stage("compare", comparison_suite, base, int(spec.get("trials", 20)), cfg.seed,
                        float(spec.get("h", cfg.grid.h)), float(spec.get("bump", 0.5)), scheme)
            report.extend(sub)
        report.add(stage("compare", monotonicity_guard, prob, cfg.grid.h))
    if "certify" in stages:
        report.extend(stage("certify", certificate_suite, cfg.analyses.certificates))
    report.artifacts["config.json"] = cfg.to_json()
    if out_dir is not None:
        report.write(out_dir)
    return report
