"""Boundary regularity measurements on sampled fields.

Sup-norm (Chebyshev) fits of ``a x_n`` or ``sum_i a_i x_i x_n`` over dyadic
intrinsic cylinders ``Q_r^+`` centred on the flat face, a log-log exponent
estimator, and Lipschitz / Hopf type bound checks.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import linprog
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .geometry import SampledField, as_gamma, cylinder_nodes
from .operators import OperatorSpec, eval_operator

__all__ = [
    "SCHEMA_VERSION",
    "BoundaryFit",
    "ExponentEstimate",
    "RegularityReport",
    "fit_boundary_linear",
    "fit_boundary_quadratic",
    "estimate_exponent",
    "dyadic_fits",
    "check_lipschitz_bound",
    "check_hopf_bound",
    "BoundaryRegularityEstimator",
]

SCHEMA_VERSION = "1.0"
_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class BoundaryFit:
    order: int
    coefficients: List[float]
    radius: float
    residual: float
    n_nodes: int
    base: list
    base_time: float
    method: str = ""
    converged: bool = True
    operator_defect: Optional[float] = None


def _resolve_base(u: SampledField, base, t0):
    x0 = np.zeros(u.grid.n) if base is None else np.atleast_1d(np.asarray(base, dtype=float))
    if x0.shape != (u.grid.n,):
        raise ValueError(f"base point must have {u.grid.n} coordinates")
    if abs(x0[-1]) > 1e-12:
        raise ValueError("base point must lie on the face x_n = 0")
    return x0, float(u.grid.times[-1] if t0 is None else t0)


class _EmptyCylinder(ValueError):
    pass


def _cylinder_data(u: SampledField, x0, t0, r, closed_ball=True, subtract=None):
    ks, mask = cylinder_nodes(u.grid, (x0, t0), r, u.grid.gamma, closed_ball=closed_ball)
    if ks.size == 0 or not mask.any():
        raise _EmptyCylinder(f"cylinder of radius {r} at {x0.tolist()}, t={t0} contains no "
                         "interior node; refine the grid")
    x = u.grid.coords[mask]
    vals = u.values[ks][:, mask]
    if subtract is not None:
        if callable(subtract):
            p = np.stack([np.broadcast_to(subtract(x, u.grid.times[k]), x.shape[:-1]) for k in ks])
        else:
            p = np.asarray(subtract, dtype=float)[ks][:, mask]
        vals = vals - p
    return x - x0, vals


def _golden_min(func, lo, hi, iters=200):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(iters):
        if b - a <= 1e-15 * max(1.0, abs(a), abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = func(d)
    return (a + b) / 2


def _linear_objective(xn, upper, lower):
    def obj(a):
        return float(max(np.max(upper - a * xn), np.max(a * xn - lower)))
    return obj


def fit_boundary_linear(u: SampledField, base=None, r: float = 0.5, t0=None,
                        subtract=None, closed_ball: bool = True) -> BoundaryFit:
    """Chebyshev-optimal ``a`` minimizing ``sup_{Q_r^+} |u - a x_n|``.

    The objective is convex and piecewise linear in ``a``; it is minimized
    by golden-section search on ``[-10 ||u|| / r, 10 ||u|| / r]``. Values
    are first reduced to the max and min over each ``x_n`` level, which
    leaves the objective unchanged.

    Parameters
    ----------
    u : SampledField
    base : array_like, optional
        Point on the face; default is the origin.
    r : float
        Cylinder radius.
    t0 : float, optional
        Top time of the cylinder; default is the final grid time.
    subtract : callable or array, optional
        Known boundary polynomial removed before fitting.
    """
    x0, t0 = _resolve_base(u, base, t0)
    x, vals = _cylinder_data(u, x0, t0, r, closed_ball, subtract)
    xn = x[:, -1]
    levels, inv = np.unique(np.round(xn / u.grid.h).astype(int), return_inverse=True)
    upper = np.full(levels.size, -np.inf)
    lower = np.full(levels.size, np.inf)
    np.maximum.at(upper, inv, vals.max(axis=0))
    np.minimum.at(lower, inv, vals.min(axis=0))
    xl = levels * u.grid.h
    obj = _linear_objective(xl, upper, lower)
    scale = float(np.max(np.abs(vals)))
    if scale == 0:
        a = 0.0
    else:
        bound = 10 * scale / r
        a = _golden_min(obj, -bound, bound)
    return BoundaryFit(1, [a], r, obj(a), int(np.count_nonzero(xn > 0) * vals.shape[0]),
                       x0.tolist(), t0, "golden-section")


def _chebyshev_lp(A, b):
    # min s  s.t.  -s <= b - A a <= s
    m, p = A.shape
    c = np.zeros(p + 1)
    c[-1] = 1.0
    ones = np.ones((m, 1))
    A_ub = np.vstack([np.hstack([-A, -ones]), np.hstack([A, -ones])])
    b_ub = np.concatenate([-b, b])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * p + [(0, None)],
                  method="highs")
    if not res.success:
        raise RuntimeError(f"Chebyshev LP failed: {res.message}")
    return res.x[:p], res.status == 0


def _coordinate_descent(A, b, bound, max_iter=200, tol=1e-12):
    a = np.zeros(A.shape[1])
    prev = np.inf
    for it in range(max_iter):
        for i in range(A.shape[1]):
            rest = b - A @ a + A[:, i] * a[i]
            col = A[:, i]
            a[i] = _golden_min(lambda c: float(np.max(np.abs(rest - c * col))), -bound, bound)
        cur = float(np.max(np.abs(b - A @ a)))
        if prev - cur <= tol * max(1.0, cur):
            return a, True
        prev = cur
    return a, False


def fit_boundary_quadratic(u: SampledField, base=None, r: float = 0.5, t0=None,
                           subtract=None, closed_ball: bool = True, method: str = "lp",
                           operator: Optional[OperatorSpec] = None,
                           include_linear: bool = False) -> BoundaryFit:
    """Chebyshev-optimal ``P = sum_i a_i x_i x_n`` over ``Q_r^+``.

    With ``include_linear`` a free ``b x_n`` term is appended (reported as
    the last coefficient), so the profile class contains the order-1 one.

    ``method='lp'`` solves the sup-norm problem exactly as a linear program;
    ``method='coordinate'`` cycles 1-D convex golden-section searches over
    the coefficients and flags the fit when the iteration cap is reached.
    When ``operator`` is given, ``|F(D^2 P, base)|`` is reported.
    """
    if method not in ("lp", "coordinate"):
        raise ValueError("method must be 'lp' or 'coordinate'")
    x0, t0 = _resolve_base(u, base, t0)
    x, vals = _cylinder_data(u, x0, t0, r, closed_ball, subtract)
    n = u.grid.n
    feats = x * x[:, -1:]
    if include_linear:
        feats = np.column_stack([feats, x[:, -1]])
    p = feats.shape[1]
    A = np.tile(feats, (vals.shape[0], 1))
    b = vals.reshape(-1)
    scale = float(np.max(np.abs(b)))
    if scale == 0:
        coef, ok = np.zeros(p), True
    elif method == "lp":
        coef, ok = _chebyshev_lp(A, b)
    else:
        coef, ok = _coordinate_descent(A, b, 10 * scale / r**2)
    residual = float(np.max(np.abs(b - A @ coef)))
    defect = None
    if operator is not None:
        H = np.zeros((n, n))
        H[:, -1] += coef[:n]
        H[-1, :] += coef[:n]
        defect = float(abs(eval_operator(operator, H, x0, t0)))
    return BoundaryFit(2, coef.tolist(), r, residual,
                       int(np.count_nonzero(x[:, -1] > 0) * vals.shape[0]), x0.tolist(), t0,
                       method, bool(ok), defect)


@dataclass
class ExponentEstimate:
    alpha: float
    alpha_raw: float
    slope: float
    r2: float
    residual_band: float
    exact_polynomial: bool = False


def estimate_exponent(radii: Sequence[float], residuals: Sequence[float], order: int,
                      clamp: bool = True) -> ExponentEstimate:
    """Least-squares slope of ``log residual`` against ``log r``, minus ``order``.

    All-zero residuals mean the profile is exact: ``alpha = inf`` and the
    ``exact_polynomial`` flag is set. Mixed zero and positive residuals are
    an error.
    """
    r = np.asarray(radii, dtype=float)
    rho = np.asarray(residuals, dtype=float)
    if r.shape != rho.shape or r.ndim != 1:
        raise ValueError("radii and residuals must be 1-D arrays of equal length")
    if r.size < 4:
        raise ValueError(f"need at least 4 resolved levels, got {r.size}")
    if np.any(r <= 0):
        raise ValueError("radii must be positive")
    if np.all(rho == 0):
        return ExponentEstimate(math.inf, math.inf, math.inf, 1.0, 0.0, True)
    if np.any(rho <= 0):
        raise ValueError("residuals must be all positive or all zero")
    lx, ly = np.log(r), np.log(rho)
    X = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(X, ly, rcond=None)
    fitted = X @ np.array([slope, icpt])
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    raw = float(slope) - order
    alpha = min(max(raw, 0.0), 1.0) if clamp else raw
    return ExponentEstimate(alpha, raw, float(slope), r2, float(np.max(np.abs(ly - fitted))))


@dataclass
class RegularityReport:
    order: int
    base: list
    base_time: float
    mesh_width: float
    fits: List[BoundaryFit]
    estimate: Optional[ExponentEstimate]
    drift: List[float]
    resolved: List[bool]
    notes: List[str] = field(default_factory=list)

    @property
    def alpha(self):
        return None if self.estimate is None else self.estimate.alpha

    @property
    def radii(self):
        return [f.radius for f in self.fits]

    @property
    def residuals(self):
        return [f.residual for f in self.fits]

    CSV_COLUMNS = ("level", "radius", "n_nodes", "resolved", "residual", "coefficients",
                   "drift", "converged", "operator_defect")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for k, (f, ok) in enumerate(zip(self.fits, self.resolved)):
            drift = "" if k == 0 else repr(self.drift[k - 1])
            w.writerow([round(-math.log2(f.radius)), repr(f.radius), f.n_nodes, int(ok),
                        repr(f.residual), " ".join(repr(c + 0.0) for c in f.coefficients), drift,
                        int(f.converged), "" if f.operator_defect is None else repr(f.operator_defect)])
        return buf.getvalue()

    def summary(self) -> dict:
        est = None if self.estimate is None else {
            k: (None if isinstance(v, float) and math.isinf(v) else v)
            for k, v in asdict(self.estimate).items()}
        return {"schema_version": SCHEMA_VERSION, "order": self.order, "base": self.base,
                "base_time": self.base_time, "mesh_width": self.mesh_width,
                "radii": self.radii, "residuals": self.residuals, "estimate": est,
                "drift": self.drift, "notes": self.notes}

    def to_json(self, **kw) -> str:
        return json.dumps(self.summary(), **kw)


def dyadic_fits(u: SampledField, order: int = 1, levels: Sequence[int] = range(1, 6),
                base=None, t0=None, subtract=None, min_nodes: int = 4,
                closed_ball: bool = True, method: str = "lp",
                operator: Optional[OperatorSpec] = None) -> RegularityReport:
    """Fits over ``r_k = 2**-k`` and the exponent estimate from resolved levels.

    A level counts as resolved when its cylinder holds at least ``min_nodes``
    nodes with ``x_n > 0``. The exponent is produced only from four or more
    resolved levels.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    fits, resolved, notes = [], [], []
    for k in levels:
        r = 2.0 ** (-k)
        try:
            if order == 1:
                fit = fit_boundary_linear(u, base, r, t0, subtract, closed_ball)
            else:
                fit = fit_boundary_quadratic(u, base, r, t0, subtract, closed_ball, method,
                                             operator)
        except _EmptyCylinder:
            notes.append(f"level {k}: cylinder holds no interior node; finer levels skipped")
            break
        fits.append(fit)
        resolved.append(fit.n_nodes >= min_nodes)
        if not fit.converged:
            notes.append(f"level {k}: coordinate descent hit the iteration cap")
    drift = [float(np.max(np.abs(np.subtract(b.coefficients, a.coefficients))))
             for a, b in zip(fits, fits[1:])]
    use = [f for f, ok in zip(fits, resolved) if ok]
    est = None
    if len(use) >= 4:
        est = estimate_exponent([f.radius for f in use], [f.residual for f in use], order)
    else:
        notes.append(f"only {len(use)} resolved levels; exponent not estimated")
    x0, tt = _resolve_base(u, base, t0)
    return RegularityReport(order, x0.tolist(), tt, u.grid.h, fits, est, drift, resolved, notes)


def _in_half_cylinder(u: SampledField, radius, t0):
    x0 = np.zeros(u.grid.n)
    t0 = float(u.grid.times[-1] if t0 is None else t0)
    ks, mask = cylinder_nodes(u.grid, (x0, t0), radius, u.grid.gamma, closed_ball=False)
    return ks, mask, t0


def check_lipschitz_bound(u: SampledField, u_norm: Optional[float] = None,
                          f_norm: float = 0.0, radius: float = 0.5, t0=None,
                          declared: Optional[float] = None):
    """Empirical ``C = max |u| / ((||u|| + ||f||) |x|)`` over ``Q_radius^+``.

    Returns ``(C, passed)``; ``passed`` means ``C`` is finite and, when
    ``declared`` is given, at most ``declared``.
    """
    ks, mask, _ = _in_half_cylinder(u, radius, t0)
    face = u.values[:, u.grid.coords[..., -1] == 0]
    if np.max(np.abs(face), initial=0.0) > 1e-12:
        raise ValueError("u must vanish on the face x_n = 0")
    norm = u.sup_norm() if u_norm is None else float(u_norm)
    denom = norm + float(f_norm)
    if denom == 0:
        return 0.0, True
    x = u.grid.coords[mask]
    dist = np.linalg.norm(x, axis=-1)
    keep = dist > 0
    vals = np.abs(u.values[ks][:, mask][:, keep])
    C = float(np.max(vals / (denom * dist[keep]), initial=0.0))
    ok = math.isfinite(C) and (declared is None or C <= declared)
    return C, ok


@dataclass
class HopfCheck:
    constant: float
    passed: bool
    probe_value: float
    probe: list
    flag: str = ""


def check_hopf_bound(u: SampledField, radius: float = 0.5, t0=None) -> HopfCheck:
    """Empirical ``C = min u / (u(probe) x_n)`` over ``Q_radius^+``.

    The probe is ``(e_n/2, t0 - 2/4**(2-gamma))``, interpolated linearly in
    space-time when it is not a grid node.
    """
    grid = u.grid
    if np.min(u.values) < -1e-12:
        raise ValueError("u must be nonnegative")
    ks, mask, t0 = _in_half_cylinder(u, radius, t0)
    g = as_gamma(grid.gamma)
    probe_x = np.zeros(grid.n)
    probe_x[-1] = 0.5
    probe_t = t0 - 2.0 / 4.0 ** g.time_exponent
    probe = probe_x.tolist() + [probe_t]
    if u.sup_norm() == 0:
        return HopfCheck(0.0, True, 0.0, probe, "zero field")
    if not grid.times[0] <= probe_t <= grid.times[-1]:
        raise ValueError(f"probe time {probe_t} lies outside the grid")
    interp = RegularGridInterpolator((grid.times,) + grid.axes, u.values)
    pv = float(interp(np.array([[probe_t] + probe_x.tolist()]))[0])
    if pv <= 0:
        return HopfCheck(0.0, False, pv, probe, "u(probe) = 0 with u not identically zero")
    x = grid.coords[mask]
    xn = x[:, -1]
    C = float(np.min(u.values[ks][:, mask] / (pv * xn)))
    return HopfCheck(C, C > 0, pv, probe)


class BoundaryRegularityEstimator(BaseEstimator):
    """Estimator-style front end for :func:`dyadic_fits`.

    Parameters
    ----------
    order : int
        1 for ``a x_n`` profiles, 2 for ``sum_i a_i x_i x_n``.
    levels : tuple of int
        Dyadic levels ``k`` with ``r_k = 2**-k``.
    min_nodes : int
        Nodes with ``x_n > 0`` needed for a level to count as resolved.
    method : str
        Quadratic solver, ``'lp'`` or ``'coordinate'``.
    closed_ball : bool
        Include nodes with ``|x| = r``.
    """

    def __init__(self, order=1, levels=(1, 2, 3, 4, 5), min_nodes=4, method="lp",
                 closed_ball=True):
        self.order = order
        self.levels = levels
        self.min_nodes = min_nodes
        self.method = method
        self.closed_ball = closed_ball

    def fit(self, u: SampledField, y=None, subtract=None, base=None, t0=None):
        if not isinstance(u, SampledField):
            raise TypeError("fit expects a SampledField")
        self.report_ = dyadic_fits(u, self.order, self.levels, base, t0, subtract,
                                   self.min_nodes, self.closed_ball, self.method)
        self.alpha_ = self.report_.alpha
        return self

    def transform(self, u: SampledField, subtract=None):
        """Residual per level on a new field, using the fitted radii."""
        check_is_fitted(self, "report_")
        rep = dyadic_fits(u, self.order, self.levels, None, None, subtract,
                          self.min_nodes, self.closed_ball, self.method)
        return np.array(rep.residuals)
