"""Explicit monotone marching for the Cauchy-Dirichlet problem on a half-cylinder.

Each interior update ``u + dt (x_n**gamma F_h(u) + f)`` is a nondecreasing
function of every stencil value as long as ``dt`` respects :func:`cfl_dt`,
which gives a discrete comparison principle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .geometry import Gamma, HalfCylinderGrid, SampledField, as_gamma
from .operators import EllipticityPair, Problem

__all__ = [
    "MonotonicityError",
    "SolverDivergence",
    "SchemeConfig",
    "SolveResult",
    "cfl_dt",
    "step",
    "solve_cauchy_dirichlet",
    "perron_bounds",
    "perron_envelope",
    "CauchyDirichletSolver",
]


class MonotonicityError(ValueError):
    """Requested time step would break monotonicity of the scheme."""


class SolverDivergence(FloatingPointError):
    """Non-finite values appeared while marching."""


@dataclass(frozen=True)
class SchemeConfig:
    cfl_safety: float = 0.9
    dt: Optional[float] = None
    coefficient_cap: Optional[float] = None

    def __post_init__(self):
        if not self.cfl_safety > 0:
            raise ValueError("cfl_safety must be positive")
        if self.cfl_safety > 1:
            raise MonotonicityError(
                f"cfl_safety={self.cfl_safety} > 1 exceeds the monotonicity bound")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt override must be positive")
        if self.coefficient_cap is not None and not self.coefficient_cap > 0:
            raise ValueError("coefficient cap must be positive")


@dataclass
class SolveResult:
    field: SampledField
    dt: float
    substeps: int
    stability_margin: float
    wall_time: float
    problem: Optional[Problem] = None


def _coefficient(xn, gamma: Gamma, cap=None):
    w = xn ** gamma.value
    return np.minimum(w, cap) if cap is not None else w


def max_coefficient(grid: HalfCylinderGrid, gamma, cap=None) -> float:
    """Largest ``x_n**gamma`` the scheme can meet on interior nodes."""
    g = as_gamma(gamma)
    if g.value > 0:
        w = grid.radius ** g.value
    elif g.value < 0:
        w = grid.h ** g.value
    else:
        w = 1.0
    return min(w, cap) if cap is not None else w


def cfl_dt(grid: HalfCylinderGrid, gamma, ellipticity, cfl_safety: float = 1.0,
           coefficient_cap: Optional[float] = None) -> float:
    """``cfl_safety * h**2 / (2 n Lam max x_n**gamma)``."""
    e = EllipticityPair.coerce(ellipticity)
    w = max_coefficient(grid, gamma, coefficient_cap)
    return cfl_safety * grid.h**2 / (2 * grid.n * e.Lam * w)


class _StencilHessian:
    """Second differences of one time slice at interior nodes, built lazily."""

    def __init__(self, u: np.ndarray, h: float):
        self.u = u
        self.n = u.ndim
        self.h2 = h * h
        self._center = u[(slice(1, -1),) * self.n]

    def _shift(self, offsets):
        return self.u[tuple(slice(1 + o, s - 1 + o) for o, s in zip(offsets, self.u.shape))]

    def axis(self, i: int) -> np.ndarray:
        e = [0] * self.n
        e[i] = 1
        plus = self._shift(e)
        e[i] = -1
        return (plus - 2 * self._center + self._shift(e)) / self.h2

    def diagonal(self, i: int, j: int, s: int) -> np.ndarray:
        e = [0] * self.n
        e[i], e[j] = 1, s
        plus = self._shift(e)
        e[i], e[j] = -1, -s
        return (plus - 2 * self._center + self._shift(e)) / self.h2


def _interior(grid):
    return (slice(1, -1),) * grid.n


class _Marcher:
    """Per-grid constants shared by every explicit step."""

    def __init__(self, prob: Problem, grid: HalfCylinderGrid, coefficient_cap=None):
        self.prob = prob
        self.grid = grid
        self.inner = _interior(grid)
        self.x = grid.coords[self.inner]
        self.w = _coefficient(self.x[..., -1], prob.gamma, coefficient_cap)
        self.bmask = grid.boundary
        self.xb = grid.coords[self.bmask]
        self.bound = cfl_dt(grid, prob.gamma, prob.op.ellipticity, 1.0, coefficient_cap)

    def check(self, dt):
        if dt > self.bound * (1 + 1e-12):
            raise MonotonicityError(
                f"dt={dt:.6g} exceeds the monotone bound {self.bound:.6g} (h={self.grid.h}, "
                f"gamma={self.prob.gamma.value}, Lambda={self.prob.op.ellipticity.Lam})")

    def advance(self, state, t, dt, t_next):
        prob = self.prob
        F = prob.op.discrete(_StencilHessian(state, self.grid.h), self.x, t)
        new = np.empty_like(state)
        new[self.inner] = state[self.inner] + dt * (self.w * F + prob.forcing_values(self.x, t))
        new[self.bmask] = prob.boundary_values(self.xb, t_next)
        return new


def step(state: np.ndarray, prob: Problem, grid: HalfCylinderGrid, t: float, dt: float,
         coefficient_cap: Optional[float] = None, t_next: Optional[float] = None) -> np.ndarray:
    """Advance one explicit Euler step from ``t`` to ``t + dt``.

    ``state`` is a spatial slice whose boundary nodes already hold ``g``.
    The returned slice has boundary nodes overwritten with ``g(t + dt)``.
    """
    m = _Marcher(prob, grid, coefficient_cap)
    m.check(dt)
    return m.advance(np.asarray(state, dtype=float), t, dt, t + dt if t_next is None else t_next)


def solve_cauchy_dirichlet(prob: Problem, grid: Optional[HalfCylinderGrid] = None,
                           cfg: SchemeConfig = SchemeConfig(), h: Optional[float] = None
                           ) -> SolveResult:
    """March from the initial slice to the horizon and store every grid level."""
    if grid is None:
        if h is None:
            raise ValueError("pass a grid or a mesh width h")
        grid = prob.grid(h)
    if grid.n != prob.n:
        raise ValueError(f"grid dimension {grid.n} != problem dimension {prob.n}")
    m = _Marcher(prob, grid, cfg.coefficient_cap)
    target = cfg.dt if cfg.dt is not None else cfg.cfl_safety * m.bound
    substeps = max(1, math.ceil(grid.dt / target - 1e-9))
    dt = grid.dt / substeps
    m.check(dt)

    start = time.perf_counter()
    values = np.empty(grid.shape)
    values[0] = prob.boundary_values(grid.coords, grid.times[0])
    if not np.all(np.isfinite(values[0])):
        raise SolverDivergence("boundary data is not finite on the initial slice")
    u = values[0].copy()
    for k in range(grid.n_steps):
        t0 = grid.times[k]
        for j in range(substeps):
            t = t0 + j * dt
            t_next = grid.times[k + 1] if j == substeps - 1 else t + dt
            u = m.advance(u, t, dt, t_next)
        if not np.all(np.isfinite(u)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(u))[0])
            raise SolverDivergence(
                f"non-finite value at node {bad} (x={grid.coords[bad]}) in step {k + 1}")
        values[k + 1] = u
    elapsed = time.perf_counter() - start
    fld = SampledField(grid, values, {"problem": prob.name, "dt": dt})
    return SolveResult(fld, dt, substeps, 1.0 - dt / m.bound, elapsed, prob)


def perron_envelope(t, scale: float, t_start: float = -1.0):
    """``scale * exp(t - t_start)``; with ``t_start = -1`` this is ``e^(t+1)``."""
    return scale * np.exp(np.asarray(t, dtype=float) - t_start)


def perron_bounds(prob: Problem, grid: HalfCylinderGrid):
    """Lower and upper envelopes ``-/+ K e^(t - t_initial)`` as fields.

    ``K = ||f|| + ||g||`` sampled on the grid; any ``x_n**gamma F(O_n, x, t)``
    offset of the operator is folded into ``f``.
    """
    inner = _interior(grid)
    x = grid.coords[inner]
    w = _coefficient(x[..., -1], prob.gamma)
    f_sup = 0.0
    g_sup = 0.0
    for k, t in enumerate(grid.times):
        f_eff = prob.forcing_values(x, t) + w * prob.op.zero_hessian_value(x, t)
        f_sup = max(f_sup, float(np.max(np.abs(f_eff))))
        g = prob.boundary_values(grid.coords, t)
        g_sup = max(g_sup, float(np.max(np.abs(g if k == 0 else g[grid.boundary]))))
    scale = f_sup + g_sup
    env = perron_envelope(grid.times, scale, grid.times[0])
    upper = np.broadcast_to(env.reshape((-1,) + (1,) * grid.n), grid.shape).copy()
    return (SampledField(grid, -upper, {"envelope": "lower", "scale": scale}),
            SampledField(grid, upper, {"envelope": "upper", "scale": scale}))


class CauchyDirichletSolver(BaseEstimator):
    """Estimator-style front end for :func:`solve_cauchy_dirichlet`.

    Parameters
    ----------
    h : float
        Spatial mesh width.
    cfl_safety : float
        Fraction of the monotone time-step bound to use.
    dt : float, optional
        Explicit marching step; must respect the monotone bound.
    time_spacing : float, optional
        Spacing of stored time levels; defaults to ``h**(2 - gamma)``
        rounded to divide the horizon.
    coefficient_cap : float, optional
        Upper cap on ``x_n**gamma`` for exploratory singular runs.

    Attributes
    ----------
    grid_ : HalfCylinderGrid
    result_ : SolveResult
    field_ : SampledField
    """

    def __init__(self, h=1 / 32, cfl_safety=0.9, dt=None, time_spacing=None,
                 coefficient_cap=None):
        self.h = h
        self.cfl_safety = cfl_safety
        self.dt = dt
        self.time_spacing = time_spacing
        self.coefficient_cap = coefficient_cap

    def fit(self, problem: Problem, y=None):
        if not isinstance(problem, Problem):
            raise TypeError("fit expects a Problem")
        cfg = SchemeConfig(self.cfl_safety, self.dt, self.coefficient_cap)
        self.grid_ = problem.grid(self.h, self.time_spacing)
        self.result_ = solve_cauchy_dirichlet(problem, self.grid_, cfg)
        self.field_ = self.result_.field
        return self

    def predict(self, X, t=None):
        """Interpolate the solution at spatial points ``X`` (shape (m, n)) at time ``t``.

        ``t`` defaults to the final time.
        """
        check_is_fitted(self, "field_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.grid_.n:
            raise ValueError(f"X must have {self.grid_.n} columns")
        grid = self.grid_
        k = grid.n_steps if t is None else grid.time_index(t)
        interp = RegularGridInterpolator(grid.axes, self.field_.values[k])
        return interp(X)

    def score(self, problem: Problem, y=None):
        """Negative max nodewise error against ``problem.exact``."""
        check_is_fitted(self, "field_")
        if problem.exact is None:
            raise ValueError("problem has no exact solution")
        ref = SampledField.from_function(self.grid_, problem.exact)
        return -float(np.max(np.abs(self.field_.values - ref.values)))
