"""Half-cylinder grids and the intrinsic parabolic geometry.

The equation ``u_t - x_n**gamma F(D^2 u, x, t) = f`` scales like
``(x, t) -> (r x, r**(2 - gamma) t)``, so distances, cylinders and Hölder
quotients below all use the intrinsic time exponent ``1 / (2 - gamma)``.

Time runs forward on grids (``0 <= t <= horizon``); cylinders are anchored at
their top time ``t0`` and extend backwards by ``r**(2 - gamma)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple, Union

import numpy as np

__all__ = [
    "Gamma",
    "as_gamma",
    "IntrinsicCylinder",
    "HalfCylinderGrid",
    "SampledField",
    "intrinsic_distance",
    "cylinder_contains",
    "holder_seminorm",
]


@dataclass(frozen=True)
class Gamma:
    """Exponent of the boundary weight ``x_n**gamma``; must satisfy gamma < 1."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or v >= 1.0:
            raise ValueError(f"gamma must be a finite number < 1, got {self.value!r}")
        object.__setattr__(self, "value", v)

    @property
    def regime(self) -> str:
        if self.value > 0:
            return "degenerate"
        if self.value < 0:
            return "singular"
        return "uniform"

    @property
    def time_exponent(self) -> float:
        """Power ``2 - gamma`` linking spatial radius to cylinder height."""
        return 2.0 - self.value

    def __float__(self):
        return self.value


def as_gamma(gamma: Union[Gamma, float]) -> Gamma:
    return gamma if isinstance(gamma, Gamma) else Gamma(gamma)


def intrinsic_distance(p, q, gamma) -> np.ndarray:
    """``|x_p - x_q| + |t_p - t_q|**(1/(2-gamma))`` for space-time points.

    ``p`` and ``q`` are ``(x, t)`` pairs; ``x`` may carry leading batch axes
    (last axis is space) and everything broadcasts.
    """
    g = as_gamma(gamma)
    xp, tp = p
    xq, tq = q
    dx = np.asarray(xp, dtype=float) - np.asarray(xq, dtype=float)
    dx = np.atleast_1d(dx)
    dt = np.abs(np.asarray(tp, dtype=float) - np.asarray(tq, dtype=float))
    return np.linalg.norm(dx, axis=-1) + dt ** (1.0 / g.time_exponent)


@dataclass(frozen=True)
class IntrinsicCylinder:
    """``{|x - x0| < r} x (t0 - r**(2-gamma), t0]``, optionally cut to ``x_n > 0``."""

    center: Tuple[np.ndarray, float]
    radius: float
    gamma: Gamma
    upper: bool = True

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        x0, t0 = self.center
        object.__setattr__(self, "center", (np.atleast_1d(np.asarray(x0, dtype=float)), float(t0)))
        object.__setattr__(self, "gamma", as_gamma(self.gamma))

    @property
    def height(self) -> float:
        return self.radius ** self.gamma.time_exponent

    def contains(self, x, t, closed_ball: bool = False) -> np.ndarray:
        x0, t0 = self.center
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        dist = np.linalg.norm(x - x0, axis=-1)
        in_ball = dist <= self.radius if closed_ball else dist < self.radius
        inside = in_ball & (t > t0 - self.height) & (t <= t0)
        if self.upper:
            inside = inside & (x[..., -1] > 0)
        return inside


def cylinder_contains(c: IntrinsicCylinder, p) -> bool:
    x, t = p
    return bool(c.contains(np.atleast_1d(np.asarray(x, dtype=float)), t))


@dataclass(frozen=True)
class HalfCylinderGrid:
    """Uniform space-time grid on ``[-R, R]^(n-1) x [0, R] x [0, horizon]``.

    ``dt`` is the spacing of the stored time levels; a solver may march with
    a finer step that divides it.
    """

    n: int
    h: float
    radius: float = 1.0
    horizon: float = 1.0
    dt: Optional[float] = None
    gamma: float = 0.0

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.n}")
        if not (self.h > 0 and self.radius > 0 and self.horizon > 0):
            raise ValueError("h, radius and horizon must be positive")
        m = self.radius / self.h
        if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 2:
            raise ValueError(f"h={self.h} must divide radius={self.radius} at least twice")
        g = as_gamma(self.gamma)
        dt = self.dt
        if dt is None:
            # intrinsic default: one stored level per h**(2 - gamma)
            dt = self.horizon / np.ceil(self.horizon / self.h ** g.time_exponent - 1e-9)
        k = self.horizon / dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ValueError(f"dt={dt} must divide horizon={self.horizon}")
        object.__setattr__(self, "dt", float(self.horizon / round(k)))
        object.__setattr__(self, "gamma", g.value)

    @property
    def n_space(self) -> int:
        return int(round(self.radius / self.h))

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        m = self.n_space
        tangential = self.h * np.arange(-m, m + 1)
        normal = self.h * np.arange(0, m + 1)
        return tuple([tangential] * (self.n - 1) + [normal])

    @cached_property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def spatial_shape(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_steps + 1,) + self.spatial_shape

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``spatial_shape + (n,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean mask of nodes where the equation is discretized (x_n >= h)."""
        mask = np.zeros(self.spatial_shape, dtype=bool)
        mask[(slice(1, -1),) * self.n] = True
        return mask

    @property
    def boundary(self) -> np.ndarray:
        return ~self.interior

    def time_index(self, t: float) -> int:
        k = t / self.dt
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)) or not 0 <= round(k) <= self.n_steps:
            raise ValueError(f"t={t} is not a stored time level")
        return int(round(k))

    def node_index(self, x) -> Tuple[int, ...]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = []
        for xi, axis in zip(x, self.axes):
            j = (xi - axis[0]) / self.h
            if abs(j - round(j)) > 1e-9 * max(1.0, abs(j)) or not 0 <= round(j) < len(axis):
                raise ValueError(f"point {x} is not a grid node")
            idx.append(int(round(j)))
        return tuple(idx)

    def replace(self, **changes) -> "HalfCylinderGrid":
        params = dict(n=self.n, h=self.h, radius=self.radius, horizon=self.horizon,
                      dt=self.dt, gamma=self.gamma)
        if "h" in changes and "dt" not in changes:
            params["dt"] = None
        params.update(changes)
        return HalfCylinderGrid(**params)


@dataclass
class SampledField:
    """Values of a function on every node of a HalfCylinderGrid."""

    grid: HalfCylinderGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise ValueError(f"non-finite value at node {tuple(bad)}")

    @classmethod
    def from_function(cls, grid: HalfCylinderGrid, func: Callable, **meta) -> "SampledField":
        """Sample ``func(x, t)`` (vectorized over x of shape (..., n)) at every node."""
        vals = np.empty(grid.shape)
        for k, t in enumerate(grid.times):
            vals[k] = np.broadcast_to(func(grid.coords, t), grid.spatial_shape)
        return cls(grid, vals, dict(meta))

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __sub__(self, other: "SampledField") -> "SampledField":
        return SampledField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "SampledField":
        return SampledField(self.grid, self.values * c, dict(self.meta))

    __rmul__ = __mul__


def cylinder_nodes(grid: HalfCylinderGrid, base, r: float, gamma=None,
                   closed_ball: bool = True, upper: bool = True):
    """Time indices and spatial mask of the nodes inside ``Q_r^+(base)``.

    Returns ``(ks, mask)`` with ``ks`` the stored time levels inside
    ``(t0 - r**(2-gamma), t0]`` and ``mask`` the spatial-ball mask.
    """
    g = as_gamma(grid.gamma if gamma is None else gamma)
    x0, t0 = base
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dist = np.linalg.norm(grid.coords - x0, axis=-1)
    tol = 1e-12 * max(1.0, r)
    mask = dist <= r + tol if closed_ball else dist < r - tol
    if upper:
        mask &= grid.coords[..., -1] > 0
    t = grid.times
    ks = np.nonzero((t > t0 - r ** g.time_exponent + 1e-12) & (t <= t0 + 1e-12))[0]
    return ks, mask


def holder_seminorm(field: SampledField, order: int, alpha: float, base,
                    polynomial=None, radius: Optional[float] = None, gamma=None) -> float:
    """Discrete ``[f]_{C^{k,alpha}}`` at ``base``.

    Maximum over sampled nodes of ``|f - P| / d**(k + alpha)`` where ``d`` is
    the intrinsic distance to ``base``. ``polynomial`` is ``None`` (zero), a
    callable ``P(x, t)`` or an array shaped like ``field.values``. When
    ``radius`` is given only nodes in ``Q_radius^+(base)`` are used.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    grid = field.grid
    g = as_gamma(grid.gamma if gamma is None else gamma)
    x0, t0 = base
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    if polynomial is None:
        p_vals = np.zeros_like(field.values)
    elif callable(polynomial):
        p_vals = SampledField.from_function(grid, polynomial).values
    else:
        p_vals = np.broadcast_to(np.asarray(polynomial, dtype=float), field.values.shape)
    diff = np.abs(field.values - p_vals)

    xs = grid.coords
    ts = grid.times.reshape((-1,) + (1,) * grid.n)
    d = intrinsic_distance((xs[None], ts), (x0, t0), g)
    use = d > 0
    if radius is not None:
        ks, mask = cylinder_nodes(grid, (x0, t0), radius, g, closed_ball=False, upper=False)
        sel = np.zeros(grid.shape, dtype=bool)
        sel[ks] = mask
        use &= sel
    if not np.any(use):
        raise ValueError("no sample nodes near the base point; cannot estimate a seminorm")
    return float(np.max(diff[use] / d[use] ** (order + alpha)))
