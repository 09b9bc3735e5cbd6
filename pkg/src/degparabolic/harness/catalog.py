"""Named problems that experiments can reference from a config file."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..barriers import BARRIER_CATALOG, SOLUTION_CATALOG, exact_solution
from ..geometry import as_gamma, intrinsic_distance
from ..operators import Problem, make_operator, registered_operators


@dataclass
class CatalogEntry:
    description: str
    build: Callable
    # polynomial removed before boundary fits, keyed by fit order
    reductions: Optional[Callable] = None


def _zeros(x, t):
    return np.zeros(np.shape(x)[:-1])


def _remark12(gamma, n, op, params):
    u, f, g = exact_solution("remark12", gamma, n, eps=params.get("eps", gamma.value))
    return dict(forcing=f, boundary=g, exact=u), {1: lambda x, t: np.ones(np.shape(x)[:-1])}


def _remark14(gamma, n, op, params):
    u, f, g = exact_solution("remark14", gamma, n, linear=params.get("linear"),
                             offset=params.get("offset", 0.0))
    lin = lambda x, t: u.offset + np.asarray(x) @ u.linear
    return dict(forcing=f, boundary=g, exact=u), {1: lin, 2: u.boundary_polynomial}


def _heat_sines(gamma, n, op, params):
    u, f, g = exact_solution("heat_sines", gamma, n)
    return dict(forcing=f, boundary=g, exact=u), {1: _zeros, 2: _zeros}


def _zero_data(gamma, n, op, params):
    return dict(forcing=_zeros, boundary=_zeros, exact=_zeros), {1: _zeros, 2: _zeros}


def _positive_forcing(gamma, n, op, params):
    c = float(params.get("forcing", 1.0))
    if c <= 0:
        raise ValueError("positive-forcing needs forcing > 0")
    return dict(forcing=lambda x, t: np.full(np.shape(x)[:-1], c), boundary=_zeros), {}


def _linear_normal(gamma, n, op, params):
    # u = a x_n + b t is reproduced exactly by any consistent stencil
    a, b = float(params.get("slope", 1.0)), float(params.get("rate", 1.0))
    u = lambda x, t: a * np.asarray(x)[..., -1] + b * np.asarray(t, dtype=float)
    return (dict(forcing=lambda x, t: np.full(np.shape(x)[:-1], b), boundary=u, exact=u),
            {1: lambda x, t: np.full(np.shape(x)[:-1], b * float(t))})


def _singular_forcing(gamma, n, op, params):
    # f = c + d((x, t), (x0, t0))**(alpha + gamma): Hölder of order alpha + gamma at the base
    alpha = float(params.get("alpha", 0.9))
    c = float(params.get("c", 1.0))
    if not alpha + gamma.value > 0:
        raise ValueError(f"singular-forcing needs alpha + gamma > 0, got {alpha + gamma.value}")
    x0 = np.asarray(params.get("base", [0.0] * n), dtype=float)
    t0 = float(params.get("base_time", params.get("_horizon", 1.0)))
    f = lambda x, t: c + intrinsic_distance((x, t), (x0, t0), gamma) ** (alpha + gamma.value)
    return dict(forcing=f, boundary=_zeros), {}


PROBLEMS = {
    "remark12": CatalogEntry("u = 1 - x_n^(2-eps)/((2-eps)(1-eps)), f = x_n^(gamma-eps)", _remark12),
    "remark14": CatalogEntry("u = l(x) + t x_n + x_n^(3-gamma)/((3-gamma)(2-gamma)), f = 0", _remark14),
    "heat-sines": CatalogEntry("gamma = 0 product-of-sines heat solution", _heat_sines),
    "zero-data": CatalogEntry("f = 0, g = 0", _zero_data),
    "positive-forcing": CatalogEntry("f = const > 0, g = 0", _positive_forcing),
    "linear-normal": CatalogEntry("u = a x_n + b t, f = b (stencil-exact)", _linear_normal),
    "singular-forcing": CatalogEntry("f = c + d^(alpha+gamma) about a face point, g = 0",
                                     _singular_forcing),
}


LAPLACIAN_ONLY = ("remark12", "remark14", "heat-sines")


def build_problem(catalog: str, gamma, operator: str = "laplacian", ellipticity=(1.0, 1.0),
                  n: int = 2, radius: float = 1.0, horizon: float = 1.0, params=None):
    """Return ``(Problem, reductions)`` for a catalog entry.

    ``reductions`` maps a fit order to the known polynomial subtracted
    before fitting.
    """
    if catalog not in PROBLEMS:
        raise ValueError(f"unknown catalog problem {catalog!r}; known: {sorted(PROBLEMS)}")
    g = as_gamma(gamma)
    op = make_operator(operator, ellipticity, n)
    params = dict(params or {})
    params.setdefault("_horizon", horizon)
    data, reductions = PROBLEMS[catalog].build(g, n, op, params)
    if catalog in LAPLACIAN_ONLY and op.kind != "laplacian":
        # catalog solutions solve the Laplacian problem only
        data["exact"] = None
    params.pop("_horizon")
    prob = Problem(g, op, data["forcing"], data["boundary"], n, radius, horizon,
                   data.get("exact"), catalog, params)
    return prob, reductions


def describe_catalog() -> str:
    lines = ["operators:"]
    lines += [f"  {k}" for k in registered_operators()]
    lines.append("problems:")
    lines += [f"  {k}: {v.description}" for k, v in PROBLEMS.items()]
    lines.append("exact solutions:")
    lines += [f"  {k}: {v}" for k, v in SOLUTION_CATALOG.items()]
    lines.append("barriers:")
    lines += [f"  {k}: {v}" for k, v in BARRIER_CATALOG.items()]
    return "\n".join(lines)
