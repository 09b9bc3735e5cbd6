"""Closed-form barriers and exact solutions, and a sampled certificate checker.

Every field exposes analytic ``(value, u_t, Du, D^2u)``. Exponential barriers
can also return these divided by a positive local scale so that linear
differential inequalities can be checked without overflow for large ``beta``.

Certificates are numerical evidence on deterministic samples, not proofs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from scipy.stats import qmc

from .geometry import Gamma, as_gamma
from .operators import EllipticityPair, pucci_minus, pucci_plus

__all__ = [
    "Derivatives",
    "ClosedFormField",
    "LipschitzBarrier",
    "HopfSingularBarrier",
    "HopfDegenerateBarrier",
    "Remark12Solution",
    "Remark14Solution",
    "HeatSineSolution",
    "lipschitz_barrier",
    "hopf_barrier_singular",
    "hopf_barrier_degenerate",
    "exact_solution",
    "Inequality",
    "CertificateReport",
    "verify_certificate",
    "sample_upper_cylinder",
    "sample_hopf_singular_domain",
    "sample_hopf_degenerate_domain",
    "lipschitz_threshold",
    "hopf_singular_threshold",
    "hopf_degenerate_thresholds",
    "BARRIER_CATALOG",
    "certify_lipschitz",
    "certify_hopf_singular",
    "certify_hopf_degenerate",
    "lipschitz_M",
    "supersolution_inequality",
    "subsolution_inequality",
    "SOLUTION_CATALOG",
]


class Derivatives(NamedTuple):
    value: np.ndarray
    dt: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def _prep(x, t):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    return x, t


def _outer(v):
    return v[..., :, None] * v[..., None, :]


def _en(n):
    e = np.zeros(n)
    e[-1] = 1.0
    return e


class ClosedFormField:
    """Base class: subclasses implement ``_derivatives(x, t)``.

    ``_derivatives`` returns ``(Derivatives, scale)`` where the true
    derivatives are ``scale * Derivatives``; ``scale`` is positive.
    """

    name = "field"

    def __init__(self, n: int):
        self.n = n

    def params(self) -> dict:
        return {}

    def _derivatives(self, x, t):
        raise NotImplementedError

    def derivatives(self, x, t, normalized: bool = False) -> Derivatives:
        x, t = _prep(x, t)
        d, scale = self._derivatives(x, t)
        if normalized:
            return d
        s = np.asarray(scale)
        return Derivatives(d.value * s, d.dt * s, d.grad * s[..., None],
                           d.hess * s[..., None, None])

    def _value(self, x, t):
        d, scale = self._derivatives(x, t)
        return d.value * scale

    def __call__(self, x, t=0.0):
        x, t = _prep(x, t)
        return self._value(x, t)

    def value(self, x, t=0.0):
        return self(x, t)

    def time_derivative(self, x, t=0.0):
        return self.derivatives(x, t).dt

    def gradient(self, x, t=0.0):
        return self.derivatives(x, t).grad

    def hessian(self, x, t=0.0):
        return self.derivatives(x, t).hess

    def finite_difference_errors(self, x, t, h: float):
        """Max deviation of analytic ``u_t, Du, D^2u`` from central differences."""
        x, t = _prep(x, t)
        n = x.shape[-1]
        d = self.derivatives(x, t)
        ut = (self(x, t + h) - self(x, t - h)) / (2 * h)
        grad = np.empty_like(d.grad)
        hess = np.empty_like(d.hess)
        f0 = self(x, t)
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = h
            fp, fm = self(x + ei, t), self(x - ei, t)
            grad[..., i] = (fp - fm) / (2 * h)
            hess[..., i, i] = (fp - 2 * f0 + fm) / h**2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = h
                mixed = (self(x + ei + ej, t) - self(x + ei - ej, t)
                         - self(x - ei + ej, t) + self(x - ei - ej, t)) / (4 * h**2)
                hess[..., i, j] = hess[..., j, i] = mixed
        return (float(np.max(np.abs(ut - d.dt))), float(np.max(np.abs(grad - d.grad))),
                float(np.max(np.abs(hess - d.hess))))


# ------------------------------------------------------------------ barriers

def lipschitz_threshold(n: int, ellipticity) -> float:
    e = EllipticityPair.coerce(ellipticity)
    return max(2.0, (n - 1) * e.Lam / e.lam - 1.0)


class LipschitzBarrier(ClosedFormField):
    """``v = 2 M eta - M x_n**(2-gamma)`` with ``eta = 1 - |x + e_n|**(-beta)``."""

    name = "lipschitz"

    def __init__(self, M: float, beta: float, gamma, n: int = 2):
        super().__init__(n)
        self.M = float(M)
        self.beta = float(beta)
        self.gamma = as_gamma(gamma)

    def params(self):
        return {"M": self.M, "beta": self.beta, "gamma": self.gamma.value, "n": self.n}

    def eta(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 - np.linalg.norm(x + _en(x.shape[-1]), axis=-1) ** (-self.beta)

    def _derivatives(self, x, t):
        n, b, g, M = x.shape[-1], self.beta, self.gamma.value, self.M
        y = x + _en(n)
        rho = np.linalg.norm(y, axis=-1)
        eta = 1.0 - rho ** (-b)
        xn = x[..., -1]
        grad_eta = b * rho[..., None] ** (-b - 2) * y
        hess_eta = b * rho[..., None, None] ** (-b - 2) * (
            np.eye(n) - (b + 2) * _outer(y) / rho[..., None, None] ** 2)
        p = 2.0 - g
        with np.errstate(divide="ignore", invalid="ignore"):
            power = xn**p
            d_power = p * xn ** (p - 1)
            dd_power = p * (p - 1) * xn ** (-g)
        value = 2 * M * eta - M * power
        grad = 2 * M * grad_eta
        grad[..., -1] -= M * d_power
        hess = 2 * M * hess_eta
        hess[..., -1, -1] -= M * dd_power
        return Derivatives(value, np.zeros_like(value), grad, hess), np.ones_like(value)


def lipschitz_barrier(M: float, beta: float, gamma, n: int = 2, ellipticity=(1.0, 1.0),
                      strict: bool = True) -> LipschitzBarrier:
    """Lipschitz-estimate barrier; rejects ``beta`` at or below the explicit threshold."""
    if not M > 0:
        raise ValueError("M must be positive")
    thr = lipschitz_threshold(n, ellipticity)
    if strict and not beta > thr:
        raise ValueError(f"beta={beta} must exceed max(2, (n-1)Lam/lam - 1) = {thr}")
    return LipschitzBarrier(M, beta, gamma, n)


def hopf_singular_threshold(n: int, ellipticity, gamma) -> float:
    """Positive root of ``4**(1-gamma) b - lam b**2 / 4 + 2 n Lam b = 0``."""
    e = EllipticityPair.coerce(ellipticity)
    g = as_gamma(gamma).value
    return 4.0 * (4.0 ** (1 - g) + 2 * n * e.Lam) / e.lam


class HopfSingularBarrier(ClosedFormField):
    """``phi = exp(-beta (|x - e_n/2|**2 - 4**(1-gamma) t))`` (value normalized by phi)."""

    name = "hopf_singular"

    def __init__(self, beta: float, gamma, n: int = 2, amplitude: float = 1.0):
        super().__init__(n)
        self.beta = float(beta)
        self.gamma = as_gamma(gamma)
        self.amplitude = float(amplitude)

    def params(self):
        return {"beta": self.beta, "gamma": self.gamma.value, "n": self.n}

    @property
    def time_rate(self):
        return 4.0 ** (1 - self.gamma.value)

    def exponent(self, x, t):
        c = _en(x.shape[-1]) / 2
        return -self.beta * (np.sum((x - c) ** 2, axis=-1) - self.time_rate * t)

    def _derivatives(self, x, t):
        n, b = x.shape[-1], self.beta
        d = x - _en(n) / 2
        one = np.ones(x.shape[:-1])
        hess = 4 * b**2 * _outer(d) - 2 * b * np.eye(n)
        with np.errstate(over="ignore"):
            scale = np.exp(self.exponent(x, t))
        return Derivatives(one, b * self.time_rate * one, -2 * b * d, hess), scale

    def normalized_v(self, x, t):
        """Barrier ``v`` divided by ``C0 u(probe)``: 0 on the outer sphere, <= 1 inside."""
        x, t = _prep(x, t)
        b = self.beta
        phi = np.exp(self.exponent(x, t))
        return (phi - math.exp(-b / 4)) / (math.exp(-b / 16) - math.exp(-b / 4))


def hopf_barrier_singular(beta: float, gamma, n: int = 2, ellipticity=(1.0, 1.0),
                          strict: bool = True) -> HopfSingularBarrier:
    g = as_gamma(gamma)
    if g.value >= 0:
        raise ValueError("the singular Hopf barrier needs gamma < 0")
    thr = hopf_singular_threshold(n, ellipticity, g)
    if strict and not beta > thr:
        raise ValueError(f"beta={beta} must exceed {thr:.6g} so that "
                         "4^(1-gamma) b - lam b^2/4 + 2 n Lam b < 0")
    return HopfSingularBarrier(beta, g, n)


def hopf_degenerate_thresholds(n: int, ellipticity, gamma, delta: float) -> dict:
    e = EllipticityPair.coerce(ellipticity)
    g = as_gamma(gamma).value
    return {
        "delta_max": e.lam / (20 * e.Lam),
        "beta_min_xi": 30 * (delta + 2 * n * e.Lam) / e.lam,
        "beta_min_psi": 4.0 ** (2 - g) / e.Lam,
    }


class HopfDegenerateBarrier(ClosedFormField):
    """``w ~ xi + psi`` with ``xi = exp(-beta(|x-e_n/2|**2 - delta t x_n - 1/4))``
    and ``psi = -exp(-beta (4**(2-gamma) - delta) t x_n)``.

    Normalized derivatives are divided by ``xi``; ``part`` selects ``'xi'``,
    ``'psi'`` or the combination ``'w'``.
    """

    name = "hopf_degenerate"

    def __init__(self, beta: float, delta: float, gamma, n: int = 2, part: str = "w"):
        super().__init__(n)
        if part not in ("w", "xi", "psi"):
            raise ValueError("part must be 'w', 'xi' or 'psi'")
        self.beta = float(beta)
        self.delta = float(delta)
        self.gamma = as_gamma(gamma)
        self.part = part

    def params(self):
        return {"beta": self.beta, "delta": self.delta, "gamma": self.gamma.value,
                "n": self.n, "part": self.part}

    def with_part(self, part: str) -> "HopfDegenerateBarrier":
        return HopfDegenerateBarrier(self.beta, self.delta, self.gamma, self.n, part)

    @property
    def k(self):
        return 4.0 ** (2 - self.gamma.value) - self.delta

    def xi_exponent(self, x, t):
        c = _en(x.shape[-1]) / 2
        return -self.beta * (np.sum((x - c) ** 2, axis=-1) - self.delta * t * x[..., -1] - 0.25)

    def psi_exponent(self, x, t):
        return -self.beta * self.k * t * x[..., -1]

    def _derivatives(self, x, t):
        n, b, dl, k = x.shape[-1], self.beta, self.delta, self.k
        xn = x[..., -1]
        one = np.ones(x.shape[:-1])
        gs = 2 * (x - _en(n) / 2)
        gs[..., -1] -= dl * t
        xi = Derivatives(one, b * dl * xn, -b * gs, b**2 * _outer(gs) - 2 * b * np.eye(n))
        ratio = np.exp(self.psi_exponent(x, t) - self.xi_exponent(x, t))  # |psi| / xi
        en_en = np.zeros((n, n))
        en_en[-1, -1] = 1.0
        psi_grad = np.zeros(x.shape)
        psi_grad[..., -1] = b * k * t
        psi = Derivatives(-one, b * k * xn, psi_grad, -(b * k * t)[..., None, None] ** 2 * en_en)
        psi = Derivatives(*(c * (ratio if c.ndim == ratio.ndim else
                                 ratio.reshape(ratio.shape + (1,) * (c.ndim - ratio.ndim)))
                            for c in psi))
        with np.errstate(over="ignore"):
            scale = np.exp(self.xi_exponent(x, t))
        if self.part == "xi":
            return xi, scale
        if self.part == "psi":
            return psi, scale
        return Derivatives(*(a + c for a, c in zip(xi, psi))), scale


def hopf_barrier_degenerate(beta: float, delta: float, gamma, n: int = 2,
                            ellipticity=(1.0, 1.0), strict: bool = True
                            ) -> HopfDegenerateBarrier:
    g = as_gamma(gamma)
    if not 0 < g.value < 1:
        raise ValueError("the degenerate Hopf barrier needs 0 < gamma < 1")
    thr = hopf_degenerate_thresholds(n, ellipticity, g, delta)
    if strict:
        if not 0 < delta < thr["delta_max"]:
            raise ValueError(f"delta={delta} must lie in (0, lam/(20 Lam)) = (0, {thr['delta_max']:.6g})")
        need = max(thr["beta_min_xi"], thr["beta_min_psi"])
        if not beta > need:
            raise ValueError(f"beta={beta} must exceed {need:.6g}")
    return HopfDegenerateBarrier(beta, delta, g, n)


# --------------------------------------------------------- exact solutions

class Remark12Solution(ClosedFormField):
    """``1 - x_n**(2-eps) / ((2-eps)(1-eps))``, solving the Laplacian problem with ``f = x_n**(gamma-eps)``."""

    name = "remark12"

    def __init__(self, eps: float, gamma, n: int = 2):
        super().__init__(n)
        self.eps = float(eps)
        self.gamma = as_gamma(gamma)

    def params(self):
        return {"eps": self.eps, "gamma": self.gamma.value, "n": self.n}

    def _derivatives(self, x, t):
        e = self.eps
        xn = x[..., -1]
        c = (2 - e) * (1 - e)
        value = 1.0 - xn ** (2 - e) / c
        grad = np.zeros(x.shape)
        grad[..., -1] = -xn ** (1 - e) / (1 - e)
        hess = np.zeros(x.shape + (x.shape[-1],))
        with np.errstate(divide="ignore"):
            hess[..., -1, -1] = -xn ** (-e)
        return Derivatives(value, np.zeros_like(value), grad, hess), np.ones_like(value)

    def _value(self, x, t):
        e = self.eps
        return 1.0 - x[..., -1] ** (2 - e) / ((2 - e) * (1 - e))

    def forcing(self, x, t):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return x[..., -1] ** (self.gamma.value - self.eps)


class Remark14Solution(ClosedFormField):
    """``l(x) + t x_n + x_n**(3-gamma) / ((3-gamma)(2-gamma))``, homogeneous Laplacian problem."""

    name = "remark14"

    def __init__(self, gamma, n: int = 2, linear=None, offset: float = 0.0):
        super().__init__(n)
        self.gamma = as_gamma(gamma)
        self.linear = np.zeros(n) if linear is None else np.asarray(linear, dtype=float)
        self.offset = float(offset)

    def params(self):
        return {"gamma": self.gamma.value, "n": self.n, "linear": self.linear.tolist(),
                "offset": self.offset}

    def boundary_polynomial(self, x, t):
        """The part ``l(x) + t x_n`` removed before second-order boundary fits."""
        x = np.asarray(x, dtype=float)
        return self.offset + x @ self.linear + t * x[..., -1]

    def _value(self, x, t):
        g = self.gamma.value
        xn = x[..., -1]
        return self.offset + x @ self.linear + t * xn + xn ** (3 - g) / ((3 - g) * (2 - g))

    def _derivatives(self, x, t):
        g = self.gamma.value
        xn = x[..., -1]
        value = self.offset + x @ self.linear + t * xn + xn ** (3 - g) / ((3 - g) * (2 - g))
        grad = np.broadcast_to(self.linear, x.shape).copy()
        grad[..., -1] += t + xn ** (2 - g) / (2 - g)
        hess = np.zeros(x.shape + (x.shape[-1],))
        hess[..., -1, -1] = xn ** (1 - g)
        return Derivatives(value, xn.copy(), grad, hess), np.ones_like(value)

    def forcing(self, x, t):
        return np.zeros(np.shape(x)[:-1])


class HeatSineSolution(ClosedFormField):
    """``exp(-n pi^2 t) prod_i sin(pi x_i)``: heat equation (gamma = 0), zero on the box faces."""

    name = "heat_sines"

    def params(self):
        return {"n": self.n}

    def _value(self, x, t):
        return np.exp(-x.shape[-1] * np.pi**2 * t) * np.prod(np.sin(np.pi * x), axis=-1)

    def _derivatives(self, x, t):
        n = x.shape[-1]
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        decay = np.exp(-n * np.pi**2 * t)
        prod = np.prod(s, axis=-1)
        grad = np.empty(x.shape)
        hess = np.empty(x.shape + (n,))
        for i in range(n):
            others = np.prod(np.delete(s, i, axis=-1), axis=-1)
            grad[..., i] = np.pi * c[..., i] * others
            for j in range(n):
                if i == j:
                    hess[..., i, i] = -np.pi**2 * prod
                else:
                    rest = np.prod(np.delete(s, [i, j], axis=-1), axis=-1)
                    hess[..., i, j] = np.pi**2 * c[..., i] * c[..., j] * rest
        value = decay * prod
        return (Derivatives(value, -n * np.pi**2 * value, decay[..., None] * grad,
                            decay[..., None, None] * hess), np.ones_like(value))

    def forcing(self, x, t):
        return np.zeros(np.shape(x)[:-1])


def exact_solution(kind: str, gamma, n: int = 2, **params):
    """``(u, f, g)`` for a catalog solution of ``u_t - x_n**gamma Laplacian(u) = f``.

    ``kind`` is ``'remark12'`` (param ``eps``), ``'remark14'`` (params
    ``linear``, ``offset``) or ``'heat_sines'`` (gamma = 0).
    """
    g = as_gamma(gamma)
    if kind == "remark12":
        eps = float(params.get("eps", g.value))
        if not 0 < g.value < 1:
            raise ValueError("remark12 needs 0 < gamma < 1")
        if not 0 < eps <= g.value:
            raise ValueError(f"remark12 needs eps in (0, gamma] = (0, {g.value}], got {eps}")
        u = Remark12Solution(eps, g, n)
    elif kind == "remark14":
        if not 0 < g.value < 1:
            raise ValueError("remark14 needs 0 < gamma < 1")
        u = Remark14Solution(g, n, params.get("linear"), params.get("offset", 0.0))
    elif kind == "heat_sines":
        if g.value != 0:
            raise ValueError("heat_sines is a solution only for gamma = 0")
        u = HeatSineSolution(n)
    else:
        raise ValueError(f"unknown exact solution {kind!r}; known: {sorted(SOLUTION_CATALOG)}")
    return u, u.forcing, u.value


SOLUTION_CATALOG = {
    "remark12": "u = 1 - x_n^(2-eps)/((2-eps)(1-eps)), f = x_n^(gamma-eps), 0 < eps <= gamma < 1",
    "remark14": "u = l(x) + t x_n + x_n^(3-gamma)/((3-gamma)(2-gamma)), f = 0, 0 < gamma < 1",
    "heat_sines": "u = exp(-n pi^2 t) prod sin(pi x_i), gamma = 0",
}

BARRIER_CATALOG = {
    "lipschitz": "v = 2 M eta - M x_n^(2-gamma), eta = 1 - |x+e_n|^(-beta); v_t - x_n^gamma M+(D2v) >= 2",
    "hopf-singular": "phi = exp(-beta(|x-e_n/2|^2 - 4^(1-gamma) t)); phi_t - x_n^gamma M-(D2phi) <= 0, gamma < 0",
    "hopf-degenerate": "w ~ xi + psi; w_t - x_n^gamma M-(D2w) <= 0, 0 < gamma < 1",
}


# ------------------------------------------------------------- certificates

@dataclass(frozen=True)
class Inequality:
    """``expression(derivs, x, t) <relation> target`` checked at every sample."""

    description: str
    expression: Callable
    relation: str
    target: float
    normalized: bool = False

    def __post_init__(self):
        if self.relation not in (">=", "<="):
            raise ValueError("relation must be '>=' or '<='")

    def margin(self, values):
        """Signed slack; nonnegative where the inequality holds."""
        return values - self.target if self.relation == ">=" else self.target - values


def supersolution_inequality(gamma, ellipticity, target: float = 2.0) -> Inequality:
    """``v_t - x_n**gamma M+(D^2 v) >= target``."""
    g, e = as_gamma(gamma).value, EllipticityPair.coerce(ellipticity)

    def expr(d, x, t):
        return d.dt - x[..., -1] ** g * pucci_plus(d.hess, e)

    return Inequality(f"v_t - x_n^{g} M+(D2v) >= {target}", expr, ">=", target)


def subsolution_inequality(gamma, ellipticity, target: float = 0.0) -> Inequality:
    """``x_n**(-gamma) v_t - M-(D^2 v) <= target`` (the sup over A of the linear form).

    Evaluated on normalized derivatives, so ``target`` is relative to the
    positive scale of the field.
    """
    g, e = as_gamma(gamma).value, EllipticityPair.coerce(ellipticity)

    def expr(d, x, t):
        return x[..., -1] ** (-g) * d.dt - pucci_minus(d.hess, e)

    return Inequality(f"x_n^{-g} v_t - M-(D2v) <= {target}", expr, "<=", target, True)


@dataclass
class CertificateReport:
    name: str
    inequality: str
    params: dict
    sample_description: str
    n_samples: int
    min_margin: float
    max_margin: float
    worst_point: list
    worst_time: float
    passed: bool
    label: str = "numerical evidence"
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def verify_certificate(fld: ClosedFormField, inequality: Inequality, samples,
                       name: Optional[str] = None, description: str = "") -> CertificateReport:
    """Evaluate ``inequality`` on ``fld`` at every sample point.

    ``samples`` is ``(x, t)`` with ``x`` of shape ``(m, n)`` or a callable
    returning that pair.
    """
    if callable(samples):
        samples = samples()
    x, t = samples
    x, t = _prep(x, t)
    if x.shape[0] == 0:
        raise ValueError("empty sample set")
    d = fld.derivatives(x, t, normalized=inequality.normalized)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = inequality.expression(d, x, t)
    margin = inequality.margin(np.asarray(vals, dtype=float))
    margin = np.where(np.isnan(margin), -np.inf, margin)
    i = int(np.argmin(margin))
    return CertificateReport(
        name=name or fld.name,
        inequality=inequality.description,
        params=fld.params(),
        sample_description=description or f"{x.shape[0]} points",
        n_samples=int(x.shape[0]),
        min_margin=float(margin[i]),
        max_margin=float(np.max(margin)),
        worst_point=[float(v) for v in x[i]],
        worst_time=float(t[i]),
        passed=bool(margin[i] >= 0),
    )


# ------------------------------------------------------------------ samplers

def _sobol(d: int, m: int, seed: int = 0) -> np.ndarray:
    return qmc.Sobol(d, scramble=True, seed=seed).random_base2(m)


def _directions(n: int, count: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    # Fibonacci sphere
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    r = np.sqrt(1 - z**2)
    phi = np.pi * (1 + 5**0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def sample_upper_cylinder(n: int, gamma, m: int = 64, radius: float = 1.0, sobol_log2: int = 12):
    """Points of ``Q_r^+`` in backward time ``t in (-r**(2-gamma), 0]``.

    Tensor grid with ``m`` points per axis, a scrambled Sobol set (fixed
    seed), and layers hugging the face ``x_n = 0``.
    """
    g = as_gamma(gamma)
    height = radius ** g.time_exponent
    tang = [np.linspace(-radius, radius, m)] * (n - 1)
    normal = radius * np.arange(1, m + 1) / m
    normal = np.concatenate([radius * np.array([1e-6, 1e-4, 1e-3]), normal])
    times = -height * np.arange(0, m) / m
    mesh = np.meshgrid(*tang, normal, times, indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=-1)
    sob = _sobol(n + 1, sobol_log2)
    extra = np.empty_like(sob)
    extra[:, : n - 1] = radius * (2 * sob[:, : n - 1] - 1)
    extra[:, n - 1] = radius * sob[:, n - 1]
    extra[:, n] = -height * sob[:, n]
    pts = np.concatenate([pts, extra])
    x, t = pts[:, :n], pts[:, n]
    keep = (np.linalg.norm(x, axis=-1) < radius) & (x[:, -1] > 0) & (t > -height)
    return x[keep], t[keep]


def sample_upper_cylinder_boundary(n: int, gamma, m: int = 64, radius: float = 1.0):
    """Parabolic-boundary samples of ``Q_r^+``: lateral sphere, bottom slice and flat face."""
    g = as_gamma(gamma)
    height = radius ** g.time_exponent
    dirs = np.concatenate([_directions(n, 4 * m), np.eye(n), -np.eye(n)[:-1]])
    dirs = dirs[dirs[:, -1] >= 0]
    lateral = radius * dirs
    tang = [np.linspace(-radius, radius, m)] * (n - 1)
    bottom = np.stack(np.meshgrid(*tang, radius * np.arange(0, m + 1) / m, indexing="ij"),
                      -1).reshape(-1, n)
    bottom = bottom[np.linalg.norm(bottom, axis=-1) <= radius]
    face = bottom[bottom[:, -1] == 0]
    return {"lateral": lateral, "bottom": bottom, "face": face, "height": height}


def sample_hopf_singular_domain(n: int, gamma, m: int = 48):
    """``{1/4 < |x - e_n/2| < sqrt(4**(1-gamma) t + 1/4), t < 0}``."""
    g = as_gamma(gamma)
    rate = 4.0 ** (1 - g.value)
    t_min = -(0.25 - 1 / 16) / rate
    dirs = _directions(n, 4 * m)
    frac = np.concatenate([[1e-6, 1e-3], (np.arange(m) + 0.5) / m, [1 - 1e-3, 1 - 1e-6]])
    times = t_min * np.concatenate([(np.arange(m) + 0.5) / m, [1e-6, 1 - 1e-6]])
    D, F, T = np.meshgrid(np.arange(len(dirs)), frac, times, indexing="ij")
    D, F, T = D.ravel(), F.ravel(), T.ravel()
    outer = np.sqrt(rate * T + 0.25)
    rho = 0.25 + F * (outer - 0.25)
    x = _en(n) / 2 + rho[:, None] * dirs[D]
    keep = (rho > 0.25) & (rho < outer) & (x[:, -1] > 0)
    return x[keep], T[keep]


def sample_hopf_degenerate_domain(n: int, gamma, m: int = 48):
    """``{1/4 < |x - e_n/2| < sqrt(4**(2-gamma) t x_n + 1/4), -4**(gamma-2) < t < 0}``.

    Includes layers just inside the moving outer boundary, where the
    combined barrier inequality is tightest.
    """
    g = as_gamma(gamma)
    rate = 4.0 ** (2 - g.value)
    t_min = -1.0 / rate
    dirs = _directions(n, 4 * m)
    rhos = 0.25 + 0.25 * np.concatenate([[1e-6, 1e-3], (np.arange(m) + 0.5) / m])
    D, R = np.meshgrid(np.arange(len(dirs)), rhos, indexing="ij")
    D, R = D.ravel(), R.ravel()
    x = _en(n) / 2 + R[:, None] * dirs[D]
    xn = x[:, -1]
    ok = xn > 0
    x, R, xn = x[ok], R[ok], xn[ok]
    # inside iff t > t_edge := (rho^2 - 1/4) / (rate x_n)
    t_edge = (R**2 - 0.25) / (rate * xn)
    lo = np.maximum(t_edge, t_min)
    fr = np.concatenate([[1e-6, 1e-4, 1e-3, 1e-2], (np.arange(m) + 0.5) / m, [1 - 1e-6]])
    xs = np.repeat(x, len(fr), axis=0)
    ts = (lo[:, None] * (1 - fr[None, :])).ravel()
    keep = (ts > np.repeat(t_edge, len(fr))) & (ts < 0) & (ts > t_min)
    return xs[keep], ts[keep]


# ---------------------------------------------------- certificate procedures

BETA_CAP = 2.0**16


def _combine(name, parts, params, extra=None) -> CertificateReport:
    """Fold several sub-checks into one report; the worst margin is reported."""
    worst = min(parts, key=lambda p: p.min_margin if p.passed else -np.inf)
    if all(p.passed for p in parts):
        worst = min(parts, key=lambda p: p.min_margin)
    return CertificateReport(
        name=name,
        inequality="; ".join(p.inequality for p in parts),
        params=params,
        sample_description="; ".join(f"{p.name}: {p.sample_description}" for p in parts),
        n_samples=sum(p.n_samples for p in parts),
        min_margin=worst.min_margin,
        max_margin=max(p.max_margin for p in parts),
        worst_point=worst.worst_point,
        worst_time=worst.worst_time,
        passed=all(p.passed for p in parts),
        extra={"checks": [p.to_dict() for p in parts], **(extra or {})},
    )


def _value_check(name, values, x, t, target, relation, description):
    ineq = Inequality(description, lambda d, xx, tt: d.value, relation, target)

    class _Tab(ClosedFormField):
        def _derivatives(self, xx, tt):
            z = np.zeros(values.shape)
            return Derivatives(values, z, np.zeros(xx.shape), np.zeros(xx.shape + (xx.shape[-1],))), np.ones_like(z)

    return verify_certificate(_Tab(x.shape[-1]), ineq, (x, t), name, f"{len(values)} points")


def lipschitz_M(beta: float, gamma, n: int, ellipticity, m: int = 64) -> dict:
    """Smallest ``M`` meeting both the interior bound and the lateral ordering.

    The interior term ``2 / (lam (2-gamma)(1-gamma))`` makes
    ``-x_n**gamma M+(-M D^2 x_n**(2-gamma))`` at least 2; the lateral term
    makes ``v >= 1`` on the sampled lateral sphere.
    """
    e = EllipticityPair.coerce(ellipticity)
    g = as_gamma(gamma).value
    interior = 2.0 / (e.lam * (2 - g) * (1 - g))
    bd = sample_upper_cylinder_boundary(n, g, m)
    lat = bd["lateral"]
    unit = LipschitzBarrier(1.0, beta, g, n)
    lateral_min = float(np.min(2 * unit.eta(lat) - lat[:, -1] ** (2 - g)))
    lateral = 1.0 / lateral_min if lateral_min > 0 else math.inf
    # round up to 3 significant digits so the lateral ordering holds with slack
    M = max(interior, lateral)
    if math.isfinite(M):
        q = 10.0 ** (math.floor(math.log10(M)) - 2)
        M = math.ceil(M / q * (1 + 1e-12)) * q
    return {"M_interior": interior, "M_lateral": lateral, "M": M, "lateral_min": lateral_min}


def certify_lipschitz(n: int = 2, ellipticity=(1.0, 2.0), gamma=0.5, beta: Optional[float] = None,
                      M: Optional[float] = None, m: int = 64, strict: bool = True
                      ) -> CertificateReport:
    """Interior supersolution margin plus boundary ordering of the Lipschitz barrier.

    Defaults: ``beta = 4 max(2, (n-1) Lam/lam - 1)`` and ``M`` from
    :func:`lipschitz_M`. The checks are ``v_t - x_n**gamma M+(D^2 v) >= 2``
    on ``Q_1^+``, ``v >= 1`` on the lateral sphere and ``v >= 0`` on the
    bottom slice and the face.
    """
    e = EllipticityPair.coerce(ellipticity)
    g = as_gamma(gamma)
    thr = lipschitz_threshold(n, e)
    beta = 4 * thr if beta is None else float(beta)
    choice = lipschitz_M(beta, g, n, e, m)
    if M is None:
        M = choice["M"] if math.isfinite(choice["M"]) else choice["M_interior"]
    v = lipschitz_barrier(M, beta, g, n, e, strict=strict)
    x, t = sample_upper_cylinder(n, g, m)
    interior = verify_certificate(v, supersolution_inequality(g, e, 2.0), (x, t), "interior",
                                  f"{m}-per-axis tensor grid, 4096 Sobol points and face layers "
                                  f"of Q_1^+ ({len(t)} points)")
    bd = sample_upper_cylinder_boundary(n, g, m)
    lat, bot, face = bd["lateral"], bd["bottom"], bd["face"]
    parts = [
        interior,
        _value_check("lateral", v(lat), lat, np.zeros(len(lat)), 1.0, ">=", "v >= 1 on |x| = 1"),
        _value_check("bottom", v(bot), bot, np.full(len(bot), -bd["height"]), 0.0, ">=",
                     "v >= 0 on the bottom slice"),
        _value_check("face", v(face), face, np.zeros(len(face)), 0.0, ">=", "v >= 0 on x_n = 0"),
    ]
    return _combine("lipschitz", parts, {**v.params(), "lam": e.lam, "Lam": e.Lam},
                    {"beta_threshold": thr, "M_choice": choice})


def certify_hopf_singular(n: int = 2, ellipticity=(1.0, 2.0), gamma=-1.0,
                          beta: Optional[float] = None, m: int = 48, strict: bool = True,
                          search: bool = True) -> CertificateReport:
    """Subsolution margin of the singular Hopf barrier on its annular domain.

    Checks ``(x_n**-gamma phi_t - M-(D^2 phi)) / phi <= 0`` and that the same
    quantity stays below the closed-form bound
    ``4**(1-gamma) b - lam b**2/4 + 2 n Lam b``. Without an explicit ``beta``
    the search starts at 1.25 times the threshold and doubles up to ``2**16``.
    """
    e = EllipticityPair.coerce(ellipticity)
    g = as_gamma(gamma)
    thr = hopf_singular_threshold(n, e, g)
    x, t = sample_hopf_singular_domain(n, g, m)
    desc = f"annular domain, {m} radial x {m} time layers plus boundary layers ({len(t)} points)"
    tried = []
    b = 1.25 * thr if beta is None else float(beta)
    while True:
        phi = hopf_barrier_singular(b, g, n, e, strict=strict)
        bound = phi.time_rate * b - e.lam * b * b / 4 + 2 * n * e.Lam * b
        parts = [verify_certificate(phi, subsolution_inequality(g, e, 0.0), (x, t), "margin", desc),
                 verify_certificate(phi, subsolution_inequality(g, e, bound), (x, t),
                                    "closed-form bound", desc)]
        rep = _combine("hopf_singular", parts, {**phi.params(), "lam": e.lam, "Lam": e.Lam},
                       {"beta_threshold": thr, "closed_form_bound": bound})
        tried.append(b)
        if rep.passed or beta is not None or not search or 2 * b > BETA_CAP:
            rep.extra["beta_tried"] = tried
            return rep
        b *= 2


def certify_hopf_degenerate(n: int = 2, ellipticity=(1.0, 2.0), gamma=0.5,
                            beta: Optional[float] = None, delta: Optional[float] = None,
                            m: int = 48, strict: bool = True, search: bool = True
                            ) -> CertificateReport:
    """Subsolution margins of the degenerate Hopf barrier on its moving annulus.

    Two checks: the ``xi`` part satisfies
    ``x_n**-gamma xi_t - M-(D^2 xi) <= -beta**2 lam xi / 6``, and the combined
    ``w`` satisfies ``x_n**-gamma w_t - M-(D^2 w) <= 0``. ``delta`` defaults to
    ``lam / (50 Lam)``. Without an explicit ``beta`` the search starts at 1.25
    times the larger threshold and doubles up to ``2**16``.
    """
    e = EllipticityPair.coerce(ellipticity)
    g = as_gamma(gamma)
    delta = e.lam / (50 * e.Lam) if delta is None else float(delta)
    thr = hopf_degenerate_thresholds(n, e, g, delta)
    x, t = sample_hopf_degenerate_domain(n, g, m)
    desc = (f"moving annulus, {m} radial layers x {4 * m} directions x time layers "
            f"hugging the outer boundary ({len(t)} points)")
    tried = []
    b = 1.25 * max(thr["beta_min_xi"], thr["beta_min_psi"]) if beta is None else float(beta)
    while True:
        w = hopf_barrier_degenerate(b, delta, g, n, e, strict=strict)
        parts = [verify_certificate(w.with_part("xi"),
                                    subsolution_inequality(g, e, -b * b * e.lam / 6),
                                    (x, t), "xi bound", desc),
                 verify_certificate(w, subsolution_inequality(g, e, 0.0), (x, t), "w margin", desc)]
        rep = _combine("hopf_degenerate", parts, {**w.params(), "lam": e.lam, "Lam": e.Lam},
                       {"thresholds": thr})
        tried.append(b)
        if rep.passed or beta is not None or not search or 2 * b > BETA_CAP:
            rep.extra["beta_tried"] = tried
            return rep
        b *= 2
