"""Pucci extremal operators, a registry of uniformly parabolic F, and residuals.

Matrices are plain ``numpy`` arrays; every function accepts stacks with
shape ``(..., n, n)`` and evaluates row-wise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import Gamma, HalfCylinderGrid, SampledField, as_gamma

__all__ = [
    "EllipticityPair",
    "Modulus",
    "LinearPiece",
    "OperatorSpec",
    "Problem",
    "as_sym_matrix",
    "pucci_plus",
    "pucci_minus",
    "eval_operator",
    "make_operator",
    "registered_operators",
    "degenerate_residual",
    "central_hessian",
]


@dataclass(frozen=True)
class EllipticityPair:
    lam: float
    Lam: float

    def __post_init__(self):
        if not (0 < self.lam <= self.Lam):
            raise ValueError(f"need 0 < lambda <= Lambda, got ({self.lam}, {self.Lam})")

    @classmethod
    def coerce(cls, e) -> "EllipticityPair":
        if isinstance(e, cls):
            return e
        lam, Lam = e
        return cls(float(lam), float(Lam))

    def as_tuple(self) -> Tuple[float, float]:
        return (self.lam, self.Lam)


def as_sym_matrix(M, atol: float = 1e-12) -> np.ndarray:
    """Validate a (stack of) symmetric matrices and return it as float array."""
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if not np.allclose(M, np.swapaxes(M, -1, -2), rtol=0.0, atol=atol * scale):
        raise ValueError("matrix is not symmetric")
    return M


def _split_eigs(M):
    e = np.linalg.eigvalsh(as_sym_matrix(M))
    return np.clip(e, 0.0, None).sum(axis=-1), np.clip(-e, 0.0, None).sum(axis=-1)


def pucci_plus(M, ellipticity) -> np.ndarray:
    """``sup tr(AM)`` over ``lam I <= A <= Lam I``: ``Lam sum e+ - lam sum e-``."""
    e = EllipticityPair.coerce(ellipticity)
    pos, neg = _split_eigs(M)
    return e.Lam * pos - e.lam * neg


def pucci_minus(M, ellipticity) -> np.ndarray:
    """``inf tr(AM)`` over ``lam I <= A <= Lam I``: ``lam sum e+ - Lam sum e-``."""
    e = EllipticityPair.coerce(ellipticity)
    pos, neg = _split_eigs(M)
    return e.lam * pos - e.Lam * neg


def _scalar_pucci(s, e: EllipticityPair, sign: int):
    """Pucci of the 1x1 matrix ``s``, used for axis-aligned discrete Hessians."""
    hi, lo = (e.Lam, e.lam) if sign > 0 else (e.lam, e.Lam)
    return np.where(s > 0, hi * s, lo * s)


@dataclass(frozen=True)
class Modulus:
    """A nonnegative function of ``(x, t)`` with an optional Hölder constant."""

    func: Callable
    holder_constant: Optional[float] = None
    exponent: Optional[float] = None

    def __call__(self, x, t):
        return self.func(x, t)


ZERO_MODULUS = Modulus(lambda x, t: np.zeros(np.shape(x)[:-1]), 0.0, 1.0)


def _as_callable(value):
    if callable(value):
        return value
    arr = np.asarray(value, dtype=float)
    return lambda x, t: arr


@dataclass(frozen=True)
class LinearPiece:
    """``M -> tr(A(x, t) M) + c(x, t)``.

    ``coefficients`` is a length-n diagonal, an ``n x n`` matrix, or a
    callable returning either (batched over ``x[..., :]``).
    """

    coefficients: Union[Callable, Sequence[float], np.ndarray]
    drift: Union[Callable, float] = 0.0

    def matrix(self, x, t, n: int) -> np.ndarray:
        A = np.asarray(_as_callable(self.coefficients)(x, t), dtype=float)
        batch = np.shape(x)[:-1]
        if A.shape[-1:] == (n,) and (A.ndim == 1 or A.shape[-2:] != (n, n)):
            A = np.broadcast_to(A, batch + (n,))
            A = A[..., :, None] * np.eye(n)
        return np.broadcast_to(A, batch + (n, n))

    def offset(self, x, t) -> np.ndarray:
        c = _as_callable(self.drift)(x, t)
        return np.broadcast_to(np.asarray(c, dtype=float), np.shape(x)[:-1])


KINDS = ("laplacian", "pucci_plus", "pucci_minus", "bellman")


@dataclass(frozen=True)
class OperatorSpec:
    """Description of a uniformly parabolic ``F(M, x, t)``.

    ``bellman`` is ``inf_k`` (concave) or ``sup_k`` (convex) over linear
    pieces. ``beta1``/``beta2`` are the frozen-coefficient moduli around
    ``base``.
    """

    kind: str
    ellipticity: EllipticityPair = EllipticityPair(1.0, 1.0)
    family: Tuple[LinearPiece, ...] = ()
    combine: str = "inf"
    beta1: Modulus = ZERO_MODULUS
    beta2: Modulus = ZERO_MODULUS
    base: Tuple[Tuple[float, ...], float] = ((), 0.0)
    key: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unregistered operator kind {self.kind!r}; known: {KINDS}")
        object.__setattr__(self, "ellipticity", EllipticityPair.coerce(self.ellipticity))
        if self.kind == "bellman":
            if not self.family:
                raise ValueError("bellman operator needs at least one linear piece")
            if self.combine not in ("inf", "sup"):
                raise ValueError("bellman combine must be 'inf' or 'sup'")
        if self.kind == "laplacian" and self.ellipticity.as_tuple() != (1.0, 1.0):
            object.__setattr__(self, "ellipticity", EllipticityPair(1.0, 1.0))

    @property
    def concavity(self) -> str:
        """'linear', 'concave' or 'convex' (F2)."""
        if self.kind == "laplacian" or (self.kind == "bellman" and len(self.family) == 1):
            return "linear"
        if self.kind == "pucci_minus" or (self.kind == "bellman" and self.combine == "inf"):
            return "concave"
        return "convex"

    @property
    def needs_mixed_stencil(self) -> bool:
        return self.kind == "bellman"

    def zero_hessian_value(self, x, t) -> np.ndarray:
        """``F(O_n, x, t)``; nonzero only for Bellman pieces with drifts."""
        if self.kind != "bellman":
            return np.zeros(np.shape(x)[:-1])
        vals = np.stack([p.offset(x, t) for p in self.family])
        return vals.min(axis=0) if self.combine == "inf" else vals.max(axis=0)

    def discrete(self, hess, x, t) -> np.ndarray:
        """Monotone evaluation on an axis-aligned stencil.

        ``hess`` provides ``axis(i)`` (second difference along ``e_i``) and
        ``diagonal(i, j, s)`` (along ``e_i + s e_j``). Pucci kinds pick
        ``lam`` or ``Lam`` per axis by the sign of each second difference.
        """
        n = hess.n
        if self.kind == "laplacian":
            return sum(hess.axis(i) for i in range(n))
        if self.kind in ("pucci_plus", "pucci_minus"):
            sign = 1 if self.kind == "pucci_plus" else -1
            return sum(_scalar_pucci(hess.axis(i), self.ellipticity, sign) for i in range(n))
        vals = []
        for piece in self.family:
            A = piece.matrix(x, t, n)
            total = piece.offset(x, t).copy()
            for i in range(n):
                off = sum(np.abs(A[..., i, j]) for j in range(n) if j != i) if n > 1 else 0.0
                if np.any(A[..., i, i] - off < -1e-12):
                    raise ValueError("off-diagonal coefficients must be diagonally dominant "
                                     "for a monotone stencil")
                total = total + (A[..., i, i] - off) * hess.axis(i)
                for j in range(i + 1, n):
                    a = A[..., i, j]
                    if np.any(a != 0):
                        plus = hess.diagonal(i, j, 1)
                        minus = hess.diagonal(i, j, -1)
                        # 2 a u_ij = |a| (D_{i+sj} - D_i - D_j) with s = sign(a)
                        total = total + np.where(a > 0, a * plus, -a * minus)
            vals.append(total)
        vals = np.stack(vals)
        return vals.min(axis=0) if self.combine == "inf" else vals.max(axis=0)


def eval_operator(spec: OperatorSpec, M, x=None, t: float = 0.0) -> np.ndarray:
    """``F(M, x, t)`` for a registered operator; batched over ``M[..., :, :]``."""
    if not isinstance(spec, OperatorSpec):
        raise TypeError("spec must be an OperatorSpec")
    M = as_sym_matrix(M)
    n = M.shape[-1]
    if spec.kind == "laplacian":
        return np.trace(M, axis1=-2, axis2=-1)
    if spec.kind == "pucci_plus":
        return pucci_plus(M, spec.ellipticity)
    if spec.kind == "pucci_minus":
        return pucci_minus(M, spec.ellipticity)
    if x is None:
        x = np.zeros(M.shape[:-2] + (n,))
    x = np.asarray(x, dtype=float)
    vals = np.stack([
        np.einsum("...ij,...ji->...", piece.matrix(x, t, n), M) + piece.offset(x, t)
        for piece in spec.family
    ])
    return vals.min(axis=0) if spec.combine == "inf" else vals.max(axis=0)


# ---------------------------------------------------------------- registry

def _parse_floats(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_bellman(body: str) -> Tuple[str, Tuple[LinearPiece, ...]]:
    # "inf:1,1;0.5,0.5@0.1"  ->  pieces diag(1,1) and diag(.5,.5) + 0.1
    combine, _, rest = body.partition(":")
    if combine not in ("inf", "sup") or not rest:
        raise ValueError(f"bad bellman spec {body!r}; expected 'inf:<diag>;<diag>...'")
    pieces = []
    for entry in rest.split(";"):
        coef, _, drift = entry.partition("@")
        diag = _parse_floats(coef)
        if not diag or min(diag) <= 0:
            raise ValueError(f"bellman coefficients must be positive, got {coef!r}")
        pieces.append(LinearPiece(np.array(diag), float(drift) if drift else 0.0))
    return combine, tuple(pieces)


def _perturbed_laplacian(body: str, n: int) -> OperatorSpec:
    # a(x, t) = 1 + eps |x|^alpha ; |F(M,x,t) - F(M,0,0)| <= n eps |x|^alpha ||M||
    eps, alpha = (_parse_floats(body) + [1.0])[:2] if body else (0.1, 1.0)
    if not 0 <= eps < 1:
        raise ValueError("perturbation amplitude must lie in [0, 1)")

    def coef(x, t):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        a = 1.0 + eps * np.minimum(np.linalg.norm(x, axis=-1), 1.0) ** alpha
        return np.broadcast_to(a[..., None], x.shape[:-1] + (n,))

    def b1(x, t):
        x = np.asarray(x, dtype=float)
        return x.shape[-1] * eps * np.minimum(np.linalg.norm(x, axis=-1), 1.0) ** alpha

    return OperatorSpec(
        "bellman", EllipticityPair(1.0, 1.0 + eps), (LinearPiece(coef),), "inf",
        beta1=Modulus(b1, holder_constant=n * eps, exponent=alpha),
        base=((0.0,) * n, 0.0),
        key=f"perturbed:{eps},{alpha}",
    )


def make_operator(key: str, ellipticity=(1.0, 1.0), n: int = 2) -> OperatorSpec:
    """Build an operator from its registry key.

    Keys: ``laplacian``, ``pucci+``, ``pucci-``,
    ``bellman:inf:1,1;0.5,0.5@0.1`` (diagonal pieces with optional drift),
    ``perturbed:eps,alpha`` (Laplacian with coefficient ``1 + eps |x|^alpha``).
    """
    head, _, body = key.partition(":")
    e = EllipticityPair.coerce(ellipticity)
    if head == "laplacian":
        return OperatorSpec("laplacian", key="laplacian")
    if head in ("pucci+", "pucci_plus"):
        return OperatorSpec("pucci_plus", e, key=key)
    if head in ("pucci-", "pucci_minus"):
        return OperatorSpec("pucci_minus", e, key=key)
    if head == "bellman":
        combine, pieces = _parse_bellman(body)
        coeffs = np.concatenate([np.asarray(p.coefficients) for p in pieces])
        return OperatorSpec("bellman", EllipticityPair(coeffs.min(), coeffs.max()),
                            pieces, combine, key=key)
    if head == "perturbed":
        return _perturbed_laplacian(body, n)
    raise ValueError(f"unknown operator key {key!r}; known: {registered_operators()}")


def registered_operators():
    return ["laplacian", "pucci+", "pucci-", "bellman:<inf|sup>:<diag>;...[@drift]",
            "perturbed:<eps>,<alpha>"]


# ----------------------------------------------------------------- problems

@dataclass
class Problem:
    """Cauchy-Dirichlet data for ``u_t - x_n**gamma F(D^2u, x, t) = f``.

    ``forcing`` and ``boundary`` are callables ``(x, t) -> array`` vectorized
    over ``x[..., :n]``; ``boundary`` supplies the initial slice as well.
    """

    gamma: Gamma
    op: OperatorSpec
    forcing: Callable
    boundary: Callable
    n: int = 2
    radius: float = 1.0
    horizon: float = 1.0
    exact: Optional[Callable] = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gamma = as_gamma(self.gamma)

    def grid(self, h: float, dt: Optional[float] = None) -> HalfCylinderGrid:
        return HalfCylinderGrid(self.n, h, self.radius, self.horizon, dt, self.gamma.value)

    def forcing_values(self, x, t) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.forcing(x, t), dtype=float), np.shape(x)[:-1])

    def boundary_values(self, x, t) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.boundary(x, t), dtype=float), np.shape(x)[:-1])


def central_hessian(values: np.ndarray, h: float, n: int) -> np.ndarray:
    """Central-difference Hessians at interior nodes.

    The last ``n`` axes of ``values`` are spatial; returns shape
    ``leading + interior + (n, n)``.
    """
    lead = values.ndim - n
    inner = (slice(None),) * lead

    def shifted(offsets):
        sl = []
        for o, size in zip(offsets, values.shape[lead:]):
            sl.append(slice(1 + o, size - 1 + o))
        return values[inner + tuple(sl)]

    zero = [0] * n
    c = shifted(zero)
    H = np.empty(c.shape + (n, n))
    for i in range(n):
        e = list(zero)
        e[i] = 1
        ep = shifted(e)
        e[i] = -1
        em = shifted(e)
        H[..., i, i] = (ep - 2 * c + em) / h**2
        for j in range(i + 1, n):
            o = list(zero)
            o[i], o[j] = 1, 1
            pp = shifted(o)
            o[i], o[j] = -1, -1
            mm = shifted(o)
            o[i], o[j] = 1, -1
            pm = shifted(o)
            o[i], o[j] = -1, 1
            mp = shifted(o)
            H[..., i, j] = H[..., j, i] = (pp + mm - pm - mp) / (4 * h**2)
    return H


def degenerate_residual(u: SampledField, prob: Problem) -> SampledField:
    """``u_t - x_n**gamma F(D^2u, x, t) - f`` at interior nodes.

    Backward difference in time between stored levels, central second
    differences in space. Boundary nodes and the initial slice hold 0.
    """
    grid = u.grid
    if grid.n_steps < 1:
        raise ValueError("grid needs at least two time levels for the residual stencil")
    if grid.n != prob.n:
        raise ValueError("grid and problem dimensions differ")
    n = grid.n
    inner = (slice(1, -1),) * n
    x = grid.coords[inner]
    weight = x[..., -1] ** prob.gamma.value
    out = np.zeros(grid.shape)
    for k in range(1, grid.n_steps + 1):
        t = grid.times[k]
        ut = (u.values[k][inner] - u.values[k - 1][inner]) / grid.dt
        H = central_hessian(u.values[k], grid.h, n)
        F = eval_operator(prob.op, H, x, t)
        out[k][inner] = ut - weight * F - prob.forcing_values(x, t)
    return SampledField(grid, out, {"kind": "residual"})
