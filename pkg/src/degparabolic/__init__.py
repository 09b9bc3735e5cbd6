"""Numerical laboratory for ``u_t - x_n**gamma F(D^2u, x, t) = f`` on a half-cylinder."""

from .geometry import (Gamma, HalfCylinderGrid, IntrinsicCylinder, SampledField,
                       as_gamma, cylinder_contains, holder_seminorm, intrinsic_distance)
from .operators import (EllipticityPair, OperatorSpec, Problem, degenerate_residual,
                        eval_operator, make_operator, pucci_minus, pucci_plus)
from .solver import (CauchyDirichletSolver, MonotonicityError, SchemeConfig, SolveResult,
                     cfl_dt, perron_bounds, solve_cauchy_dirichlet, step)
from .barriers import (exact_solution, hopf_barrier_degenerate, hopf_barrier_singular,
                       lipschitz_barrier, verify_certificate)

__version__ = "0.1.0"
