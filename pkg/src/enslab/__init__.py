"""Numerical laboratory for an extended form of the Navier-Stokes system
in which the velocity is not constrained to be divergence-free and the
pressure solves a boundary value problem."""

from .grid import Grid, GridMismatchError, disk_grid, torus_grid
from .fields import (ScalarField, VectorField, BoundaryTrace,
                     BC_NONE, BC_DIRICHLET0,
                     l2_inner, l2_norm, mean_value, max_abs,
                     boundary_trace, boundary_normal_trace,
                     boundary_tangential_trace, boundary_integral,
                     boundary_max)
from .calculus import (gradient, perp_gradient, divergence, curl2d,
                       laplacian, vector_laplacian, advect,
                       h1_seminorm_sq, normal_derivative)
from .elliptic import (CompatibilityError, solve_poisson_neumann,
                       solve_poisson_dirichlet, solve_harmonic_dirichlet,
                       solve_helmholtz_dirichlet, heat_step_neumann)

__version__ = "0.1.0"
