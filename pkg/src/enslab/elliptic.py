"""Scalar and componentwise elliptic solves on the disk and the torus.

All solves are direct.  On the disk each Fourier mode gives an independent
tridiagonal system (factored once and cached on the grid's kernel object);
on the torus everything diagonalizes in Fourier space.  The Neumann
problem is singular, so its right side must satisfy the usual
compatibility between the source integral and the boundary flux; callers
get a `CompatibilityError` carrying the measured defect when it does not.
The mean-zero normalization of Neumann solutions is imposed by projecting
out the constant, which keeps the solve self-adjoint.
"""

from __future__ import annotations

import numpy as np

from .fields import ScalarField, VectorField, BoundaryTrace, BC_DIRICHLET0


class CompatibilityError(ValueError):
    """Neumann data whose source integral and boundary flux disagree."""

    def __init__(self, defect: float, tol: float):
        self.defect = float(defect)
        self.tol = float(tol)
        super().__init__(
            "incompatible Neumann data: source minus flux = %.3e "
            "exceeds tolerance %.3e" % (defect, tol))


def _trace_modes(g: BoundaryTrace | None):
    if g is None:
        return None
    return np.fft.fft(g.values)


def solve_poisson_neumann(f: ScalarField, g: BoundaryTrace | None = None,
                          tol_compat: float = 1e-8) -> ScalarField:
    """Mean-zero q with Lap q = f and outward normal derivative g."""
    grid = f.grid
    if grid.kind == "torus":
        if g is not None:
            raise ValueError("boundary data on a periodic domain")
        kern = grid._kernels
        vol = float(np.sum(f.values * grid.weights))
        scale = max(1.0, float(np.sum(np.abs(f.values) * grid.weights)))
        if abs(vol) > tol_compat * scale:
            raise CompatibilityError(vol, tol_compat * scale)
        q = kern.solve_poisson_meanzero(f.values)
        return ScalarField(grid, q, mean_zero=True)
    kern = grid._kernels
    F = kern.to_modes(f.values)
    G = _trace_modes(g)
    defect = kern.neumann_compat_defect(F, G)
    scale = max(1.0, float(np.sum(np.abs(f.values) * grid.weights)))
    if g is not None:
        scale = max(scale, float(np.sum(np.abs(g.values))
                                 * grid.radius * grid.dtheta))
    if abs(defect) > tol_compat * scale:
        raise CompatibilityError(defect, tol_compat * scale)
    q = kern.to_phys(kern.solve_neumann_strong(F, G))
    q = q - np.sum(q * grid.weights) / grid.area
    return ScalarField(grid, q, mean_zero=True)


def solve_poisson_dirichlet(f: ScalarField,
                            g: BoundaryTrace | None = None) -> ScalarField:
    """q with Lap q = f in the disk and trace g on the circle."""
    grid = f.grid
    if grid.kind != "disk":
        raise ValueError("Dirichlet problems need a boundary")
    kern = grid._kernels
    Q = kern.solve_dirichlet(-kern.to_modes(f.values), _trace_modes(g), 0.0)
    bc = BC_DIRICHLET0 if g is None else "none"
    return ScalarField(grid, kern.to_phys(Q), bc=bc)


def solve_harmonic_dirichlet(g: BoundaryTrace) -> ScalarField:
    """Harmonic extension of the trace g into the disk."""
    grid = g.grid
    kern = grid._kernels
    Z = np.zeros(grid.shape, dtype=complex)
    Q = kern.solve_dirichlet(Z, _trace_modes(g), 0.0)
    return ScalarField(grid, kern.to_phys(Q))


def solve_helmholtz_dirichlet(lam: float, f: VectorField) -> VectorField:
    """Componentwise (lam - Lap) u = f with zero boundary values."""
    if not lam > 0:
        raise ValueError("helmholtz shift must be positive")
    grid = f.grid
    kern = grid._kernels
    if grid.kind == "torus":
        ux = kern.solve_helmholtz(f.ux, lam)
        uy = kern.solve_helmholtz(f.uy, lam)
        return VectorField(grid, ux, uy)
    UX = kern.solve_dirichlet(kern.to_modes(f.ux), None, lam)
    UY = kern.solve_dirichlet(kern.to_modes(f.uy), None, lam)
    return VectorField(grid, kern.to_phys(UX), kern.to_phys(UY),
                       bc=BC_DIRICHLET0)


def heat_step_neumann(phi: ScalarField, dt: float) -> ScalarField:
    """One implicit Euler step of the no-flux heat equation."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    grid = phi.grid
    kern = grid._kernels
    if grid.kind == "torus":
        out = kern.heat_step(phi.values, dt)
    else:
        out = kern.to_phys(kern.heat_neumann(kern.to_modes(phi.values), dt))
    return ScalarField(grid, out, mean_zero=phi.mean_zero)
