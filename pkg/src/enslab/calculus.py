"""Differential operators acting on tagged fields.

All operators dispatch on the grid kind.  On the periodic square they are
spectral and exact for resolved modes.  On the disk they are spectral in
the angle and second order in the radius; the boundary tag of the operand
selects the edge closure (a reflected ghost for fields that vanish on the
circle, one-sided stencils otherwise).  Derivatives do not preserve
boundary tags, so results carry ``bc='none'`` except where the tag
survives for structural reasons (none do here).
"""

from __future__ import annotations

import numpy as np

from .grid import GridMismatchError
from .fields import (ScalarField, VectorField, BoundaryTrace,
                     boundary_normal_trace, boundary_trace, BC_NONE)


def gradient(f: ScalarField) -> VectorField:
    kern = f.grid._kernels
    if f.grid.kind == "torus":
        gx, gy = kern.grad(f.values)
    else:
        gx, gy = kern.grad(f.values, f.bc)
    return VectorField(f.grid, gx, gy)


def perp_gradient(f: ScalarField) -> VectorField:
    """Rotated gradient (-df/dy, df/dx); divergence-free for smooth f."""
    g = gradient(f)
    return VectorField(f.grid, -g.uy, g.ux)


def divergence(u: VectorField) -> ScalarField:
    kern = u.grid._kernels
    if u.grid.kind == "torus":
        d = kern.div(u.ux, u.uy)
    else:
        d = kern.div(u.ux, u.uy, u.bc)
    return ScalarField(u.grid, d)


def curl2d(u: VectorField) -> ScalarField:
    """Scalar vorticity d(uy)/dx - d(ux)/dy."""
    kern = u.grid._kernels
    if u.grid.kind == "torus":
        w = kern.curl(u.ux, u.uy)
    else:
        w = kern.curl(u.ux, u.uy, u.bc)
    return ScalarField(u.grid, w)


def laplacian(f: ScalarField) -> ScalarField:
    kern = f.grid._kernels
    if f.grid.kind == "torus":
        out = kern.scalar_laplacian(f.values)
    else:
        out = kern.scalar_laplacian(f.values, f.bc)
    return ScalarField(f.grid, out)


def vector_laplacian(u: VectorField) -> VectorField:
    """Componentwise Laplacian of the Cartesian components."""
    kern = u.grid._kernels
    if u.grid.kind == "torus":
        lx = kern.scalar_laplacian(u.ux)
        ly = kern.scalar_laplacian(u.uy)
    else:
        lx = kern.scalar_laplacian(u.ux, u.bc)
        ly = kern.scalar_laplacian(u.uy, u.bc)
    return VectorField(u.grid, lx, ly)


def advect(u: VectorField, v: VectorField) -> VectorField:
    """Advective derivative (u . grad) v, componentwise."""
    if u.grid != v.grid:
        raise GridMismatchError("advect needs fields on one grid")
    kern = u.grid._kernels
    if u.grid.kind == "torus":
        ax = u.ux * kern.dx(v.ux) + u.uy * kern.dy(v.ux)
        ay = u.ux * kern.dx(v.uy) + u.uy * kern.dy(v.uy)
    else:
        gx, gy = kern.grad(v.ux, v.bc)
        ax = u.ux * gx + u.uy * gy
        gx, gy = kern.grad(v.uy, v.bc)
        ay = u.ux * gx + u.uy * gy
    return VectorField(u.grid, ax, ay)


def h1_seminorm_sq(obj) -> float:
    """Squared L2 norm of the full gradient (each component for vectors)."""
    if isinstance(obj, ScalarField):
        g = gradient(obj)
        return float(np.sum((g.ux**2 + g.uy**2) * obj.grid.weights))
    gx = gradient(ScalarField(obj.grid, obj.ux, bc=obj.bc))
    gy = gradient(ScalarField(obj.grid, obj.uy, bc=obj.bc))
    dens = gx.ux**2 + gx.uy**2 + gy.ux**2 + gy.uy**2
    return float(np.sum(dens * obj.grid.weights))


def normal_derivative(f: ScalarField) -> BoundaryTrace:
    """Outward normal derivative of f on the boundary circle."""
    return boundary_normal_trace(gradient(f))


def tangential_derivative(tr: BoundaryTrace) -> BoundaryTrace:
    """Arclength derivative along the boundary circle.

    Spectral in the angle, so the only error is in the trace values
    themselves; the unpaired Nyquist mode is dropped as in every other
    odd derivative here.
    """
    grid = tr.grid
    n = grid.n_angular
    k = np.fft.fftfreq(n, d=1.0 / n)
    fh = np.fft.fft(tr.values)
    if n % 2 == 0:
        fh[n // 2] = 0.0
    vals = np.fft.ifft(1j * k * fh).real / grid.radius
    return BoundaryTrace(grid, vals)


def wall_vorticity(u: VectorField) -> BoundaryTrace:
    """Vorticity trace on the circle, from one-sided edge stencils.

    The reflected ghost of the homogeneous-Dirichlet tag assumes odd
    symmetry about the wall, which generic velocity fields do not have;
    differentiating through it costs an order at the last ring.  The
    trace is therefore always taken through the untagged closure, which
    keeps it second order.
    """
    untagged = VectorField(u.grid, u.ux, u.uy, bc=BC_NONE)
    return boundary_trace(curl2d(untagged))
