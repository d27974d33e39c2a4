"""Field containers and quadrature pairings.

Vector fields are stored in Cartesian components on every grid; all polar
metric factors live inside the differential operators.  Fields carry two
pieces of metadata: a ``mean_zero`` hint for scalars produced by the
Neumann solvers, and a boundary-condition tag ``bc`` that selects the edge
closure used by the radial stencils.  ``bc='dirichlet0'`` marks a field
that vanishes on the boundary circle; anything else is differentiated with
one-sided interior stencils.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Grid, GridMismatchError

BC_NONE = "none"
BC_DIRICHLET0 = "dirichlet0"
_ALLOWED_BC = (BC_NONE, BC_DIRICHLET0)


def _check_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise GridMismatchError(
            f"field shape {values.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite entries")
    return values


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray
    mean_zero: bool = False
    bc: str = BC_NONE

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values))
        if self.bc not in _ALLOWED_BC:
            raise ValueError(f"unknown bc tag {self.bc!r}")

    def with_values(self, values: np.ndarray, **meta) -> "ScalarField":
        return replace(self, values=values, **meta)

    def __add__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values,
                           mean_zero=self.mean_zero and other.mean_zero,
                           bc=_join_bc(self.bc, other.bc))

    def __sub__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values,
                           mean_zero=self.mean_zero and other.mean_zero,
                           bc=_join_bc(self.bc, other.bc))

    def __mul__(self, a: float):
        return ScalarField(self.grid, self.values * float(a),
                           mean_zero=self.mean_zero, bc=self.bc)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    ux: np.ndarray
    uy: np.ndarray
    bc: str = BC_NONE

    def __post_init__(self):
        object.__setattr__(self, "ux", _check_values(self.grid, self.ux))
        object.__setattr__(self, "uy", _check_values(self.grid, self.uy))
        if self.bc not in _ALLOWED_BC:
            raise ValueError(f"unknown bc tag {self.bc!r}")

    def with_components(self, ux, uy, **meta) -> "VectorField":
        return replace(self, ux=ux, uy=uy, **meta)

    def __add__(self, other):
        _same_grid(self, other)
        return VectorField(self.grid, self.ux + other.ux, self.uy + other.uy,
                           bc=_join_bc(self.bc, other.bc))

    def __sub__(self, other):
        _same_grid(self, other)
        return VectorField(self.grid, self.ux - other.ux, self.uy - other.uy,
                           bc=_join_bc(self.bc, other.bc))

    def __mul__(self, a: float):
        return VectorField(self.grid, self.ux * float(a), self.uy * float(a), bc=self.bc)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


@dataclass(frozen=True)
class BoundaryTrace:
    """Values sampled on the boundary circle, one per angular node."""

    grid: Grid
    values: np.ndarray
    s: np.ndarray = field(default=None)       # arclength positions
    kappa: np.ndarray = field(default=None)   # boundary curvature

    def __post_init__(self):
        if self.grid.kind != "disk":
            raise GridMismatchError("boundary traces exist only on the disk")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_angular,):
            raise GridMismatchError(
                f"trace length {v.shape} does not match {self.grid.n_angular} boundary nodes")
        object.__setattr__(self, "values", v)
        if self.s is None:
            object.__setattr__(self, "s", self.grid.boundary_s)
        if self.kappa is None:
            object.__setattr__(self, "kappa", self.grid.boundary_kappa)


def _same_grid(a, b):
    if a.grid is not b.grid and a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")


def _join_bc(a: str, b: str) -> str:
    return a if a == b else BC_NONE


# -- quadrature pairings ------------------------------------------------

def l2_inner(a, b) -> float:
    """Quadrature inner product of two scalar or two vector fields."""
    _same_grid(a, b)
    w = a.grid.weights
    if isinstance(a, ScalarField):
        return float(np.sum(w * a.values * b.values))
    return float(np.sum(w * (a.ux * b.ux + a.uy * b.uy)))


def l2_norm(a) -> float:
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))


def mean_value(f: ScalarField) -> float:
    return l2_inner(f, ScalarField(f.grid, np.ones(f.grid.shape))) / f.grid.area


def max_abs(a) -> float:
    if isinstance(a, ScalarField):
        return float(np.max(np.abs(a.values)))
    return float(np.sqrt(np.max(a.ux**2 + a.uy**2)))


# -- boundary restriction ----------------------------------------------

def _edge_extrapolate(values: np.ndarray) -> np.ndarray:
    # Linear extrapolation from the last two rings to r = R; the nodes sit
    # at R - h/2 and R - 3h/2, so the boundary value is (3 f[-1] - f[-2])/2.
    return 1.5 * values[:, -1] - 0.5 * values[:, -2]


def boundary_trace(f: ScalarField) -> BoundaryTrace:
    """Restrict a scalar field to the boundary circle."""
    if f.grid.kind != "disk":
        raise GridMismatchError("the torus has no boundary")
    return BoundaryTrace(f.grid, _edge_extrapolate(f.values))


def boundary_normal_trace(u: VectorField) -> BoundaryTrace:
    """Restrict the outward normal component u . nu to the boundary."""
    if u.grid.kind != "disk":
        raise GridMismatchError("the torus has no boundary")
    th = u.grid.theta
    ur = u.ux * np.cos(th)[:, None] + u.uy * np.sin(th)[:, None]
    return BoundaryTrace(u.grid, _edge_extrapolate(ur))


def boundary_tangential_trace(u: VectorField) -> BoundaryTrace:
    """Restrict the tangential component u . tau, tau = nu-perp."""
    if u.grid.kind != "disk":
        raise GridMismatchError("the torus has no boundary")
    th = u.grid.theta
    ut = -u.ux * np.sin(th)[:, None] + u.uy * np.cos(th)[:, None]
    return BoundaryTrace(u.grid, _edge_extrapolate(ut))


def boundary_integral(t: BoundaryTrace) -> float:
    """Trapezoidal line integral over the boundary circle."""
    return float(np.sum(t.values) * t.grid.radius * t.grid.dtheta)


def boundary_max(u: VectorField) -> float:
    """Largest boundary speed, from both trace components."""
    tn = boundary_normal_trace(u).values
    tt = boundary_tangential_trace(u).values
    return float(np.sqrt(np.max(tn**2 + tt**2)))
