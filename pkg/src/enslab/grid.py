"""Structured grids for the unit disk and the periodic square.

Two node layouts are supported:

* ``disk``: tensor product of an equispaced angular grid (periodic, even
  count) and a radial grid offset by half a cell, ``r_j = (j + 1/2) h`` with
  ``h = R / n_radial``.  No node sits at the origin and none sits on the
  boundary circle; the boundary is half a cell beyond the last ring.
* ``torus``: equispaced nodes on ``[0, L) x [0, L)``.

Quadrature is trapezoidal in the angle (exact for trigonometric
polynomials) and midpoint-with-r-weight in radius.  Because the radial
weight is linear in r, the midpoint rule integrates it exactly and the
weights sum to the disk area pi R^2 to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    kind: str                 # 'disk' or 'torus'
    shape: tuple[int, int]    # (n_angular, n_radial) or (n_x, n_y)
    extent: float             # disk radius R, or torus period L

    def __post_init__(self):
        if self.kind not in ("disk", "torus"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        n0, n1 = self.shape
        if n0 < 4 or n1 < 2:
            raise ValueError(f"grid {self.shape} is too coarse")
        if self.kind == "disk" and n0 % 2 != 0:
            raise ValueError("angular node count must be even")
        if not self.extent > 0:
            raise ValueError("extent must be positive")

    # -- disk accessors -------------------------------------------------

    @property
    def radius(self) -> float:
        assert self.kind == "disk"
        return self.extent

    @property
    def n_angular(self) -> int:
        return self.shape[0]

    @property
    def n_radial(self) -> int:
        return self.shape[1]

    @cached_property
    def theta(self) -> np.ndarray:
        assert self.kind == "disk"
        return 2.0 * np.pi * np.arange(self.n_angular) / self.n_angular

    @cached_property
    def r(self) -> np.ndarray:
        assert self.kind == "disk"
        h = self.radius / self.n_radial
        return (np.arange(self.n_radial) + 0.5) * h

    @property
    def dr(self) -> float:
        return self.radius / self.n_radial

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n_angular

    # -- torus accessors ------------------------------------------------

    @property
    def period(self) -> float:
        assert self.kind == "torus"
        return self.extent

    @cached_property
    def x1d(self) -> np.ndarray:
        assert self.kind == "torus"
        return self.period * np.arange(self.shape[0]) / self.shape[0]

    @cached_property
    def y1d(self) -> np.ndarray:
        assert self.kind == "torus"
        return self.period * np.arange(self.shape[1]) / self.shape[1]

    # -- shared geometry -------------------------------------------------

    @cached_property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian node coordinates, shape ``self.shape`` each."""
        if self.kind == "disk":
            th = self.theta[:, None]
            rr = self.r[None, :]
            return rr * np.cos(th) * np.ones_like(th), rr * np.sin(th) * np.ones_like(th)
        X = np.broadcast_to(self.x1d[:, None], self.shape).copy()
        Y = np.broadcast_to(self.y1d[None, :], self.shape).copy()
        return X, Y

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights per node; sums to the domain area exactly."""
        if self.kind == "disk":
            w = self.r * self.dr * self.dtheta
            return np.broadcast_to(w[None, :], self.shape).copy()
        cell = (self.period / self.shape[0]) * (self.period / self.shape[1])
        return np.full(self.shape, cell)

    @property
    def area(self) -> float:
        if self.kind == "disk":
            return np.pi * self.radius**2
        return self.period**2

    @cached_property
    def boundary_s(self) -> np.ndarray:
        """Arclength positions of the boundary nodes (disk only)."""
        assert self.kind == "disk"
        return self.radius * self.theta

    @cached_property
    def boundary_kappa(self) -> np.ndarray:
        """Boundary curvature, identically 1/R on the circle."""
        assert self.kind == "disk"
        return np.full(self.n_angular, 1.0 / self.radius)

    @cached_property
    def _kernels(self):
        # Local import keeps grid.py free of solver machinery.
        if self.kind == "disk":
            from ._diskkernels import DiskKernels
            return DiskKernels(self)
        from ._toruskernels import TorusKernels
        return TorusKernels(self)

    def __repr__(self):
        n0, n1 = self.shape
        return f"Grid({self.kind}, {n0}x{n1}, extent={self.extent:g})"


def disk_grid(n_angular: int, n_radial: int, radius: float = 1.0) -> Grid:
    return Grid("disk", (int(n_angular), int(n_radial)), float(radius))


def torus_grid(n_x: int, n_y: int | None = None, period: float = 2.0 * np.pi) -> Grid:
    if n_y is None:
        n_y = n_x
    return Grid("torus", (int(n_x), int(n_y)), float(period))
