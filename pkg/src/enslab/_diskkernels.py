"""Fourier-in-angle, finite-difference-in-radius kernels for the disk.

Scalar fields are transformed along the angular axis and every radial
operation acts mode by mode on coefficient arrays of shape
``(n_angular, n_radial)``.  The radial grid is offset half a cell from the
origin, which has two welcome consequences:

* the conservative form of the radial Laplacian, built from fluxes
  ``r_{j+1/2} (f_{j+1} - f_j)/h`` at cell faces, never references a node
  at r = 0 because the innermost face carries weight ``r_{-1/2} = 0``;
* first derivatives at the innermost ring close with the parity rule
  ``f_m(-r) = (-1)^m f_m(r)`` satisfied by the Fourier coefficients of any
  smooth field in the plane.

Edge closures at the boundary ring depend on the field's boundary tag:
``dirichlet0`` uses a reflected ghost value (the boundary circle lies half
a cell beyond the last ring, so the ghost is minus the last value), and
untagged fields fall back to one-sided stencils.

Two realizations of the Neumann Laplacian coexist on purpose.  The strong
conservative form reproduces radially polynomial solutions exactly and
keeps the discrete mean under heat flow to machine precision.  The weak
form, with stiffness ``K = G^T W G`` built from the collocated gradient G
and the quadrature weights W, makes the Helmholtz-Hodge splitting exactly
W-orthogonal; it is what the projection machinery uses.  The unpaired
Nyquist angular mode is dropped from odd derivatives (standard for real
spectral differentiation) and kept in even ones.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ._banded import BatchedBandedLU, tridiagonal_lu


class DiskKernels:
    def __init__(self, grid):
        if grid.n_radial < 6:
            raise ValueError("disk kernels need at least 6 radial rings")
        self.grid = grid
        n, N = grid.shape
        self.n = n
        self.N = N
        self.h = grid.dr
        self.r = grid.r                      # ring radii, (N,)
        self.rf = grid.dr * np.arange(N + 1)  # face radii, rf[j] = r_{j-1/2}
        self.wr = self.r * self.h            # radial quadrature weight (no dtheta)
        self.modes = np.rint(np.fft.fftfreq(n, 1.0 / n)).astype(int)
        mt = self.modes.astype(float)
        mt[np.abs(self.modes) == n // 2] = 0.0   # unpaired Nyquist mode
        self.mtilde = mt
        self.parity = np.where(self.modes % 2 == 0, 1.0, -1.0)
        th = grid.theta
        self._cos = np.cos(th)[:, None]
        self._sin = np.sin(th)[:, None]
        # factorization caches
        self._dirichlet_lu: dict[float, BatchedBandedLU] = {}
        self._heat_lu: dict[float, BatchedBandedLU] = {}
        self._neumann_lu: BatchedBandedLU | None = None
        self._neumann_eig = None
        self._weak_lu: BatchedBandedLU | None = None
        self._weak_eig: dict[int, tuple] = {}
        self._weak_dense: dict[int, np.ndarray] = {}

    # ------------------------------------------------------------------
    # transforms

    def to_modes(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft(values, axis=0)

    def to_phys(self, C: np.ndarray) -> np.ndarray:
        return np.fft.ifft(C, axis=0).real

    # ------------------------------------------------------------------
    # per-mode radial derivative and its transpose

    def dr(self, C: np.ndarray, bc: str) -> np.ndarray:
        h = self.h
        out = np.empty_like(C)
        out[:, 1:-1] = (C[:, 2:] - C[:, :-2]) / (2 * h)
        out[:, 0] = (C[:, 1] - self.parity * C[:, 0]) / (2 * h)
        if bc == "dirichlet0":
            out[:, -1] = (-C[:, -1] - C[:, -2]) / (2 * h)
        else:
            out[:, -1] = (3 * C[:, -1] - 4 * C[:, -2] + C[:, -3]) / (2 * h)
        return out

    def dr_transpose(self, Y: np.ndarray) -> np.ndarray:
        """Plain transpose of the per-mode dr matrices ('none' closure)."""
        h = self.h
        out = np.zeros_like(Y)
        out[:, 0:-2] -= Y[:, 1:-1] / (2 * h)
        out[:, 2:] += Y[:, 1:-1] / (2 * h)
        out[:, 0] -= self.parity * Y[:, 0] / (2 * h)
        out[:, 1] += Y[:, 0] / (2 * h)
        out[:, -1] += 3 * Y[:, -1] / (2 * h)
        out[:, -2] -= 4 * Y[:, -1] / (2 * h)
        out[:, -3] += Y[:, -1] / (2 * h)
        return out

    def dtheta(self, C: np.ndarray) -> np.ndarray:
        return (1j * self.mtilde)[:, None] * C

    # ------------------------------------------------------------------
    # per-mode Laplacian (conservative flux form)

    def lap(self, C: np.ndarray, bc: str) -> np.ndarray:
        h, r, rf = self.h, self.r, self.rf
        F = np.empty(C.shape[:-1] + (self.N + 1,), dtype=C.dtype)
        F[:, 0] = 0.0
        F[:, 1:-1] = rf[1:-1] * (C[:, 1:] - C[:, :-1]) / h
        if bc == "dirichlet0":
            F[:, -1] = rf[-1] * (-2.0 * C[:, -1]) / h
        else:
            F[:, -1] = rf[-1] * (3 * C[:, -1] - 6 * C[:, -2]
                                 + 4 * C[:, -3] - C[:, -4]) / h
        m2 = (self.modes.astype(float) ** 2)[:, None]
        return (F[:, 1:] - F[:, :-1]) / (r * h) - m2 * C / r**2

    # ------------------------------------------------------------------
    # physical-space differential operators (Cartesian components)

    def _polar_to_cart(self, gr, gt):
        return (self._cos * gr - self._sin * gt,
                self._cos * gt + self._sin * gr)

    def grad(self, values: np.ndarray, bc: str):
        C = self.to_modes(values)
        gr = self.to_phys(self.dr(C, bc))
        gt = self.to_phys(self.dtheta(C)) / self.r
        return self._polar_to_cart(gr, gt)

    def dx(self, values: np.ndarray, bc: str) -> np.ndarray:
        gx, _ = self.grad(values, bc)
        return gx

    def dy(self, values: np.ndarray, bc: str) -> np.ndarray:
        _, gy = self.grad(values, bc)
        return gy

    def div(self, ux: np.ndarray, uy: np.ndarray, bc: str) -> np.ndarray:
        gxx, gxy = self.grad(ux, bc)
        gyx, gyy = self.grad(uy, bc)
        return gxx + gyy

    def curl(self, ux: np.ndarray, uy: np.ndarray, bc: str) -> np.ndarray:
        _, gxy = self.grad(ux, bc)
        gyx, _ = self.grad(uy, bc)
        return gyx - gxy

    def scalar_laplacian(self, values: np.ndarray, bc: str) -> np.ndarray:
        return self.to_phys(self.lap(self.to_modes(values), bc))

    # ------------------------------------------------------------------
    # strong conservative solves

    def _factor(self, bc: str, lam: float) -> BatchedBandedLU:
        # systems (lam - L) x = rhs
        n, N, h, r, rf = self.n, self.N, self.h, self.r, self.rf
        m2 = (self.modes.astype(float) ** 2)[:, None]
        sub = np.broadcast_to(rf[:-1] / (r * h * h), (n, N)).copy()
        sup = np.broadcast_to(rf[1:] / (r * h * h), (n, N)).copy()
        diag = -(rf[:-1] + rf[1:]) / (r * h * h) - m2 / r**2
        if bc == "dirichlet0":
            diag = diag.copy()
            diag[:, -1] = -(2 * rf[-1] + rf[-2]) / (r[-1] * h * h) - m2[:, 0] / r[-1]**2
        elif bc == "neumann":
            diag = diag.copy()
            diag[:, -1] = -rf[-2] / (r[-1] * h * h) - m2[:, 0] / r[-1]**2
        else:
            raise ValueError(bc)
        sup = sup.copy()
        sup[:, -1] = 0.0
        A_sub, A_diag, A_sup = -sub, lam - diag, -sup
        if bc == "neumann" and lam == 0.0:
            # patch the singular m = 0 system; its solution comes from the
            # dense eigendecomposition instead
            A_sub[0, :] = 0.0
            A_sup[0, :] = 0.0
            A_diag[0, :] = 1.0
        return tridiagonal_lu(A_sub, A_diag, A_sup)

    def _neumann_mode0_eig(self):
        if self._neumann_eig is None:
            N, h, r, rf, wr = self.N, self.h, self.r, self.rf, self.wr
            A0 = np.zeros((N, N))
            for j in range(N):
                if j > 0:
                    A0[j, j - 1] = -rf[j] / (r[j] * h * h)
                A0[j, j] = (rf[j] + rf[j + 1]) / (r[j] * h * h)
                if j + 1 < N:
                    A0[j, j + 1] = -rf[j + 1] / (r[j] * h * h)
            A0[N - 1, N - 1] = rf[N - 1] / (r[N - 1] * h * h)
            lam, V = scipy.linalg.eigh(wr[:, None] * A0, np.diag(wr))
            self._neumann_eig = (lam, V)
        return self._neumann_eig

    def solve_dirichlet(self, F: np.ndarray, Gd: np.ndarray | None, lam: float) -> np.ndarray:
        """Per-mode solve of (lam - Lap) q = F with q = Gd on the circle."""
        key = float(lam)
        if key not in self._dirichlet_lu:
            self._dirichlet_lu[key] = self._factor("dirichlet0", key)
        rhs = np.array(F, dtype=complex, copy=True)
        if Gd is not None:
            # ghost value 2 g - q_{N-1}; the known part joins the rhs with
            # the sign of -Lap
            rhs[:, -1] += 2.0 * self.rf[-1] / (self.r[-1] * self.h**2) * Gd
        return self._dirichlet_lu[key].solve(rhs)

    def solve_neumann_strong(self, F: np.ndarray, Gn: np.ndarray | None) -> np.ndarray:
        """Per-mode solve of Lap q = F with dq/dr = Gn on the circle.

        The output is W-mean-zero; any incompatible component of the m = 0
        equation is projected out (callers decide whether to reject it).
        """
        if self._neumann_lu is None:
            self._neumann_lu = self._factor("neumann", 0.0)
        rhs = np.array(-F, dtype=complex, copy=True)   # solve (0 - L) q = -F
        if Gn is not None:
            rhs[:, -1] += self.rf[-1] / (self.r[-1] * self.h) * Gn
        sol = self._neumann_lu.solve(rhs)
        lam, V = self._neumann_mode0_eig()
        b0 = self.wr * rhs[0]
        coef = V.T @ b0
        coef[0] = 0.0
        coef[1:] /= lam[1:]
        sol[0] = V @ coef
        return sol

    def neumann_compat_defect(self, F: np.ndarray, Gn: np.ndarray | None) -> float:
        """Quadrature mismatch between the source integral and boundary flux."""
        vol = float(np.sum(self.wr * F[0].real)) * self.grid.dtheta
        flux = 0.0
        if Gn is not None:
            flux = float(self.grid.radius * Gn[0].real) * self.grid.dtheta
        return vol - flux

    def heat_neumann(self, PHI: np.ndarray, dt: float) -> np.ndarray:
        """One implicit Euler step of the Neumann heat flow, per mode."""
        key = float(dt)
        if key not in self._heat_lu:
            # (I - dt L) with the homogeneous flux closure
            lu = self._factor("neumann", 1.0 / key)
            # _factor built (1/dt - L); rescale is easier done by solving
            # (1/dt - L) q = PHI/dt, which is identical to (I - dt L) q = PHI
            self._heat_lu[key] = lu
        return self._heat_lu[key].solve(np.asarray(PHI, dtype=complex) / key)

    # ------------------------------------------------------------------
    # weak (Galerkin) Neumann machinery for the Hodge splitting

    def _dr_dense(self, parity: float) -> np.ndarray:
        N, h = self.N, self.h
        D = np.zeros((N, N))
        for j in range(1, N - 1):
            D[j, j - 1] = -1 / (2 * h)
            D[j, j + 1] = 1 / (2 * h)
        D[0, 0] = -parity / (2 * h)
        D[0, 1] = 1 / (2 * h)
        D[N - 1, N - 1] = 3 / (2 * h)
        D[N - 1, N - 2] = -4 / (2 * h)
        D[N - 1, N - 3] = 1 / (2 * h)
        return D

    def _weak_stiffness_dense(self, parity_idx: int) -> np.ndarray:
        if parity_idx not in self._weak_dense:
            D = self._dr_dense(1.0 if parity_idx == 0 else -1.0)
            self._weak_dense[parity_idx] = D.T @ (self.wr[:, None] * D)
        return self._weak_dense[parity_idx]

    def _weak_factor(self) -> BatchedBandedLU:
        if self._weak_lu is None:
            n, N = self.n, self.N
            bands = np.zeros((5, n, N))
            for pidx in (0, 1):
                K = self._weak_stiffness_dense(pidx)
                rows = np.nonzero((self.modes % 2) == pidx)[0]
                for d in range(-2, 3):
                    diagvals = np.diagonal(K, offset=d)
                    if d >= 0:
                        bands[2 + d, rows, :N - d] = diagvals
                    else:
                        bands[2 + d, rows, -d:] = diagvals
            mt2 = self.mtilde**2
            bands[2] += mt2[:, None] * (self.h / self.r)[None, :]
            singular = np.nonzero(self.mtilde == 0.0)[0]
            bands[:, singular, :] = 0.0
            bands[2, singular, :] = 1.0
            self._weak_lu = BatchedBandedLU(bands, 2, 2)
        return self._weak_lu

    def _weak_mode_eig(self, row: int):
        pidx = int(self.modes[row] % 2)
        if pidx not in self._weak_eig:
            K = self._weak_stiffness_dense(pidx)
            lam, V = scipy.linalg.eigh(K, np.diag(self.wr))
            self._weak_eig[pidx] = (lam, V)
        return self._weak_eig[pidx]

    def weak_rhs_from_vector(self, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        """Dual vector G^T W u of the collocated gradient, per mode."""
        ur = self._cos * ux + self._sin * uy
        ut = self._cos * uy - self._sin * ux
        B = self.dr_transpose(self.to_modes(self.wr * ur))
        B -= (1j * self.mtilde)[:, None] * self.h * self.to_modes(ut)
        return B

    def solve_weak_neumann(self, B: np.ndarray) -> np.ndarray:
        """Solve K q = B mode by mode; the result is W-mean-zero."""
        lu = self._weak_factor()
        Q = lu.solve(np.asarray(B, dtype=complex))
        for row in np.nonzero(self.mtilde == 0.0)[0]:
            lam, V = self._weak_mode_eig(int(row))
            coef = V.T @ B[row]
            coef[0] = 0.0
            nz = lam > lam[-1] * 1e-12
            nz[0] = False
            coef[nz] /= lam[nz]
            coef[~nz] = 0.0
            Q[row] = V @ coef
        return Q

    def weak_stiffness_apply(self, Q: np.ndarray) -> np.ndarray:
        """Apply K = G^T W G mode by mode (used by residual checks)."""
        DQ = self.dr(Q, "none")
        B = self.dr_transpose(self.wr * DQ)
        B += (self.mtilde**2)[:, None] * (self.h / self.r) * Q
        return B
