"""Spectral kernels for the periodic square.

Everything is diagonal in the 2-d Fourier basis.  One convention matters:
the first-derivative symbols zero out the unpaired Nyquist frequency, and
the Laplacian symbol used in solves is assembled from those same symbols,
``-(kx'^2 + ky'^2)``, rather than from the full wavenumbers.  That choice
makes the discrete gradient, divergence and Laplacian commute exactly and
keeps integration-by-parts identities at machine precision, which the
projection and energy bookkeeping rely on.  (The pointwise Laplacian used
for applying operators to data is the same one, so apply and solve agree.)
"""

from __future__ import annotations

import numpy as np


class TorusKernels:
    def __init__(self, grid):
        self.grid = grid
        n0, n1 = grid.shape
        L = grid.period
        kx = 2 * np.pi * np.fft.fftfreq(n0, d=L / n0)
        ky = 2 * np.pi * np.fft.fftfreq(n1, d=L / n1)
        kxp = kx.copy()
        kyp = ky.copy()
        if n0 % 2 == 0:
            kxp[n0 // 2] = 0.0
        if n1 % 2 == 0:
            kyp[n1 // 2] = 0.0
        self.kx = kxp[:, None]
        self.ky = kyp[None, :]
        self.k2 = self.kx**2 + self.ky**2
        # the zeroed-Nyquist symbols leave k2 = 0 at the mean mode and at
        # pure Nyquist combinations; those live in the null space of the
        # discrete Laplacian and are dropped by the singular solves
        self._sing = self.k2 == 0.0
        self._k2safe = np.where(self._sing, 1.0, self.k2)

    def to_modes(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft2(values)

    def to_phys(self, C: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(C).real

    def dx(self, values: np.ndarray) -> np.ndarray:
        return self.to_phys(1j * self.kx * self.to_modes(values))

    def dy(self, values: np.ndarray) -> np.ndarray:
        return self.to_phys(1j * self.ky * self.to_modes(values))

    def grad(self, values: np.ndarray):
        C = self.to_modes(values)
        return self.to_phys(1j * self.kx * C), self.to_phys(1j * self.ky * C)

    def div(self, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        return self.to_phys(1j * self.kx * self.to_modes(ux)
                            + 1j * self.ky * self.to_modes(uy))

    def curl(self, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        return self.to_phys(1j * self.kx * self.to_modes(uy)
                            - 1j * self.ky * self.to_modes(ux))

    def scalar_laplacian(self, values: np.ndarray) -> np.ndarray:
        return self.to_phys(-self.k2 * self.to_modes(values))

    def solve_poisson_meanzero(self, f: np.ndarray) -> np.ndarray:
        """Mean-zero solution of Lap q = f; the f-mean is ignored."""
        C = self.to_modes(f)
        C = np.where(self._sing, 0.0, -C / self._k2safe)
        return self.to_phys(C)

    def solve_helmholtz(self, f: np.ndarray, lam: float) -> np.ndarray:
        """Solve (lam - Lap) q = f for lam > 0."""
        return self.to_phys(self.to_modes(f) / (lam + self.k2))

    def heat_step(self, f: np.ndarray, dt: float) -> np.ndarray:
        return self.to_phys(self.to_modes(f) / (1.0 + dt * self.k2))

    def leray(self, ux: np.ndarray, uy: np.ndarray):
        """Return (P u, grad potential) with the splitting exact in L2."""
        UX, UY = self.to_modes(ux), self.to_modes(uy)
        D = 1j * self.kx * UX + 1j * self.ky * UY
        # q solves Lap q = div u with zero mean, and grad q is subtracted
        QC = np.where(self._sing, 0.0, -D / self._k2safe)
        gx = self.to_phys(1j * self.kx * QC)
        gy = self.to_phys(1j * self.ky * QC)
        return ux - gx, uy - gy, self.to_phys(QC), gx, gy
