"""Batched banded LU solves without pivoting.

The per-Fourier-mode radial systems all share one band structure and are
diagonally dominant or symmetric positive definite, so an unpivoted LU is
stable and can be swept across all modes at once with vectorized numpy
arithmetic.  Band storage follows the convention

    bands[p + d, k, j] = A_k[j, j + d],   -p <= d <= q,

for the k-th system in the batch; entries outside the matrix are ignored.
"""

from __future__ import annotations

import numpy as np


class BatchedBandedLU:
    """Factor a batch of (p, q)-banded matrices once, solve many times."""

    def __init__(self, bands: np.ndarray, p: int, q: int):
        bands = np.array(bands, copy=True)
        if bands.ndim != 3 or bands.shape[0] != p + q + 1:
            raise ValueError("bands must have shape (p+q+1, batch, n)")
        self.p = p
        self.q = q
        self.n = bands.shape[2]
        n, P, Q = self.n, p, q
        # In-place unpivoted LU on the band storage.  The multiplier for
        # row k+i against pivot row k overwrites the entry A[k+i, k].
        for k in range(n - 1):
            piv = bands[P, :, k]
            for i in range(1, min(P, n - 1 - k) + 1):
                m = bands[P - i, :, k + i] / piv
                bands[P - i, :, k + i] = m
                for j in range(1, min(Q, n - 1 - k) + 1):
                    # entry (row k+i, col k+j) sits at offset j-i
                    if -P <= j - i <= Q:
                        bands[P + j - i, :, k + i] -= m * bands[P + j, :, k]
        self.bands = bands

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the batch; rhs has shape (batch, n)."""
        if rhs.shape[-1] != self.n:
            raise ValueError("rhs length mismatch")
        P, Q, n = self.p, self.q, self.n
        bands = self.bands
        x = np.array(rhs, dtype=np.result_type(rhs.dtype, bands.dtype), copy=True)
        for i in range(1, n):
            for d in range(1, min(P, i) + 1):
                x[:, i] -= bands[P - d, :, i] * x[:, i - d]
        for i in range(n - 1, -1, -1):
            for d in range(1, min(Q, n - 1 - i) + 1):
                x[:, i] -= bands[P + d, :, i] * x[:, i + d]
            x[:, i] /= bands[P, :, i]
        return x


def tridiagonal_lu(sub: np.ndarray, diag: np.ndarray, sup: np.ndarray) -> BatchedBandedLU:
    """Convenience wrapper for batched tridiagonal systems.

    ``sub[k, j]`` multiplies x[j-1] in row j (sub[:, 0] ignored) and
    ``sup[k, j]`` multiplies x[j+1] (sup[:, -1] ignored).
    """
    diag = np.asarray(diag)
    bands = np.zeros((3,) + diag.shape, dtype=diag.dtype)
    bands[0, :, 1:] = np.asarray(sub)[:, 1:]
    bands[1] = diag
    bands[2, :, :-1] = np.asarray(sup)[:, :-1]
    return BatchedBandedLU(bands, 1, 1)
