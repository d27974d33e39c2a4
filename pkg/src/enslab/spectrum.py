"""Matrix realizations and spectral diagnostics of the velocity operator.

Every linear operator used here commutes with grid rotations (disk) or
translations (torus), so it block-diagonalizes over angular sectors.  On
the disk the right variables are the complex combinations w = ux + i uy
and z = ux - i uy: sector m couples the angular coefficient of w at
wavenumber m + 1 with that of z at m - 1, giving one dense block of size
2 n_radial per sector.  On the torus each Fourier wavevector carries a
2 x 2 block.  Blocks are assembled by probing the actual operator with
one field per radial index and component type, batched over sectors, so
the matrix representation agrees with the operator application to solver
accuracy by construction.

The assembled blocks feed four consumers: smallest-magnitude eigenvalues
of the velocity operator, reference spectra from restrictions to the
discrete stream-function and gradient subspaces, per-block inverse
applications, and dense brute-force cross-checks at toy resolutions.
Quadratic-form fits (coercivity constants, negativity search) run over
an explicit subspace of windowed polynomial modes enriched with
wall-layer fields, since the sign structure of the quadratic form lives
in thin boundary layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import calculus
from . import operators
from .fields import (BC_DIRICHLET0, ScalarField, VectorField, l2_inner,
                     l2_norm)
from .grid import Grid

_DENSE_LIMIT = 64 * 32          # largest node count for brute-force assembly
_EIG_RESIDUAL_TOL = 1e-6
_GRAM_TRUNCATION = 1e-10


# ----------------------------------------------------------------------
# sector transforms

def _to_sector_coeffs(grid: Grid, ux: np.ndarray, uy: np.ndarray) -> dict:
    """Angular-sector coordinates of a (possibly complex) vector field."""
    nth, nr = grid.shape
    W = np.fft.fft(ux + 1j * uy, axis=0) / nth
    Z = np.fft.fft(ux - 1j * uy, axis=0) / nth
    out = {}
    for m in _sector_range(grid):
        out[m] = np.concatenate([W[(m + 1) % nth], Z[(m - 1) % nth]])
    return out


def _from_sector_coeffs(grid: Grid, coeffs: dict):
    nth, nr = grid.shape
    W = np.zeros((nth, nr), complex)
    Z = np.zeros((nth, nr), complex)
    for m, x in coeffs.items():
        W[(m + 1) % nth] += x[:nr]
        Z[(m - 1) % nth] += x[nr:]
    w = np.fft.ifft(W * nth, axis=0)
    z = np.fft.ifft(Z * nth, axis=0)
    return 0.5 * (w + z), -0.5j * (w - z)


def _sector_range(grid: Grid) -> range:
    """Sectors kept clear of the angular Nyquist line."""
    half = grid.shape[0] // 2
    return range(-(half - 2), half - 1)


def _apply_complex(grid: Grid, apply_fn, ux: np.ndarray, uy: np.ndarray):
    """Run a real linear field operator on a complex-valued field."""
    re = apply_fn(VectorField(grid, ux.real, uy.real, bc=BC_DIRICHLET0))
    im = apply_fn(VectorField(grid, ux.imag, uy.imag, bc=BC_DIRICHLET0))
    return re.ux + 1j * im.ux, re.uy + 1j * im.uy


def _probe_sector_blocks(grid: Grid, apply_fn) -> dict:
    """Assemble one dense block per angular sector by batched probing.

    Distinct sectors read and write disjoint angular bins, so a single
    probe can carry one radial basis vector in every sector at once;
    2 n_radial probes recover every block column.
    """
    nth, nr = grid.shape
    sectors = list(_sector_range(grid))
    blocks = {m: np.zeros((2 * nr, 2 * nr), dtype=complex) for m in sectors}
    th = grid.theta
    wave = {m: np.exp(1j * ((m + 1) % nth) * th) for m in sectors}
    anti = {m: np.exp(1j * ((m - 1) % nth) * th) for m in sectors}
    for j in range(nr):
        for typ in (0, 1):
            W = np.zeros((nth, nr), complex)
            Z = np.zeros((nth, nr), complex)
            if typ == 0:
                for m in sectors:
                    W[:, j] += wave[m]
            else:
                for m in sectors:
                    Z[:, j] += anti[m]
            ux = 0.5 * (W + Z)
            uy = -0.5j * (W - Z)
            aux, auy = _apply_complex(grid, apply_fn, ux, uy)
            Wh = np.fft.fft(aux + 1j * auy, axis=0) / nth
            Zh = np.fft.fft(aux - 1j * auy, axis=0) / nth
            col = typ * nr + j
            for m in sectors:
                blocks[m][:nr, col] = Wh[(m + 1) % nth]
                blocks[m][nr:, col] = Zh[(m - 1) % nth]
    return blocks


def _probe_torus_blocks(grid: Grid, apply_fn) -> dict:
    """One 2 x 2 block per torus wavevector, from two probe fields.

    A real probe with random nonzero content at every non-Nyquist bin
    recovers one block column per wavevector in a single application.
    """
    n0, n1 = grid.shape
    rng = np.random.default_rng(1799)
    blocks = {}
    cols = []
    zero = np.zeros((n0, n1))
    for comp in range(2):
        vals = np.fft.ifft2(
            rng.standard_normal((n0, n1))
            + 1j * rng.standard_normal((n0, n1))).real
        c = np.fft.fft2(vals)
        probe = (VectorField(grid, vals, zero) if comp == 0
                 else VectorField(grid, zero, vals))
        out = apply_fn(probe)
        cols.append((c, np.fft.fft2(out.ux), np.fft.fft2(out.uy)))
    half0, half1 = n0 // 2, n1 // 2
    for a in range(n0):
        for b in range(n1):
            if a == half0 or b == half1 or (a == 0 and b == 0):
                continue
            B = np.empty((2, 2), complex)
            for comp, (c, ox, oy) in enumerate(cols):
                if abs(c[a, b]) < 1e-12:
                    raise RuntimeError("degenerate probe coefficient")
                B[0, comp] = ox[a, b] / c[a, b]
                B[1, comp] = oy[a, b] / c[a, b]
            blocks[(a, b)] = B
    return blocks


# ----------------------------------------------------------------------
# assembly

@dataclass
class EigenPair:
    value: complex
    sector: object
    vector: np.ndarray


class OperatorAssembly:
    """Block-matrix realization of the velocity operator and the
    solenoidal projector on one grid.

    Blocks act on angular-sector coordinates (disk) or single-wavevector
    coordinates (torus).  ``apply`` reconstructs the operator action
    from the blocks, which must agree with the direct application to
    solver accuracy; ``solve_inverse`` applies the inverse block by
    block (the operator has no kernel: its smallest eigenvalue sits at
    the first radial Neumann rate, well away from zero).
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        if grid.kind == "disk":
            self.blocks = _probe_sector_blocks(grid, operators.extended_stokes)
            self.projector = _probe_sector_blocks(
                grid, lambda u: operators.leray_project(u).v)
        else:
            self.blocks = _probe_torus_blocks(grid, operators.extended_stokes)
            self.projector = _probe_torus_blocks(
                grid, lambda u: operators.leray_project(u).v)
        self._lu = {}

    # -- metric ---------------------------------------------------------

    def mass_matrix(self) -> scipy.sparse.dia_matrix:
        """SPD quadrature matrix for flattened (ux, uy) vectors."""
        w = self.grid.weights.ravel()
        return scipy.sparse.diags(np.concatenate([w, w]))

    def _sector_metric(self) -> np.ndarray:
        """Diagonal of the quadrature form in one sector's coordinates."""
        nth, nr = self.grid.shape
        w = self.grid.weights[0]
        return np.concatenate([w, w]) * (0.5 * nth)

    # -- block application ---------------------------------------------

    def damped_blocks(self, alpha: float) -> dict:
        """Blocks of the operator with divergence damping added."""
        if alpha < 0:
            raise ValueError("damping coefficient must be nonnegative")
        out = {}
        for key, A in self.blocks.items():
            P = self.projector[key]
            out[key] = A + alpha * (np.eye(P.shape[0]) - P)
        return out

    def apply(self, u: VectorField, blocks: dict | None = None) -> VectorField:
        """Reconstruct the operator action from the assembled blocks."""
        if blocks is None:
            blocks = self.blocks
        if self.grid.kind == "disk":
            coeffs = _to_sector_coeffs(self.grid, u.ux, u.uy)
            out = {m: blocks[m] @ x for m, x in coeffs.items()}
            ux, uy = _from_sector_coeffs(self.grid, out)
            return VectorField(self.grid, ux.real, uy.real)
        cx = np.fft.fft2(u.ux)
        cy = np.fft.fft2(u.uy)
        ox = np.zeros_like(cx)
        oy = np.zeros_like(cy)
        for (a, b), B in blocks.items():
            ox[a, b] = B[0, 0] * cx[a, b] + B[0, 1] * cy[a, b]
            oy[a, b] = B[1, 0] * cx[a, b] + B[1, 1] * cy[a, b]
        return VectorField(self.grid, np.fft.ifft2(ox).real,
                           np.fft.ifft2(oy).real)

    def solve_inverse(self, u: VectorField) -> VectorField:
        """Apply the inverse of the velocity operator block by block."""
        if self.grid.kind == "disk":
            coeffs = _to_sector_coeffs(self.grid, u.ux, u.uy)
            out = {}
            for m, x in coeffs.items():
                if m not in self._lu:
                    self._lu[m] = scipy.linalg.lu_factor(self.blocks[m])
                out[m] = scipy.linalg.lu_solve(self._lu[m], x)
            ux, uy = _from_sector_coeffs(self.grid, out)
            return VectorField(self.grid, ux.real, uy.real)
        cx = np.fft.fft2(u.ux)
        cy = np.fft.fft2(u.uy)
        ox = np.zeros_like(cx)
        oy = np.zeros_like(cy)
        for (a, b), B in self.blocks.items():
            sol = np.linalg.solve(B, np.array([cx[a, b], cy[a, b]]))
            ox[a, b], oy[a, b] = sol
        return VectorField(self.grid, np.fft.ifft2(ox).real,
                           np.fft.ifft2(oy).real)

    # -- reference subspace lifts (disk) --------------------------------

    def _lift_scalar_basis(self, m: int, which: str) -> np.ndarray:
        """Sector coordinates of grad or perp-grad of e^{im theta} radial
        deltas; columns span the sector's gradient or stream subspace."""
        grid = self.grid
        nth, nr = grid.shape
        th = grid.theta
        cols = []
        for j in range(nr):
            vals = np.zeros((nth, nr), complex)
            vals[:, j] = np.exp(1j * m * th)
            fr = ScalarField(grid, vals.real)
            fi = ScalarField(grid, vals.imag)
            if which == "grad":
                gr, gi = calculus.gradient(fr), calculus.gradient(fi)
            else:
                gr, gi = calculus.perp_gradient(fr), calculus.perp_gradient(fi)
            ux = gr.ux + 1j * gi.ux
            uy = gr.uy + 1j * gi.uy
            W = np.fft.fft(ux + 1j * uy, axis=0) / nth
            Z = np.fft.fft(ux - 1j * uy, axis=0) / nth
            cols.append(np.concatenate([W[(m + 1) % nth], Z[(m - 1) % nth]]))
        return np.array(cols).T

    def _ritz_values(self, m: int, which: str) -> np.ndarray:
        """Eigenvalues of the operator restricted to a lifted subspace,
        orthonormalized in the quadrature metric."""
        R = self._lift_scalar_basis(m, which)
        d = self._sector_metric()
        G = (R.conj().T * d) @ R
        s, U = np.linalg.eigh(0.5 * (G + G.conj().T))
        keep = s > s.max() * _GRAM_TRUNCATION
        R = R @ (U[:, keep] / np.sqrt(s[keep]))
        H = (R.conj().T * d) @ (self.blocks[m] @ R)
        ev = np.linalg.eigvals(H)
        return ev


# ----------------------------------------------------------------------
# eigenvalue reports

@dataclass
class SpectrumReport:
    values: np.ndarray            # complex, sorted by magnitude
    residuals: np.ndarray         # relative operator residual per pair
    sectors: list                 # sector / wavevector of each value
    branch_guess: list = field(default_factory=list)
    ref_match: np.ndarray | None = None
    rel_err: np.ndarray | None = None

    def rows(self):
        out = []
        for i, lam in enumerate(self.values):
            guess = self.branch_guess[i] if self.branch_guess else ""
            ref = float(self.ref_match[i]) if self.ref_match is not None else ""
            err = float(self.rel_err[i]) if self.rel_err is not None else ""
            out.append((i, lam.real, lam.imag, guess, ref, err))
        return out


def write_spectrum_csv(path, report: SpectrumReport) -> None:
    lines = ["index,re_lambda,im_lambda,branch_guess,ref_match,rel_err"]
    for i, re, im, guess, ref, err in report.rows():
        ref_s = f"{ref:.17g}" if ref != "" else ""
        err_s = f"{err:.17g}" if err != "" else ""
        lines.append(f"{i},{re:.17g},{im:.17g},{guess},{ref_s},{err_s}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _lift_eigenvector(grid: Grid, sector, vec: np.ndarray):
    if grid.kind == "disk":
        ux, uy = _from_sector_coeffs(grid, {sector: vec})
        return ux, uy
    a, b = sector
    n0, n1 = grid.shape
    cx = np.zeros((n0, n1), complex)
    cy = np.zeros((n0, n1), complex)
    cx[a, b], cy[a, b] = vec
    return np.fft.ifft2(cx) * (n0 * n1), np.fft.ifft2(cy) * (n0 * n1)


def _operator_residual(grid: Grid, lam: complex, ux, uy) -> float:
    """|| A v - lam v ||_W / ||v||_W through the direct application."""
    w = grid.weights
    aux, auy = _apply_complex(grid, operators.extended_stokes, ux, uy)
    rx = aux - lam * ux
    ry = auy - lam * uy
    num = np.sum(w * (np.abs(rx) ** 2 + np.abs(ry) ** 2))
    den = np.sum(w * (np.abs(ux) ** 2 + np.abs(uy) ** 2))
    return float(np.sqrt(num / den))


def eigen_a(assembly: OperatorAssembly, k: int = 15,
            check_residuals: bool = True) -> SpectrumReport:
    """The k smallest-magnitude eigenvalues of the velocity operator.

    Each block is solved densely; the per-pair residual is evaluated
    against the direct operator application, not the blocks, so it also
    certifies the assembly.
    """
    pairs = []
    for key, B in assembly.blocks.items():
        vals, vecs = np.linalg.eig(B)
        for i in range(len(vals)):
            pairs.append(EigenPair(vals[i], key, vecs[:, i]))
    pairs.sort(key=lambda p: abs(p.value))
    pairs = pairs[:k]
    values = np.array([p.value for p in pairs])
    residuals = np.full(len(pairs), np.nan)
    if check_residuals:
        for i, p in enumerate(pairs):
            ux, uy = _lift_eigenvector(assembly.grid, p.sector, p.vector)
            residuals[i] = _operator_residual(assembly.grid, p.value, ux, uy)
    return SpectrumReport(values, residuals, [p.sector for p in pairs])


def minimizer_field(assembly: OperatorAssembly,
                    pair_index: int = 0) -> VectorField:
    """Real velocity field of one of the smallest eigenpairs."""
    pairs = []
    for key, B in assembly.blocks.items():
        vals, vecs = np.linalg.eig(B)
        for i in range(len(vals)):
            pairs.append(EigenPair(vals[i], key, vecs[:, i]))
    pairs.sort(key=lambda p: abs(p.value))
    p = pairs[pair_index]
    ux, uy = _lift_eigenvector(assembly.grid, p.sector, p.vector)
    u = VectorField(assembly.grid, ux.real, uy.real)
    n = l2_norm_vec(u)
    if n < 1e-14:
        u = VectorField(assembly.grid, ux.imag, uy.imag)
        n = l2_norm_vec(u)
    return u * (1.0 / n)


def l2_norm_vec(u: VectorField) -> float:
    return float(np.sqrt(operators._vec_inner(u, u)))


def eigen_reference(assembly: OperatorAssembly):
    """Reference spectra of the two invariant families.

    Stokes branch: the operator restricted to the discrete stream
    subspace (perp-gradients of scalars), the divergence-free
    parameterization in two dimensions.  Gradient branch: restricted to
    discrete gradients, which realizes the scalar Neumann Laplacian
    through the lift; its zero mode (constants) never enters because
    constants have vanishing gradient.  Both sorted ascending.
    """
    grid = assembly.grid
    stokes = []
    neumann = []
    if grid.kind == "disk":
        for m in _sector_range(grid):
            sv = assembly._ritz_values(m, "perp")
            nv = assembly._ritz_values(m, "grad")
            stokes.extend(sv[np.abs(sv.imag) <= 1e-6 * np.abs(sv)].real)
            neumann.extend(nv[np.abs(nv.imag) <= 1e-6 * np.abs(nv)].real)
    else:
        for (a, b), B in assembly.blocks.items():
            n0, n1 = grid.shape
            ka = a if a <= n0 // 2 else a - n0
            kb = b if b <= n1 // 2 else b - n1
            kvec = np.array([ka, kb], float) * (2 * np.pi / grid.period)
            khat = kvec / np.linalg.norm(kvec)
            perp = np.array([-khat[1], khat[0]])
            stokes.append(float((perp.conj() @ (B @ perp)).real))
            neumann.append(float((khat.conj() @ (B @ khat)).real))
    return np.sort(np.array(stokes)), np.sort(np.array(neumann))


def match_reference(report: SpectrumReport, stokes: np.ndarray,
                    neumann: np.ndarray) -> SpectrumReport:
    """Annotate eigenvalues with the nearest reference branch value."""
    ref_match = np.empty(len(report.values))
    rel_err = np.empty(len(report.values))
    guesses = []
    for i, lam in enumerate(report.values):
        x = abs(lam)
        ds = np.min(np.abs(stokes - x)) / x if len(stokes) else np.inf
        dn = np.min(np.abs(neumann - x)) / x if len(neumann) else np.inf
        if ds <= dn:
            guesses.append("stokes")
            ref_match[i] = stokes[np.argmin(np.abs(stokes - x))]
            rel_err[i] = ds
        else:
            guesses.append("neumann")
            ref_match[i] = neumann[np.argmin(np.abs(neumann - x))]
            rel_err[i] = dn
    report.branch_guess = guesses
    report.ref_match = ref_match
    report.rel_err = rel_err
    return report


# ----------------------------------------------------------------------
# quadratic-form subspace

def rayleigh_basis(grid: Grid, m_max: int = 6, j_max: int = 3,
                   layer_waves=(4, 8, 12, 16, 24, 32),
                   layer_depths=(0.03, 0.06, 0.12),
                   include_layers: bool = False) -> list[VectorField]:
    """Velocity subspace for Rayleigh-quotient fits.

    Disk: component-wise windowed Fourier-polynomial modes, the same
    family the band-limited random fields are drawn from, so those
    fields are exactly representable.  With ``include_layers`` the
    subspace gains wall-layer pairs whose stream and gradient parts
    cancel at the boundary; the sign structure of the quadratic form
    lives in such layers, and the windowed polynomials never see it.
    Torus: component-wise trigonometric modes plus the constants.
    """
    if grid.kind == "torus":
        kfac = 2 * np.pi / grid.period
        X, Y = grid.xy
        zero = np.zeros(grid.shape)
        out = [VectorField(grid, np.ones(grid.shape), zero),
               VectorField(grid, zero, np.ones(grid.shape))]
        seen = set()
        for a in range(0, m_max + 1):
            for b in range(-m_max, m_max + 1):
                if (a, b) == (0, 0) or (a, b) in seen or (-a, -b) in seen:
                    continue
                seen.add((a, b))
                phase = kfac * (a * X + b * Y)
                for t in (np.cos(phase), np.sin(phase)):
                    out.append(VectorField(grid, t, zero))
                    out.append(VectorField(grid, zero, t))
        return out

    nth, nr = grid.shape
    X, Y = grid.xy
    r = np.sqrt(X ** 2 + Y ** 2)
    thp = np.arctan2(Y, X)
    R = grid.radius
    d = R - r
    rho = r
    th = grid.theta[:, None]
    h = R / nr
    out = []
    zero = np.zeros(grid.shape)
    window = (1.0 - (r / R) ** 2) ** 2
    for m in range(0, m_max + 1):
        for j in range(j_max + 1):
            rad = r ** (m + 2 * j) * window
            trigs = ((np.cos(m * thp), np.sin(m * thp)) if m
                     else (np.ones_like(r),))
            for t in trigs:
                out.append(VectorField(grid, rad * t, zero))
                out.append(VectorField(grid, zero, rad * t))
    if not include_layers:
        return [VectorField(grid, f.ux, f.uy, bc=BC_DIRICHLET0) for f in out]
    cos = np.cos(grid.theta)[:, None]
    sin = np.sin(grid.theta)[:, None]
    for m in layer_waves:
        if m > nth // 3:
            continue
        a = np.cos(m * (th - np.pi))
        a1 = -(m / R) * np.sin(m * (th - np.pi))
        a2 = -(m / R) ** 2 * np.cos(m * (th - np.pi))
        for ell in layer_depths:
            if ell < 2 * h:
                continue
            # doubly flat stream layer: zero trace with wall vorticity
            gam = (d / ell) ** 2 * np.exp(-d / ell)
            dgam = (2 * d / ell ** 2 - d ** 2 / ell ** 3) * np.exp(-d / ell)
            ur = -(R / rho) * a2 * gam
            ut = a1 * dgam
            out.append(VectorField(grid, cos * ur - sin * ut,
                                   sin * ur + cos * ut))
            # mixed layers: stream slope cancels the gradient part at the
            # wall (gamma'(0) = beta(0)), leaving a zero-trace field whose
            # two parts couple through the boundary pressure
            gam = d * np.exp(-d / ell)
            dgam = (1.0 - d / ell) * np.exp(-d / ell)
            for bscale in (1.0, 2.0):
                lb = bscale * ell
                bet = np.exp(-0.5 * (d / lb) ** 2)
                dbet = -(d / lb ** 2) * bet
                ur = -(R / rho) * a2 * gam + a * dbet
                ut = a1 * dgam + (R / rho) * a1 * bet
                out.append(VectorField(grid, cos * ur - sin * ut,
                                       sin * ur + cos * ut))
    return [VectorField(grid, f.ux, f.uy, bc=BC_DIRICHLET0) for f in out]


class _FormTables:
    """Gram and form matrices of a velocity subspace, in coordinates
    orthonormalized against the quadrature product.

    The operator's action enters through its Galerkin representation on
    the subspace: the weak solenoidal projector leaves a mesh-scale
    boundary sheet in the operator output whose raw gradient pairing
    grows like the inverse square root of the cell size, so derivative
    forms of the output are only meaningful against the resolved
    subspace.  The plain form T0 pairs against the true output (the
    quadrature pairing of a smooth field with the sheet vanishes under
    refinement)."""

    def __init__(self, grid: Grid, basis: list[VectorField]):
        w = grid.weights
        kept = []
        for b in basis:
            n2 = float(np.sum(w * (b.ux ** 2 + b.uy ** 2)))
            if n2 > 1e-24:
                kept.append(b * (1.0 / np.sqrt(n2)))
        self.grid = grid
        n = len(kept)
        stack = np.array([[b.ux, b.uy] for b in kept])
        av = [operators.extended_stokes(b) for b in kept]
        astack = np.array([[a.ux, a.uy] for a in av])
        lap = [calculus.vector_laplacian(b) for b in kept]
        lstack = np.array([[v.ux, v.uy] for v in lap])
        dec = [operators.leray_project(b) for b in kept]
        gstack = np.array([[v.grad_q.ux, v.grad_q.uy] for v in dec])
        qstack = np.array([v.q.values for v in dec])

        def grads(arr):
            gs = []
            for i in range(arr.shape[0]):
                gx = calculus.gradient(ScalarField(grid, arr[i, 0]))
                gy = calculus.gradient(ScalarField(grid, arr[i, 1]))
                gs.append([gx.ux, gx.uy, gy.ux, gy.uy])
            return np.array(gs)

        gb = grads(stack)
        wv = w[None, None]

        def pair(xs, ys):
            return np.einsum("iakl,jakl->ij", xs * wv, ys)

        M = pair(stack, stack)
        s, U = np.linalg.eigh(0.5 * (M + M.T))
        keep = s > s.max() * _GRAM_TRUNCATION
        P = U[:, keep] / np.sqrt(s[keep])
        self.transform = P
        self.basis = kept
        conj = lambda G: P.T @ G @ P
        self.T0 = conj(pair(stack, astack))
        self.D1 = conj(pair(gb, gb))
        self.D2 = conj(pair(lstack, lstack))
        self.D3 = conj(pair(gstack, gstack))
        self.QG = conj(np.einsum("ikl,jkl->ij", qstack * w[None], qstack))
        # Galerkin derivative forms of the operator action
        self.T1 = self.D1 @ self.T0
        self.T2 = self.QG @ self.T0

    def field(self, coeff: np.ndarray) -> VectorField:
        """Velocity field of a coefficient vector in orthonormal
        coordinates."""
        c = self.transform @ coeff
        ux = sum(float(a) * b.ux for a, b in zip(c, self.basis))
        uy = sum(float(a) * b.uy for a, b in zip(c, self.basis))
        return VectorField(self.grid, ux, uy, bc=BC_DIRICHLET0)

    def coords(self, u: VectorField):
        """Orthonormal coordinates of a field with the relative norm of
        the part the subspace cannot represent."""
        w = self.grid.weights
        raw = np.array([float(np.sum(w * (b.ux * u.ux + b.uy * u.uy)))
                        for b in self.basis])
        c = self.transform.T @ raw
        nu2 = float(np.sum(w * (u.ux ** 2 + u.uy ** 2)))
        miss2 = max(nu2 - float(c @ c), 0.0)
        return c, np.sqrt(miss2 / nu2) if nu2 > 0 else 0.0

    def min_generalized(self, lhs: np.ndarray, rhs: np.ndarray):
        rhs = 0.5 * (rhs + rhs.T)
        s, U = np.linalg.eigh(rhs)
        keep = s > s.max() * _GRAM_TRUNCATION
        P = U[:, keep] / np.sqrt(s[keep])
        H = P.T @ (0.5 * (lhs + lhs.T)) @ P
        vals, vecs = np.linalg.eigh(H)
        return float(vals[0]), P @ vecs[:, 0]


@dataclass
class CoercivityFit:
    epsilon: float
    C_eps: float
    c: float
    lam_min: float
    n_basis: int
    converged: bool
    history: list            # (C tried, min quotient)

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "C_eps": self.C_eps,
            "c": self.c,
            "lam_min": self.lam_min,
            "n_basis": self.n_basis,
            "converged": self.converged,
            "history": [[float(a), float(b)] for a, b in self.history],
        }


def fit_coercivity(grid: Grid, eps: float, c_max: float = 200.0,
                   C_cap: float = 2.0 ** 20,
                   tables: _FormTables | None = None) -> CoercivityFit:
    """Smallest constant (to factor-2 resolution) making the adjusted
    quadratic form dominate the dissipation form on the fit subspace.

    The quotient compares the symmetrized form of the operator under the
    adjusted product against ||grad u||^2 + eps ||lap u||^2 +
    C ||grad q||^2; the search doubles C until the minimum quotient
    clears 1 / c_max, then bisects the bracket.
    """
    if eps < 0:
        raise ValueError("epsilon must be nonnegative")
    t = tables if tables is not None else _FormTables(grid, rayleigh_basis(grid))
    history = []

    def quotient(C):
        lhs = t.T0 + eps * t.T1 + C * t.T2
        rhs = t.D1 + eps * t.D2 + C * t.D3
        lam, _ = t.min_generalized(lhs, rhs)
        history.append((C, lam))
        return lam

    target = 1.0 / c_max
    lam0 = quotient(0.0)
    if lam0 >= target:
        # coercive without any potential weighting at all
        return CoercivityFit(eps, 0.0, 1.0 / lam0, lam0, len(t.basis),
                             True, history)
    C = 1.0
    lam = quotient(C)
    if lam >= target:
        # already coercive at one: halve down to a factor-2 bracket
        while C > 2.0 ** -10:
            lam_half = quotient(C / 2)
            if lam_half < target:
                break
            C /= 2
            lam = lam_half
        return CoercivityFit(eps, C, 1.0 / lam, lam, len(t.basis),
                             True, history)
    lo = C
    while C < C_cap:
        C *= 2.0
        lam = quotient(C)
        if lam >= target:
            break
        lo = C
    else:
        best = max(history, key=lambda p: p[1])
        return CoercivityFit(eps, best[0], np.inf if best[1] <= 0
                             else 1.0 / best[1], best[1], len(t.basis),
                             False, history)
    hi, lam_hi = C, lam
    while hi > 2.0 * lo:
        mid = np.sqrt(hi * lo)
        lam_mid = quotient(mid)
        if lam_mid >= target:
            hi, lam_hi = mid, lam_mid
        else:
            lo = mid
    return CoercivityFit(eps, hi, 1.0 / lam_hi, lam_hi, len(t.basis),
                         True, history)


def coercivity_margins(grid: Grid, fit: CoercivityFit, n_fields: int = 1000,
                       seed: int = 0, tables: _FormTables | None = None):
    """Coercivity quotients of random band-limited fields under fitted
    constants.

    Returns (quotients, worst representation error).  The random family
    lies in the span of the fit subspace, so each field's quadratic
    forms reduce exactly to its subspace coordinates; the representation
    error reports how well that holds and should sit at rounding level.
    """
    t = tables if tables is not None else _FormTables(grid, rayleigh_basis(grid))
    lhs = t.T0 + fit.epsilon * t.T1 + fit.C_eps * t.T2
    lhs = 0.5 * (lhs + lhs.T)
    rhs = t.D1 + fit.epsilon * t.D2 + fit.C_eps * t.D3
    rhs = 0.5 * (rhs + rhs.T)
    rng = np.random.default_rng(seed)
    quots = np.empty(n_fields)
    worst_miss = 0.0
    for i in range(n_fields):
        u = operators.random_smooth_field(grid, rng)
        c, miss = t.coords(u)
        worst_miss = max(worst_miss, miss)
        quots[i] = float(c @ lhs @ c) / float(c @ rhs @ c)
    return quots, worst_miss


@dataclass
class NegativityReport:
    min_quotient: float
    minimizer: VectorField
    n_basis: int
    next_values: np.ndarray


def fit_negativity(grid: Grid,
                   tables: _FormTables | None = None) -> NegativityReport:
    """Most negative Rayleigh quotient of the symmetrized operator form
    over the layer-enriched fit subspace, with its minimizing field."""
    if tables is None:
        tables = _FormTables(grid, rayleigh_basis(grid, include_layers=True))
    t = tables
    vals, vecs = np.linalg.eigh(0.5 * (t.T0 + t.T0.T))
    u = t.field(vecs[:, 0])
    u = u * (1.0 / l2_norm_vec(u))
    return NegativityReport(float(vals[0]), u, len(t.basis), vals[1:4])


@dataclass
class DampingIdentityCheck:
    alpha: float
    epsilon: float
    C_eps: float
    max_rel_residual: float
    min_extra_term: float


def fit_B_coercivity(grid: Grid, eps: float, alpha: float,
                     C_eps: float = 5.0, n_fields: int = 100,
                     seed: int = 0) -> DampingIdentityCheck:
    """Check that damping shifts the adjusted quadratic form by exactly
    alpha times a nonnegative divergence functional.

    Both sides are evaluated directly: the left through the damped
    operator, the right through the plain operator plus
    alpha (||grad q||^2 + C ||q||^2 + eps ||div u||^2).  The epsilon
    term uses the divergence because the potential's Laplacian equals
    the divergence of the field; on the torus the discrete operators
    satisfy the underlying integration by parts exactly, on the disk the
    residual carries the truncation of that step.
    """
    if alpha < 0:
        raise ValueError("damping coefficient must be nonnegative")
    params = operators.AdjustedIPParams(eps, C_eps)
    rng = np.random.default_rng(seed)
    worst = 0.0
    min_extra = np.inf
    for _ in range(n_fields):
        u = operators.random_smooth_field(grid, rng)
        bu = operators.damped_extended_stokes(u, alpha)
        au = operators.extended_stokes(u)
        lhs = operators.adjusted_inner(u, bu, params)
        base = operators.adjusted_inner(u, au, params)
        dec = operators.leray_project(u)
        gq2 = operators._vec_inner(dec.grad_q, dec.grad_q)
        q2 = l2_norm(dec.q) ** 2
        div2 = l2_norm(calculus.divergence(u)) ** 2
        extra = gq2 + C_eps * q2 + eps * div2
        min_extra = min(min_extra, extra)
        rhs = base + alpha * extra
        scale = max(abs(lhs), abs(rhs), 1e-30)
        worst = max(worst, abs(lhs - rhs) / scale)
    return DampingIdentityCheck(alpha, eps, C_eps, worst, min_extra)


# ----------------------------------------------------------------------
# dense brute-force assembly (toy resolutions)

def _flatten(u: VectorField) -> np.ndarray:
    return np.concatenate([u.ux.ravel(), u.uy.ravel()])


def _unflatten(grid: Grid, x: np.ndarray, bc=BC_DIRICHLET0) -> VectorField:
    n = grid.shape[0] * grid.shape[1]
    return VectorField(grid, x[:n].reshape(grid.shape),
                       x[n:].reshape(grid.shape), bc=bc)


def assemble_dense(grid: Grid) -> dict:
    """Column-by-column dense matrices of the discrete operators.

    Exhaustive unit-vector probing; guarded to toy resolutions.  The
    velocity-operator matrix is exact including every closure effect, so
    it cross-checks the sector assembly and the matrix-free application.
    """
    npts = grid.shape[0] * grid.shape[1]
    if npts > _DENSE_LIMIT:
        raise ValueError(
            f"dense assembly limited to {_DENSE_LIMIT} nodes, got {npts}")
    a = np.empty((2 * npts, 2 * npts))
    leray = np.empty_like(a)
    lap = np.empty_like(a)
    grad = np.empty((2 * npts, npts))
    div = np.empty((npts, 2 * npts))
    for j in range(2 * npts):
        e = np.zeros(2 * npts)
        e[j] = 1.0
        u = _unflatten(grid, e)
        a[:, j] = _flatten(operators.extended_stokes(u))
        leray[:, j] = _flatten(operators.leray_project(u).v)
        lap[:, j] = -_flatten(calculus.vector_laplacian(u))
        div[:, j] = calculus.divergence(u).values.ravel()
    for j in range(npts):
        e = np.zeros(npts)
        e[j] = 1.0
        f = ScalarField(grid, e.reshape(grid.shape))
        grad[:, j] = _flatten(calculus.gradient(f))
    w = grid.weights.ravel()
    return {
        "a": a,
        "leray": leray,
        "lap_dirichlet": lap,
        "grad": grad,
        "div": div,
        "mass": scipy.sparse.diags(np.concatenate([w, w])),
    }


def eigen_a_iterative(grid: Grid, k: int = 15, tol: float = 1e-8,
                      dense: dict | None = None) -> np.ndarray:
    """Smallest-magnitude eigenvalues through an Arnoldi iteration in
    shift-invert mode around zero; toy resolutions only.

    The operator application stays matrix-free; only the inner solve of
    the shift-invert transform uses a factorization of the brute-force
    matrix.
    """
    npts = grid.shape[0] * grid.shape[1]
    if npts > _DENSE_LIMIT:
        raise ValueError("iterative cross-check limited to toy grids")
    if dense is None:
        dense = assemble_dense(grid)
    lu = scipy.linalg.lu_factor(dense["a"])

    def matvec(x):
        return _flatten(operators.extended_stokes(_unflatten(grid, x)))

    n = 2 * npts
    aop = scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec)
    inv = scipy.sparse.linalg.LinearOperator(
        (n, n), matvec=lambda x: scipy.linalg.lu_solve(lu, x))
    vals = scipy.sparse.linalg.eigs(aop, k=k, sigma=0.0, OPinv=inv, tol=tol,
                                    return_eigenvectors=False)
    return vals[np.argsort(np.abs(vals))]
