"""Boundary-layer velocity fields that defeat L2 coercivity.

The construction lives in a thin annulus at the wall.  A pressure part
p = alpha(s) beta(d) and a stream part psi = alpha'(s) gamma(d) are glued
from one arclength bump alpha and two radial profiles in the wall
distance d = R - r.  The compatibility endpoint values beta(0) = 1,
gamma'(0) = 1, gamma(0) = 0 make u = perp_grad(psi) + grad(p) vanish
pointwise on the circle while its divergence (= Lap p) does not.

The quadratic form of the extended Stokes operator on such fields is
controlled by the boundary integral of (normal derivative of psi) times
(Lap psi), which a direct computation reduces to a one-dimensional
integral of alpha'(s)^2 times (1/R - gamma''(0)).  Driving gamma''(0)
far enough below zero makes that integral large and positive and the
quadratic form negative.  The curvature term enters here with the
opposite sign from the source derivation's written formula; the discrete
two-dimensional quadrature below is the arbiter, and the sweep tries
both signs of gamma''(0) anyway.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace

import numpy as np

from .grid import Grid
from .fields import (ScalarField, VectorField, l2_norm, max_abs,
                     boundary_trace, boundary_integral, BC_DIRICHLET0,
                     BC_NONE)
from . import calculus
from .fields import l2_inner
from .elliptic import solve_harmonic_dirichlet
from .operators import quadratic_form_report, QuadraticFormReport


def _bump(t: np.ndarray):
    """exp(-1/(1-t^2)) inside |t| < 1, with first two derivatives."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    ts = np.where(inside, t, 0.0)
    om = 1.0 - ts**2
    v = np.where(inside, np.exp(-1.0 / np.where(inside, om, 1.0)), 0.0)
    g1 = -2.0 * ts / om**2
    g2 = -2.0 / om**2 - 8.0 * ts**2 / om**3
    d1 = np.where(inside, g1 * v, 0.0)
    d2 = np.where(inside, (g2 + g1**2) * v, 0.0)
    return v, d1, d2


def _plateau(t: np.ndarray):
    """exp(-t^2/(1-t^2)): equals 1 with zero slope at t = 0, vanishes
    with all derivatives at |t| = 1."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    ts = np.where(inside, t, 0.0)
    om = 1.0 - ts**2
    # phi = -t^2/(1-t^2); phi' = -2t/(1-t^2)^2, the same rational factor
    # as the bump; phi'' likewise
    phi = -ts**2 / om
    v = np.where(inside, np.exp(phi), 0.0)
    p1 = -2.0 * ts / om**2
    p2 = -2.0 / om**2 - 8.0 * ts**2 / om**3
    d1 = np.where(inside, p1 * v, 0.0)
    d2 = np.where(inside, (p2 + p1**2) * v, 0.0)
    return v, d1, d2


def _curvature_kernel(t: np.ndarray, flatness: float = 1.0):
    """Second antiderivative K of a unit curvature pulse on [0, 1).

    The pulse blends a constant with cos^2(pi t/2): pure cosine at
    flatness 1 (square integral 3/8, C2 smooth at the far end), pure
    constant at flatness 0 (square integral 1, but twice the slope
    drop per unit of curvature).  Returns (K, K', K'') with
    K(0) = K'(0) = 0 and K''(0) = 1; past t = 1 the kernel is zero and
    K continues linearly.
    """
    t = np.asarray(t, dtype=float)
    b = float(flatness)
    inside = t < 1.0
    tc = np.clip(t, 0.0, 1.0)
    eta_c = np.cos(0.5 * np.pi * tc) ** 2
    k1_c = 0.5 * tc + np.sin(np.pi * tc) / (2.0 * np.pi)
    k_c = 0.25 * tc**2 + (1.0 - np.cos(np.pi * tc)) / (2.0 * np.pi**2)
    eta = np.where(inside, (1.0 - b) + b * eta_c, 0.0)
    slope_end = 1.0 - 0.5 * b
    k1 = np.where(inside, (1.0 - b) * tc + b * k1_c, slope_end)
    k_end = 0.5 * (1.0 - b) + b * (0.25 + 1.0 / np.pi**2)
    k_in = 0.5 * (1.0 - b) * tc**2 + b * k_c
    k = np.where(inside, k_in, k_end + slope_end * (t - 1.0))
    return k, k1, eta


@dataclass(frozen=True)
class BoundaryLayerProfile:
    """Parameters of the wall construction.

    bump_amplitude, bump_halfwidth: height and arclength half-width of
    the alpha bump (centered opposite the branch cut).
    layer_depth: support depth of both radial profiles.
    stream_curvature: the localized kernel's contribution to the wall
    second derivative of the stream profile gamma; the knob that breaks
    coercivity (wall_curvature adds the slope relaxation's share).
    curvature_depth: support depth of the localized kernel carrying
    stream_curvature; shrinking it bounds the H2 growth.
    """
    bump_amplitude: float = 1.0
    bump_halfwidth: float = 0.8
    layer_depth: float = 0.5
    stream_curvature: float = 0.0
    curvature_depth: float = 0.1
    pressure_decay: float = 0.0
    pressure_depth: float = 0.0
    kernel_flatness: float = 1.0
    slope_relax_depth: float = 0.0
    slope_floor: float = 0.0

    def __post_init__(self):
        if self.bump_halfwidth <= 0 or self.layer_depth <= 0:
            raise ValueError("profile widths must be positive")
        if self.curvature_depth <= 0:
            raise ValueError("curvature depth must be positive")
        if self.pressure_decay < 0:
            raise ValueError("pressure decay rate must be nonnegative")
        if self.pressure_depth < 0:
            raise ValueError("pressure depth must be nonnegative")
        if not 0.0 <= self.kernel_flatness <= 1.0:
            raise ValueError("kernel flatness must lie in [0, 1]")
        if self.slope_relax_depth < 0:
            raise ValueError("slope relaxation depth must be nonnegative")
        if not 0.0 <= self.slope_floor <= 1.0:
            raise ValueError("slope floor must lie in [0, 1]")

    @property
    def beta_depth(self) -> float:
        """Support depth of the pressure profile; layer_depth unless set."""
        return self.pressure_depth if self.pressure_depth > 0 else self.layer_depth

    @property
    def wall_curvature(self) -> float:
        """gamma''(0): the kernel curvature plus the slope relaxation's."""
        g = self.stream_curvature
        if self.slope_relax_depth > 0.0:
            g -= (1.0 - self.slope_floor) / self.slope_relax_depth
        return g

    def validate_for(self, grid: Grid) -> None:
        if grid.kind == "disk":
            if max(self.layer_depth, self.beta_depth) >= grid.radius:
                raise ValueError("radial support does not fit in the disk")
            if self.bump_halfwidth >= np.pi * grid.radius:
                raise ValueError("arclength support wraps around")
        else:
            half = grid.period / 2.0
            if max(self.layer_depth, self.beta_depth) >= half:
                raise ValueError("profile support exceeds the half period")
            if self.bump_halfwidth >= half:
                raise ValueError("bump support exceeds the half period")

    def alpha(self, s: np.ndarray):
        v, d1, d2 = _bump(s / self.bump_halfwidth)
        a, w = self.bump_amplitude, self.bump_halfwidth
        return a * v, (a / w) * d1, (a / w**2) * d2

    def beta(self, d: np.ndarray):
        """Pressure profile: unit value and zero slope at the wall.

        With pressure_decay = 0 this is the bare plateau.  A positive
        rate kappa multiplies in (1 + kappa d) exp(-kappa d), the
        profile that minimizes the Laplacian norm of alpha(s) beta(d)
        for a single tangential wavenumber kappa; matching it to the
        bump's dominant wavenumber cuts the divergence cost of the
        field several-fold against the bare plateau.
        """
        env, env1, env2 = _plateau(d / self.beta_depth)
        w = self.beta_depth
        env1, env2 = env1 / w, env2 / w**2
        kap = self.pressure_decay
        if kap == 0.0:
            return env, env1, env2
        dec = np.exp(-kap * np.asarray(d, dtype=float))
        m = (1.0 + kap * d) * dec
        m1 = -kap**2 * d * dec
        m2 = kap**2 * (kap * d - 1.0) * dec
        val = m * env
        d1 = m1 * env + m * env1
        d2 = m2 * env + 2.0 * m1 * env1 + m * env2
        return val, d1, d2

    def gamma(self, d: np.ndarray):
        """Relaxing base slope plus a localized curvature kernel, under
        the layer envelope.

        The kernel contributes stream_curvature to gamma''(0) while its
        Laplacian cost scales like curvature^2 times curvature_depth;
        the sweep shrinks the depth as it raises the curvature to keep
        that cost linear.  With slope_relax_depth > 0 the base slope
        decays from 1 toward slope_floor on that depth scale: spreading
        mild concavity through the layer keeps harvesting the conjugate
        coupling where the harmonic weight still reaches, at far less
        bulk vorticity than a constant slope.
        """
        env, env1, env2 = _plateau(d / self.layer_depth)
        w = self.layer_depth
        env1, env2 = env1 / w, env2 / w**2
        ell, f = self.slope_relax_depth, self.slope_floor
        if ell > 0.0:
            dec = np.exp(-np.asarray(d, dtype=float) / ell)
            base = f * d + (1.0 - f) * ell * (1.0 - dec)
            base1 = f + (1.0 - f) * dec
            base2 = -((1.0 - f) / ell) * dec
        else:
            base, base1, base2 = d, np.ones_like(d), np.zeros_like(d)
        wg = self.curvature_depth
        k, k1, eta = _curvature_kernel(d / wg, self.kernel_flatness)
        g = self.stream_curvature
        core = base + g * wg**2 * k
        core1 = base1 + g * wg * k1
        core2 = base2 + g * eta
        val = core * env
        d1 = core1 * env + core * env1
        d2 = core2 * env + 2.0 * core1 * env1 + core * env2
        return val, d1, d2


def _torus_layer_coords(grid: Grid):
    """Arclength and line-distance coordinates on the periodic square.

    The profile line sits half a cell off mid-height so no node lands on
    the slope kink of the distance function.  Returns (s, d, dsign) with
    s a column over x, d and dsign rows over y; dsign is d'(y).
    """
    L = grid.period
    s = (grid.x1d - L / 2.0)[:, None]
    y0 = L / 2.0 + L / (2.0 * grid.shape[1])
    dy = np.mod(grid.y1d - y0 + L / 2.0, L) - L / 2.0
    return s, np.abs(dy)[None, :], np.sign(dy)[None, :]


def stream_and_pressure(profile: BoundaryLayerProfile, grid: Grid):
    """Sample psi and p of the construction on the grid."""
    profile.validate_for(grid)
    if grid.kind == "disk":
        R = grid.radius
        s = (R * (grid.theta - np.pi))[:, None]
        d = (R - grid.r)[None, :]
    else:
        s, d, _ = _torus_layer_coords(grid)
    a, a1, a2 = profile.alpha(s)
    g, g1, g2 = profile.gamma(d)
    b, b1, b2 = profile.beta(d)
    bc = BC_DIRICHLET0 if grid.kind == "disk" else BC_NONE
    psi = ScalarField(grid, a1 * g, bc=bc)
    # the tangential mean of the wall values rides on an additive
    # constant instead of the radial profile: constants are invisible
    # to the velocity, while pushing the mean to zero at depth would
    # pay divergence for nothing
    abar = float(np.mean(a))
    p = ScalarField(grid, (a - abar) * b + abar)
    return psi, p


def build_counterexample_field(profile: BoundaryLayerProfile,
                               grid: Grid) -> VectorField:
    """perp_grad(psi) + grad(p), assembled from analytic derivatives.

    On the torus the same gluing runs along an interior line instead of
    a wall; there the operator has no conjugate coupling to exploit and
    the quadratic form of any such field stays nonnegative.
    """
    profile.validate_for(grid)
    if grid.kind != "disk":
        s, d, dsign = _torus_layer_coords(grid)
        a, a1, a2 = profile.alpha(s)
        g, g1, g2 = profile.gamma(d)
        b, b1, b2 = profile.beta(d)
        abar = float(np.mean(a))
        ux = a1 * (g1 * dsign + b)
        uy = -a2 * g + (a - abar) * b1 * dsign
        return VectorField(grid, ux, uy)
    R = grid.radius
    s = (R * (grid.theta - np.pi))[:, None]
    d = (R - grid.r)[None, :]
    rho = grid.r[None, :]
    a, a1, a2 = profile.alpha(s)
    g, g1, g2 = profile.gamma(d)
    b, b1, b2 = profile.beta(d)
    # radial and tangential components; exact zero at the wall follows
    # from gamma(0) = 0, beta'(0) = 0 and gamma'(0) = beta(0).  The
    # pressure part carries alpha less its tangential mean (see
    # stream_and_pressure); the mean would cost divergence without
    # moving the velocity.
    abar = float(np.mean(a))
    ur = -(R / rho) * a2 * g - (a - abar) * b1
    ut = -a1 * g1 + (R / rho) * a1 * b
    cos = np.cos(grid.theta)[:, None]
    sin = np.sin(grid.theta)[:, None]
    ux = cos * ur - sin * ut
    uy = sin * ur + cos * ut
    return VectorField(grid, ux, uy, bc=BC_DIRICHLET0)


def wall_speed(profile: BoundaryLayerProfile, grid: Grid) -> float:
    """Largest |u| over the boundary nodes, from the analytic assembly.

    The interior mesh never samples the circle itself, so the no-slip
    property of the construction is checked where it lives: at d = 0,
    where the endpoint constraints cancel both components exactly.
    """
    if grid.kind != "disk":
        raise ValueError("wall values need a boundary")
    R = grid.radius
    s = R * (grid.theta - np.pi)
    d = np.zeros_like(s)
    a, a1, a2 = profile.alpha(s)
    g, g1, g2 = profile.gamma(d)
    b, b1, b2 = profile.beta(d)
    abar = float(np.mean(a))
    ur = -a2 * g - (a - abar) * b1
    ut = -a1 * g1 + a1 * b
    return float(np.max(np.hypot(ur, ut)))


def boundary_form(profile: BoundaryLayerProfile, radius: float = 1.0,
                  n_quad: int = 4096) -> float:
    """One-dimensional value of the wall integral of (d psi/d nu) Lap psi.

    Direct polar computation gives the integrand alpha'(s)^2 times
    (1/R - gamma''(0)); the discrete route boundary_form_discrete must
    agree within a few percent on adequate grids.
    """
    w = profile.bump_halfwidth
    s = np.linspace(-w, w, n_quad + 1)
    _, a1, _ = profile.alpha(s)
    integral = np.trapezoid(a1**2, s)
    return float(integral * (1.0 / radius - profile.wall_curvature))


def boundary_form_discrete(profile: BoundaryLayerProfile,
                           grid: Grid) -> float:
    """Two-dimensional quadrature of the same wall integral.

    The traces use the one-sided edge stencils: the reflected ghost of
    the homogeneous-Dirichlet tag assumes odd symmetry about the wall,
    which the quadratic part of gamma deliberately breaks, and would
    bias the extrapolated Laplacian by gamma''(0)/4.  The Laplacian
    trace is extrapolated from rings whose fluxes are all centered;
    the one-sided closure at the last ring costs an order there.
    """
    psi, _ = stream_and_pressure(profile, grid)
    psi = psi.with_values(psi.values, bc=BC_NONE)
    dn = calculus.normal_derivative(psi)
    lap = calculus.laplacian(psi).values
    lap_tr = 2.5 * lap[:, -2] - 1.5 * lap[:, -3]
    prod = type(dn)(grid, dn.values * lap_tr)
    return boundary_integral(prod)


@dataclass(frozen=True)
class CounterexampleReport:
    profile: BoundaryLayerProfile
    epsilon: float
    C: float
    satisfied: bool
    margin: float
    form: QuadraticFormReport
    grad_norm_sq: float
    boundary_form_1d: float
    boundary_form_2d: float
    contradiction_lhs: float
    contradiction_rhs: float
    sweep: tuple

    def to_json(self) -> str:
        payload = {
            "profile": asdict(self.profile),
            "epsilon": self.epsilon,
            "C": self.C,
            "satisfied": bool(self.satisfied),
            "margin": self.margin,
            "quadratic_form": asdict(self.form),
            "grad_norm_sq": self.grad_norm_sq,
            "boundary_form_1d": self.boundary_form_1d,
            "boundary_form_2d": self.boundary_form_2d,
            "contradiction_lhs": self.contradiction_lhs,
            "contradiction_rhs": self.contradiction_rhs,
            "sweep": [{"stream_curvature": c, "margin": m}
                      for c, m in self.sweep],
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _report_for(profile: BoundaryLayerProfile, grid: Grid,
                epsilon: float, C: float):
    u = build_counterexample_field(profile, grid)
    rep = quadratic_form_report(u)
    grad_sq = calculus.h1_seminorm_sq(u)
    margin = epsilon * grad_sq - C * rep.div_norm_sq - rep.total
    return u, rep, grad_sq, margin


# Wall-layer parameters tuned on the 256x128 disk: pi-wide bump, deep
# layer, decay-matched pressure, flat curvature kernel riding on a slope
# that relaxes over depth 0.473.  The sweep varies only the kernel
# curvature and its support width.
DEFAULT_SEARCH_PROFILE = BoundaryLayerProfile(
    bump_amplitude=2.0, bump_halfwidth=3.1405, layer_depth=0.834,
    pressure_decay=2.064, pressure_depth=0.995, kernel_flatness=0.0,
    slope_relax_depth=0.473, slope_floor=0.0)


def search_counterexample(grid: Grid, epsilon: float, C: float,
                          curvatures=None,
                          base_profile: BoundaryLayerProfile | None = None,
                          depth_scale: float = 0.53,
                          min_depth: float = 1e-3):
    """Sweep the wall curvature geometrically (both signs) until the
    coercivity inequality with weights (epsilon, C) fails.

    Each trial keeps the base profile and replaces the kernel curvature
    and its support depth, shrinking the depth as depth_scale / |curve|
    so the kernel cost stays linear in the curvature.  Returns
    (report, u) with report.satisfied saying whether a violation was
    found; the sweep history carries the margin of every trial.
    """
    if epsilon < 0 or C < 0:
        raise ValueError("weights must be nonnegative")
    if base_profile is None:
        base_profile = DEFAULT_SEARCH_PROFILE
    if curvatures is None:
        mags = [2.0 * 2.0**k for k in range(9)]
        curvatures = []
        for m in mags:
            curvatures.extend([-m, m])
    history = []
    best = None
    for curve in curvatures:
        depth = min(base_profile.layer_depth / 2,
                    max(min_depth, depth_scale / abs(curve)))
        prof = replace(base_profile, stream_curvature=curve,
                       curvature_depth=depth)
        u, rep, grad_sq, margin = _report_for(prof, grid, epsilon, C)
        history.append((curve, margin))
        if best is None or margin > best[3]:
            best = (prof, u, rep, margin, grad_sq)
        if margin > 0:
            break
    prof, u, rep, margin, grad_sq = best
    if grid.kind == "disk":
        vort = calculus.curl2d(u)
        qs = solve_harmonic_dirichlet(calculus.wall_vorticity(u))
        lhs = l2_inner(qs, vort)
        bf1 = boundary_form(prof, grid.radius)
        bf2 = boundary_form_discrete(prof, grid)
    else:
        # no boundary, no conjugate coupling: the wall diagnostics are
        # identically zero on the torus
        lhs, bf1, bf2 = 0.0, 0.0, 0.0
    rhs = rep.vorticity_norm_sq + (C + 1.0) * rep.div_norm_sq
    report = CounterexampleReport(
        profile=prof, epsilon=epsilon, C=C,
        satisfied=bool(margin > 0), margin=float(margin), form=rep,
        grad_norm_sq=float(grad_sq),
        boundary_form_1d=bf1, boundary_form_2d=bf2,
        contradiction_lhs=float(lhs), contradiction_rhs=float(rhs),
        sweep=tuple(history))
    return report, u


def demonstrate_energy_increase(u0: VectorField, dt: float, n_steps: int):
    """L2 norm squared along the linear scheme started from u0."""
    from .timestepping import SchemeConfig, run
    config = SchemeConfig(dt=dt, n_steps=n_steps)
    ledger = run(config, u0)
    return np.asarray(ledger.column("l2_sq"))
