"""Semi-implicit time discretization with explicit pressure.

One step advances the velocity by solving a shifted vector Helmholtz
problem with homogeneous Dirichlet data,

    (1/dt - Lap) u_next = u/dt - grad(p) + f,

where the pressure gradient is frozen at the old time level:
grad(p) = grad(p_s(u)) + grad(Q(f)).  The scheme is implicit only in
the viscosity; pressure, convection, and divergence damping enter the
right-hand side explicitly.  Because the pressure potential is
harmonic and the projected convection term is divergence free, the
divergence of the iterates satisfies a pure no-flux heat step,
decoupled from everything else.

Every run keeps a ledger of quadratic energies per step, together with
residuals of the two cumulative stability inequalities (the summed
dissipation bound and the geometric decay bound).  The constants in
those inequalities are not universal numbers; they are fitted once per
grid on calibration trajectories and then frozen, and the verification
flags assert the inequalities with the frozen constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .fields import VectorField, l2_norm
from . import calculus
from . import operators
from .elliptic import solve_helmholtz_dirichlet

# smallest nonzero eigenvalue of the no-flux Laplacian on the unit
# disk: squared first positive root of the derivative of the first
# Bessel function
_J1P_ROOT = 1.8411837813406593

# header of the ledger serialization, fixed column order
CSV_HEADER = ("step,t,l2_sq,h1_sq,lap_sq,div_sq,gradq_sq,ps_sq,"
              "adj_energy,E_c1c2,E_prime,disc_ineq_resid,"
              "exp_decay_resid,nonlin_term")
_COLUMNS = tuple(CSV_HEADER.split(","))

# slack allowed on the divergence decay bound, relative to the bound
_DIV_DECAY_TOL = 0.05
# slack on the inequality residuals, relative to the initial energy
_INEQ_TOL = 1e-8


@dataclass(frozen=True)
class SchemeConfig:
    """Parameters of one simulation.

    dt must stay below the kappa0 guard: the scheme is unconditionally
    stable in the viscous term, but the energy inequalities are only
    claimed for small steps, so the guard protects the ledger's
    meaning rather than the solver.  alpha adds explicit damping of
    the gradient part.  The inequality constants (ineq_C, decay_c,
    decay_Cprime) and the energy weights (epsilon, C_eps, c1, c2,
    eps_E) carry fitted per-grid values; the defaults are generous
    enough for tame data on moderate grids.
    """
    dt: float
    n_steps: int
    alpha: float = 0.0
    nonlinear: bool = False
    epsilon: float = 0.05
    C_eps: float = 5.0
    c1: float = 1.0
    c2: float = 1.0
    eps_E: float = 0.5
    ineq_C: float = 40.0
    decay_c: float = 0.05
    decay_Cprime: float = 40.0
    forcing: object = None
    kappa0: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if not self.kappa0 > 0:
            raise ValueError("kappa0 guard must be positive")
        if self.dt >= self.kappa0:
            raise ValueError(
                f"dt = {self.dt} violates the kappa0 = {self.kappa0} guard")
        if self.n_steps < 1:
            raise ValueError("need at least one step")
        if self.alpha < 0:
            raise ValueError("damping must be nonnegative")
        if self.epsilon <= 0 or self.C_eps < 0:
            raise ValueError("adjusted-product weights out of range")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("energy weights must be positive")
        if not 0 < self.eps_E < 2:
            raise ValueError("dissipation weight must lie in (0, 2)")
        if self.ineq_C <= 0 or self.decay_Cprime < 0:
            raise ValueError("inequality constants out of range")
        if not 0 <= self.decay_c * self.dt < 1:
            raise ValueError("decay rate too large for this step")


class EnergyLedger:
    """Per-step record of a run.

    Each row holds the quadratic energies of the state at one time
    level plus the residuals (left side minus right side) of the two
    cumulative stability inequalities evaluated up to that level; a
    negative residual means the inequality holds.  flags are the
    verdicts computed at the end of the run, aborted is None for a
    clean run and a diagnostic dict otherwise.
    """

    def __init__(self):
        self.rows = []
        self.flags = {}
        self.aborted = None

    def append(self, **row):
        missing = set(_COLUMNS) - set(row)
        if missing:
            raise ValueError(f"ledger row missing {sorted(missing)}")
        self.rows.append(row)

    def column(self, name):
        if name not in _COLUMNS:
            raise KeyError(name)
        return np.array([row[name] for row in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in self.rows:
                parts = [str(int(row["step"]))]
                parts += [f"{row[name]:.17g}" for name in _COLUMNS[1:]]
                fh.write(",".join(parts) + "\n")

    @classmethod
    def from_csv(cls, path):
        ledger = cls()
        with open(path) as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise ValueError(f"unexpected ledger header {header!r}")
            for line in fh:
                vals = line.strip().split(",")
                if len(vals) != len(_COLUMNS):
                    raise ValueError("ledger row has wrong arity")
                row = {"step": int(vals[0])}
                for name, tok in zip(_COLUMNS[1:], vals[1:]):
                    row[name] = float(tok)
                ledger.rows.append(row)
        return ledger


def smallest_neumann_rate(grid: Grid) -> float:
    """Slowest nonzero decay rate of the no-flux heat semigroup."""
    if grid.kind == "torus":
        return (2.0 * np.pi / grid.extent) ** 2
    return (_J1P_ROOT / grid.radius) ** 2


def _norm_sq(u: VectorField) -> float:
    return float(np.sum((u.ux**2 + u.uy**2) * u.grid.weights))


def _forcing_value(forcing, n, dt, grid):
    """Forcing at the left endpoint of step n, or None."""
    if forcing is None:
        return None
    if callable(forcing):
        f = forcing(n * dt)
    else:
        f = forcing[n] if n < len(forcing) else None
    if f is not None and f.grid != grid:
        raise ValueError("forcing lives on the wrong grid")
    return f


def pressure_update(u: VectorField, f: VectorField | None = None):
    """Explicit pressure at the old time level.

    Returns the mean-zero potential and its gradient.  The velocity
    part contributes through the harmonic boundary-value problem; the
    forcing contributes only its gradient content, so a divergence
    free forcing leaves the pressure untouched.
    """
    grad_ps, ps = operators.stokes_pressure(u)
    if f is None:
        return ps, grad_ps
    qf = operators.gradient_potential(f)
    p = ps.with_values(ps.values + qf.values, mean_zero=True)
    gqf = calculus.gradient(qf)
    grad_p = VectorField(u.grid, grad_ps.ux + gqf.ux, grad_ps.uy + gqf.uy)
    return p, grad_p


def _advance(u, dt, f, alpha, convect):
    """One implicit-viscosity solve with the explicit terms on the
    right-hand side."""
    _, grad_p = pressure_update(u, f)
    rx = u.ux / dt - grad_p.ux
    ry = u.uy / dt - grad_p.uy
    if convect:
        conv = operators.leray_project(calculus.advect(u, u)).v
        rx = rx - conv.ux
        ry = ry - conv.uy
    if alpha != 0.0:
        gq = operators.leray_project(u).grad_q
        rx = rx - alpha * gq.ux
        ry = ry - alpha * gq.uy
    if f is not None:
        rx = rx + f.ux
        ry = ry + f.uy
    return solve_helmholtz_dirichlet(1.0 / dt, VectorField(u.grid, rx, ry))


def step_linear(u: VectorField, dt: float,
                f: VectorField | None = None) -> VectorField:
    """One step of the linear scheme: implicit viscosity, explicit
    pressure, zero wall trace."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    return _advance(u, dt, f, 0.0, False)


def step_nonlinear(u: VectorField, dt: float, alpha: float = 0.0,
                   f: VectorField | None = None) -> VectorField:
    """One step with explicit projected convection and explicit
    damping of the gradient part.

    Both extra terms ride on the right-hand side of the same viscous
    solve; on divergence-free states the damping term vanishes
    identically, so alpha cannot change such a trajectory.  Blow-up
    detection lives in run, which knows the initial amplitude.
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    if alpha < 0:
        raise ValueError("damping must be nonnegative")
    return _advance(u, dt, f, alpha, True)


def _ledger_row(u, config, step, f, state):
    """Energies of the current state plus cumulative residuals.

    state carries the running sums between calls.  The summed
    inequality is evaluated with the recorded potential Laplacians
    replaced by the divergence (the two agree through the potential
    equation); its q-sum starts at the first step rather than the
    zeroth, which only shifts the residual by one dt-sized term.
    """
    dt = config.dt
    dec = operators.leray_project(u)
    grad_ps, _ = operators.stokes_pressure(u)
    lap = calculus.vector_laplacian(u)
    div = calculus.divergence(u)

    l2_sq = _norm_sq(u)
    h1_sq = calculus.h1_seminorm_sq(u)
    lap_sq = _norm_sq(lap)
    div_sq = float(np.sum(div.values**2 * u.grid.weights))
    gradq_sq = _norm_sq(dec.grad_q)
    q_sq = l2_norm(dec.q) ** 2
    ps_sq = _norm_sq(grad_ps)
    f_sq = 0.0 if f is None else _norm_sq(f)

    adj = l2_sq + config.epsilon * h1_sq + config.C_eps * q_sq
    e_comb = (l2_sq + config.c1 * np.sqrt(h1_sq * gradq_sq)
              + config.c2 * gradq_sq)
    e_prime = ((2.0 - config.eps_E) * h1_sq
               + np.sqrt(lap_sq * gradq_sq) + div_sq)
    combined = l2_sq + config.epsilon * h1_sq + config.C_eps * gradq_sq

    if step == 0:
        state["combined0"] = combined
        state["slack0"] = h1_sq + config.epsilon * lap_sq
        state["dissip"] = 0.0
        state["f_total"] = 0.0
        state["f_decay"] = 0.0
        state["f_prev_sq"] = 0.0
    else:
        # the q-term joins one step late, see docstring
        state["dissip"] += dt * config.C_eps * div_sq
        # newest forcing term enters the decay sum with exponent zero
        state["f_decay"] = (state["f_decay"]
                            * (1.0 - config.decay_c * dt)
                            + dt * state["f_prev_sq"])
    state["dissip"] += dt * (h1_sq + config.epsilon * lap_sq)
    state["f_total"] += f_sq
    state["f_prev_sq"] = f_sq

    lhs_sum = combined + state["dissip"] / config.ineq_C
    rhs_sum = (state["combined0"] + config.ineq_C * dt
               * (state["slack0"] + state["f_total"]))
    decay_rhs = ((1.0 - config.decay_c * dt) ** step * state["combined0"]
                 + config.decay_Cprime * state["f_decay"])

    nonlin = 0.0
    if config.nonlinear:
        conv = operators.leray_project(calculus.advect(u, u)).v
        params = operators.AdjustedIPParams(config.epsilon, config.C_eps)
        nonlin = abs(operators.adjusted_inner(conv, u, params))

    return {
        "step": step, "t": step * dt, "l2_sq": l2_sq, "h1_sq": h1_sq,
        "lap_sq": lap_sq, "div_sq": div_sq, "gradq_sq": gradq_sq,
        "ps_sq": ps_sq, "adj_energy": adj, "E_c1c2": e_comb,
        "E_prime": e_prime, "disc_ineq_resid": lhs_sum - rhs_sum,
        "exp_decay_resid": combined - decay_rhs, "nonlin_term": nonlin,
    }


def _verdicts(ledger, config, grid):
    """Verification flags computed from the recorded rows."""
    div = np.sqrt(ledger.column("div_sq"))
    l2 = ledger.column("l2_sq")
    steps = np.arange(len(ledger))
    rate = smallest_neumann_rate(grid) + config.alpha
    bound = div[0] * (1.0 + rate * config.dt) ** (-steps.astype(float))
    floor = 1e-10 * (1.0 + np.sqrt(l2[0]))
    flags = {}
    flags["div_decay"] = bool(
        np.all(div <= bound * (1.0 + _DIV_DECAY_TOL) + floor))
    scale = max(1.0, abs(ledger.rows[0]["adj_energy"]),
                l2[0] + config.epsilon * ledger.rows[0]["h1_sq"])
    flags["energy_inequality"] = bool(
        np.max(ledger.column("disc_ineq_resid")) <= _INEQ_TOL * scale)
    e = ledger.column("E_c1c2")
    flags["energy_monotone"] = bool(
        np.all(np.diff(e) <= _INEQ_TOL * max(e[0], 1.0)))
    flags["l2_increase"] = bool(np.any(np.diff(l2) > 0))
    return flags


def run(config: SchemeConfig, u0: VectorField) -> EnergyLedger:
    """Advance n_steps from u0 and return the full ledger.

    Rows cover every recorded level including the initial one, so a
    clean run has n_steps + 1 rows.  A non-finite state or a nonlinear
    amplitude excursion past a thousandfold of the initial norm aborts
    the run; rows up to the last good step remain valid and the abort
    diagnostic is stored on the ledger.
    """
    grid = u0.grid
    ledger = EnergyLedger()
    state = {}
    u = u0
    norm0 = np.sqrt(_norm_sq(u0))
    for n in range(config.n_steps + 1):
        f = _forcing_value(config.forcing, n, config.dt, grid)
        ledger.append(**_ledger_row(u, config, n, f, state))
        if n == config.n_steps:
            break
        if config.nonlinear:
            u_next = step_nonlinear(u, config.dt, config.alpha, f)
        elif config.alpha != 0.0:
            u_next = _advance(u, config.dt, f, config.alpha, False)
        else:
            u_next = step_linear(u, config.dt, f)
        if not (np.all(np.isfinite(u_next.ux))
                and np.all(np.isfinite(u_next.uy))):
            ledger.aborted = {"reason": "non-finite state", "step": n + 1}
            break
        if config.nonlinear and np.sqrt(_norm_sq(u_next)) > 1e3 * norm0:
            ledger.aborted = {"reason": "blow-up", "step": n + 1,
                              "norm_ratio": np.sqrt(_norm_sq(u_next))
                              / max(norm0, 1e-300)}
            break
        u = u_next
    ledger.flags = _verdicts(ledger, config, grid)
    return ledger


def balance_residuals(ledger: EnergyLedger, dt: float,
                      C_l2: float, C_h1: float):
    """Sampled residuals of the three continuous energy balances.

    Forward differences of the ledger stand in for the time
    derivatives, with the dissipation taken at the new level as the
    implicit step produces it.  Nonpositive residuals mean the
    balances hold with the supplied constants; the divergence balance
    carries no constant at all.
    """
    l2 = ledger.column("l2_sq")
    h1 = ledger.column("h1_sq")
    lap = ledger.column("lap_sq")
    div = ledger.column("div_sq")
    gq = ledger.column("gradq_sq")
    r_l2 = (np.diff(l2) / dt + 2.0 * h1[1:]
            - C_l2 * np.sqrt(gq[1:] * lap[1:]))
    r_h1 = np.diff(h1) / dt + 0.25 * lap[1:] - C_h1 * h1[1:]
    r_div = np.diff(gq) / dt + 2.0 * div[1:]
    return r_l2, r_h1, r_div


def fit_energy_constants(grid: Grid, dt: float, n_steps: int = 40,
                         n_fields: int = 4, seed: int = 0,
                         epsilon: float = 0.05, C_eps: float = 5.0):
    """Fit the inequality constants on calibration trajectories.

    Runs the linear unforced scheme on a few random zero-trace fields
    and extracts, per inequality, the smallest constant that makes it
    hold at every recorded step, then doubles it as margin.  The
    returned dict feeds straight into SchemeConfig; callers fit once
    per grid and freeze the result.
    """
    rng = np.random.default_rng(seed)
    probe = SchemeConfig(dt=dt, n_steps=n_steps, epsilon=epsilon,
                         C_eps=C_eps)
    need_C = 1.0
    need_c = np.inf
    need_l2 = 0.0
    need_h1 = 0.0
    for _ in range(n_fields):
        u0 = operators.random_smooth_field(grid, rng)
        ledger = run(probe, u0)
        l2 = ledger.column("l2_sq")
        h1 = ledger.column("h1_sq")
        lap = ledger.column("lap_sq")
        div = ledger.column("div_sq")
        gq = ledger.column("gradq_sq")
        combined = l2 + epsilon * h1 + C_eps * gq
        dissip = np.cumsum(dt * (h1 + epsilon * lap))
        dissip[1:] += np.cumsum(dt * C_eps * div[1:])
        slack = dt * (h1[0] + epsilon * lap[0])
        # smallest C with combined[n] + dissip[n]/C <= combined[0] + C*slack
        gap = combined - combined[0]
        disc = np.sqrt(gap**2 + 4.0 * dissip * slack)
        need_C = max(need_C, float(np.max((gap + disc) / (2.0 * slack))))
        ratio = combined[1:] / combined[0]
        n_idx = np.arange(1, len(combined))
        rates = (1.0 - ratio ** (1.0 / n_idx)) / dt
        need_c = min(need_c, float(np.min(rates)))
        r_l2 = np.diff(l2) / dt + 2.0 * h1[1:]
        denom = np.sqrt(gq[1:] * lap[1:])
        pos = denom > 1e-14 * max(lap[0], 1.0)
        if np.any(pos):
            need_l2 = max(need_l2, float(np.max(r_l2[pos] / denom[pos])))
        r_h1 = np.diff(h1) / dt + 0.25 * lap[1:]
        need_h1 = max(need_h1, float(np.max(r_h1 / h1[1:])))
    return {
        "epsilon": epsilon,
        "C_eps": C_eps,
        "ineq_C": 2.0 * need_C,
        "decay_c": max(0.5 * need_c, 0.0),
        "decay_Cprime": 2.0 * need_C,
        "C_l2": 2.0 * max(need_l2, 0.0),
        "C_h1": 2.0 * max(need_h1, 0.0),
    }
