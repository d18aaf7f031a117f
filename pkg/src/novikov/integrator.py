"""Time integration with conservation and a-priori-bound monitors.

The two conserved functionals, written in label coordinates, are

    E(T) = int (u^2 cos^2(v/2) + sin^2(v/2)) xi cos^2(v/2) dY
    F(T) = int (u^4 cos^4(v/2) + 2 u^2 cos^2(v/2) sin^2(v/2)
                - (1/3) sin^4(v/2)) xi dY

E is the H^1-energy of the profile and F the higher-order invariant whose
negative part is the quartic slope term.  From (E0, F0) follow hard bounds
on everything else: sup u^2 <= E0, the field sup bounds, and the Lipschitz
constant A0 controlling exp(-A0 T) <= xi <= exp(A0 T) and the growth of v.
The integrator enforces these as runtime monitors: a simulation that leaves
the envelope is wrong far beyond discretization error, so it hard-fails
with a MonitorError instead of producing quietly broken output.

Stepping is classical fixed-step RK4 with the nonlocal fields re-evaluated
at every stage.  Breaking diagnostics (max |u_x| and presence of cells with
cos^2(v/2) below the breaking tolerance) are sampled every step, not every
snapshot: the breaking window of an individual label is O(dt) and a
snapshot stride would miss it.
"""

from dataclasses import dataclass, field

import numpy as np

from .lagrangian import (consistency_residual, consistency_scale,  # noqa: F401
                         kernel_distance, nonlocal_fields, resample_state,
                         rhs, LagrangianState,
                         cumtrapz_kinked, kink_cells, _guarded_slope)
from ._util import true_runs


@dataclass(frozen=True)
class AprioriBounds:
    """Constants derived from the initial energies (all nonnegative).

    K bounds the cubed slope integral int |u_x|^3; A0 is the global
    Lipschitz/growth constant of the label-space system; p1_bound and
    p2_bound dominate sup |P1|, |dxP1| and sup |P2|, |dxP2|; c_inf = E0
    dominates sup u^2 along characteristics; c_s is an L^1 bound on the
    energy-measure flux source 4 u_x^3 (u^3 - P1 - dxP2).
    """

    E0: float
    F0: float
    K: float
    A0: float
    p1_bound: float
    p2_bound: float
    c_inf: float
    c_s: float


def apriori_bounds(E0, F0):
    """Derive the monitoring constants from the initial energies."""
    if E0 < 0:
        raise ValueError("E0 must be nonnegative, got %r" % E0)
    disc = 3.0 * E0 * (2.0 * E0 * E0 - F0)
    if disc < 0:
        raise ValueError(
            "invalid energy pair: 3 E0 (2 E0^2 - F0) = %g < 0" % disc)
    K = float(np.sqrt(disc))
    e32 = E0 * np.sqrt(E0)
    p1b = 0.75 * e32
    p2b = 0.25 * K
    A0 = 2.0 * e32 + np.sqrt(E0) + 2.0 * (p1b + p2b)
    c_s = 7.0 * K * e32 + K * K
    return AprioriBounds(E0=float(E0), F0=float(F0), K=K, A0=float(A0),
                         p1_bound=float(p1b), p2_bound=float(p2b),
                         c_inf=float(E0), c_s=float(c_s))


def _invariant_quadrature(state, dens):
    # corrected trapezoid, one-sided across crest-kink cells: a peaked crest
    # makes the density jump inside its cell, which plain trapezoid turns
    # into an O(h) drift that grows with the crest's xi contrast
    kinks = kink_cells(state.v)
    slope = _guarded_slope(dens, state.v, state.h)
    return float(cumtrapz_kinked(dens, state.h, kinks, slope)[-1])


def energy_E(state):
    """H^1-type invariant E(T) by corrected trapezoid on the label grid."""
    c2 = np.cos(0.5 * state.v) ** 2
    s2 = 1.0 - c2
    e = (state.u ** 2 * c2 + s2) * state.xi * c2
    return _invariant_quadrature(state, e)


def energy_F(state):
    """Quartic invariant F(T) by corrected trapezoid on the label grid."""
    c2 = np.cos(0.5 * state.v) ** 2
    s2 = 1.0 - c2
    f = (state.u ** 4 * c2 * c2 + 2.0 * state.u ** 2 * c2 * s2
         - s2 * s2 / 3.0) * state.xi
    return _invariant_quadrature(state, f)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _eval_rhs(state):
    return rhs(state, nonlocal_fields(state))


def _shifted(state, rates, dt_frac):
    u_t, v_t, xi_t, x_t = rates
    return LagrangianState(
        T=state.T + dt_frac, Y=state.Y,
        u=state.u + dt_frac * u_t, v=state.v + dt_frac * v_t,
        xi=state.xi + dt_frac * xi_t, x=state.x + dt_frac * x_t)


def rk4_step(state, dt):
    """One classical Runge–Kutta-4 step; fields re-evaluated per stage."""
    k1 = _eval_rhs(state)
    k2 = _eval_rhs(_shifted(state, k1, 0.5 * dt))
    k3 = _eval_rhs(_shifted(state, k2, 0.5 * dt))
    k4 = _eval_rhs(_shifted(state, k3, dt))
    sixth = dt / 6.0
    return LagrangianState(
        T=state.T + dt, Y=state.Y,
        u=state.u + sixth * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
        v=state.v + sixth * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
        xi=state.xi + sixth * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2]),
        x=state.x + sixth * (k1[3] + 2.0 * (k2[3] + k3[3]) + k4[3]))


@dataclass
class StepperConfig:
    """Fixed-step integration parameters and monitor tolerances.

    ``snapshot_stride`` records every k-th step (step 0 and the final step
    are always recorded).  Monitor tolerances:

    * tol_E: relative drift allowed in E
    * tol_F: drift allowed in F (absolute when |F(0)| <= 1, else relative)
    * tol_bound: relative slack on the a-priori sup bounds (u^2 and fields)
    * tol_consistency: slack on the x_Y = xi cos^4(v/2) residual; None
      derives 1e-6 * (1 + max xi).  On top of the slack the monitor always
      allows 4x the state's own truncation estimate (consistency_scale),
      since the centered-difference residual carries that much error even
      on an exact solution; growth beyond it flags genuine inconsistency.
    * breaking_tol: cells with cos^2(v/2) below this count as breaking

    ``relabel_every`` (a multiple of dt, or None to disable) refreshes
    the label map with :func:`novikov.lagrangian.resample_state` at that
    period: labels starve exponentially behind transported crests, so
    any run past a couple of time units needs periodic refreshes to hold
    resolution.  ``relabel_xi`` triggers the same refresh whenever max xi
    exceeds it (checked every step); since xi measures exactly how far
    the label density has drifted from the build-time equidistribution,
    this adapts the refresh rate to the actual dilution — quiet stretches
    relabel rarely, a collision relabels often.  Both knobs can be active
    at once.  A refresh is skipped while any cos^2(v/2) is at or below
    ``relabel_guard`` (a breaking front is crossing: the state is fine but
    not resamplable); a skipped xi-trigger backs off until xi grows
    another 25%.
    """

    dt: float
    T_end: float
    snapshot_stride: int = 10
    tol_E: float = 1e-6
    tol_F: float = 1e-5
    tol_bound: float = 1e-3
    tol_consistency: float = None
    breaking_tol: float = 1e-8
    check_consistency: bool = True
    relabel_every: float = None
    relabel_xi: float = None
    relabel_guard: float = 0.05


class MonitorError(RuntimeError):
    """A conservation law or a-priori bound was violated beyond tolerance."""

    def __init__(self, monitor, T, value, tolerance):
        self.monitor = monitor
        self.T = T
        self.value = value
        self.tolerance = tolerance
        super().__init__(
            "monitor %s violated at T=%.6g: value %.6g exceeds tolerance %.6g"
            % (monitor, T, value, tolerance))


@dataclass
class TrajectoryLog:
    """Snapshots plus per-snapshot and per-step diagnostics of one run."""

    bounds: AprioriBounds
    config: StepperConfig
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    E: list = field(default_factory=list)
    F: list = field(default_factory=list)
    min_xi: list = field(default_factory=list)
    max_xi: list = field(default_factory=list)
    breaking_count: list = field(default_factory=list)
    min_u_breaking: list = field(default_factory=list)
    max_abs_ux: list = field(default_factory=list)
    sup_u2: list = field(default_factory=list)
    sup_P1: list = field(default_factory=list)
    sup_dxP1: list = field(default_factory=list)
    sup_P2: list = field(default_factory=list)
    sup_dxP2: list = field(default_factory=list)
    consistency: list = field(default_factory=list)
    consistency_scale: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    step_max_abs_ux: list = field(default_factory=list)
    step_breaking: list = field(default_factory=list)
    relabel_times: list = field(default_factory=list)
    relabel_skips: list = field(default_factory=list)

    @property
    def E0(self):
        return self.E[0]

    @property
    def F0(self):
        return self.F[0]

    def drift_E(self):
        """Max relative E drift over the logged snapshots."""
        e = np.asarray(self.E)
        return float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))

    def drift_F(self):
        """Max F drift (absolute when |F(0)| <= 1, else relative)."""
        f = np.asarray(self.F)
        return float(np.max(np.abs(f - f[0])) / max(abs(f[0]), 1.0))


def _step_diagnostics(state, breaking_tol):
    c2 = np.cos(0.5 * state.v) ** 2
    broken = c2 <= breaking_tol
    ok = ~broken
    if ok.any():
        max_ux = float(np.max(np.abs(np.tan(0.5 * state.v[ok]))))
    else:
        max_ux = np.inf
    return c2, broken, max_ux


def _record(log, state, breaking_tol, fields=None):
    c2, broken, max_ux = _step_diagnostics(state, breaking_tol)
    if fields is None:
        fields = nonlocal_fields(state)
    log.times.append(state.T)
    log.snapshots.append(state)
    log.E.append(energy_E(state))
    log.F.append(energy_F(state))
    log.min_xi.append(float(np.min(state.xi)))
    log.max_xi.append(float(np.max(state.xi)))
    log.breaking_count.append(len(true_runs(broken)))
    if broken.any():
        log.min_u_breaking.append(float(np.min(np.abs(state.u[broken]))))
    else:
        log.min_u_breaking.append(np.nan)
    log.max_abs_ux.append(max_ux)
    log.sup_u2.append(float(np.max(state.u ** 2)))
    log.sup_P1.append(float(np.max(np.abs(fields.P1))))
    log.sup_dxP1.append(float(np.max(np.abs(fields.dxP1))))
    log.sup_P2.append(float(np.max(np.abs(fields.P2))))
    log.sup_dxP2.append(float(np.max(np.abs(fields.dxP2))))
    log.consistency.append(consistency_residual(state))
    log.consistency_scale.append(consistency_scale(state))


def _check_monitors(log, config):
    b = log.bounds
    T = log.times[-1]
    slack = 1.0 + config.tol_bound

    dE = abs(log.E[-1] - log.E[0]) / max(abs(log.E[0]), 1e-300)
    if dE > config.tol_E:
        raise MonitorError("E-drift", T, dE, config.tol_E)
    dF = abs(log.F[-1] - log.F[0]) / max(abs(log.F[0]), 1.0)
    if dF > config.tol_F:
        raise MonitorError("F-drift", T, dF, config.tol_F)

    # loose hard envelope for xi; the tight one is a reporting concern
    lo = 0.5 * np.exp(-b.A0 * T)
    hi = 2.0 * np.exp(b.A0 * T)
    if log.min_xi[-1] < lo or log.max_xi[-1] > hi:
        raise MonitorError("xi-envelope", T, log.min_xi[-1]
                           if log.min_xi[-1] < lo else log.max_xi[-1],
                           lo if log.min_xi[-1] < lo else hi)

    if log.sup_u2[-1] > slack * b.E0 and b.E0 > 0:
        raise MonitorError("sup-u^2", T, log.sup_u2[-1], slack * b.E0)
    for name, val, bound in (("sup-P1", log.sup_P1[-1], b.p1_bound),
                             ("sup-dxP1", log.sup_dxP1[-1], b.p1_bound),
                             ("sup-P2", log.sup_P2[-1], b.p2_bound),
                             ("sup-dxP2", log.sup_dxP2[-1], b.p2_bound)):
        if val > slack * bound + 1e-300:
            raise MonitorError(name, T, val, slack * bound)

    if config.check_consistency:
        tol_c = config.tol_consistency
        if tol_c is None:
            tol_c = 1e-6 * (1.0 + log.max_xi[-1])
        allowed = tol_c + 4.0 * log.consistency_scale[-1]
        if log.consistency[-1] > allowed:
            raise MonitorError("map-consistency", T, log.consistency[-1],
                               allowed)


def integrate(state, config, bounds=None):
    """Run fixed-step RK4 from ``state`` to T_end with monitors on.

    Returns a TrajectoryLog.  Raises ValueError for an infeasible
    configuration (dt too large against the Lipschitz constant: the run
    requires dt * A0 <= 0.5; T_end not a multiple of dt), MonitorError when
    a conservation or bound monitor trips.
    """
    E0 = energy_E(state)
    F0 = energy_F(state)
    if bounds is None:
        bounds = apriori_bounds(E0, F0)
    if config.dt <= 0:
        raise ValueError("dt must be positive, got %g" % config.dt)
    if config.dt * bounds.A0 > 0.5:
        raise ValueError(
            "dt=%g is too large for this datum: dt * A0 = %g exceeds 0.5 "
            "(A0 = %g); reduce dt" % (config.dt, config.dt * bounds.A0,
                                      bounds.A0))
    n_steps = int(round(config.T_end / config.dt))
    if abs(n_steps * config.dt - config.T_end) > 1e-9 * max(config.T_end, 1.0):
        raise ValueError("T_end=%g is not a multiple of dt=%g"
                         % (config.T_end, config.dt))
    if config.snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    relabel_stride = 0
    if config.relabel_every is not None:
        relabel_stride = int(round(config.relabel_every / config.dt))
        if relabel_stride < 1 or abs(relabel_stride * config.dt
                                     - config.relabel_every) \
                > 1e-9 * config.relabel_every:
            raise ValueError("relabel_every=%g is not a multiple of dt=%g"
                             % (config.relabel_every, config.dt))
    if config.relabel_xi is not None and config.relabel_xi <= 1.0:
        raise ValueError("relabel_xi must exceed 1 (fresh labels have "
                         "xi = 1), got %g" % config.relabel_xi)
    xi_trigger = config.relabel_xi

    log = TrajectoryLog(bounds=bounds, config=config)
    _record(log, state, config.breaking_tol)
    _check_monitors(log, config)

    for k in range(1, n_steps + 1):
        state = rk4_step(state, config.dt)
        # per-step breaking diagnostics (cheap: one trig pass)
        c2, broken, max_ux = _step_diagnostics(state, config.breaking_tol)
        log.step_times.append(state.T)
        log.step_max_abs_ux.append(max_ux)
        log.step_breaking.append(len(true_runs(broken)))
        relabeled = False
        due = relabel_stride and k % relabel_stride == 0
        if xi_trigger is not None and not due:
            due = float(np.max(state.xi)) > xi_trigger
        if due and k < n_steps:
            if float(np.min(c2)) <= config.relabel_guard:
                log.relabel_skips.append(state.T)
                if xi_trigger is not None:
                    xi_trigger = 1.25 * float(np.max(state.xi))
            else:
                try:
                    state = resample_state(state)
                except ValueError:
                    log.relabel_skips.append(state.T)
                    if xi_trigger is not None:
                        xi_trigger = 1.25 * float(np.max(state.xi))
                else:
                    log.relabel_times.append(state.T)
                    xi_trigger = config.relabel_xi
                    relabeled = True
        if k % config.snapshot_stride == 0 or k == n_steps or relabeled:
            _record(log, state, config.breaking_tol)
            _check_monitors(log, config)
    return log
