"""Projection to physical space, energy measures, and weak-form checks.

A label-space state maps to a physical profile u(t, x) that is well defined
even where characteristics have collapsed (wave breaking): there x is
constant across a whole label interval (a plateau), u is constant on it,
and the slope energy u_x^2 dx concentrates into an atom of the defect
measure mu rather than appearing as a function value.  ``project``
collapses those plateaus; ``measure_mu`` reports the interval masses and
the absolutely-continuous/singular split; the two ``*_residual`` functions
verify the weak formulation of the equation and of the energy-measure
balance against compactly supported test functions.

All integrals are evaluated in the label variable via the exact
substitutions

    dx        = xi cos^4(v/2) dY          u_x dx   = xi sin(v/2) cos^3 dY
    u_x^2 dx  = xi sin^2 cos^2 dY         u_x^3 dx = xi sin^3 cos dY
    u_x^4 dx  = xi sin^4(v/2) dY

(half-angle everywhere), so nothing degenerates at breaking.  Only mu_ac is
deliberately computed in x-space from the projected slopes — it is the
independent cross-check that the singular part is exactly what the
projection dropped.
"""

from dataclasses import dataclass

import numpy as np

from .lagrangian import nonlocal_fields
from ._util import cumtrapz0, true_runs

DEFAULT_BREAKING_TOL = 1e-8


@dataclass
class EulerianSnapshot:
    """Physical-space profile at one time.

    x is strictly increasing (plateaus merged to single nodes), ux carries
    tan(v/2) where defined and NaN where not; ux_defined is the mask.
    plateau_intervals lists (x_value, label_index_lo, label_index_hi) per
    merged plateau, indices referring to the source state's grid.
    """

    t: float
    x: np.ndarray
    u: np.ndarray
    ux: np.ndarray
    ux_defined: np.ndarray
    plateau_intervals: list


@dataclass
class BreakingInterval:
    """A maximal label interval where cos^2(v/2) is below the breaking tol."""

    i_lo: int
    i_hi: int
    y_lo: float
    y_hi: float
    min_abs_u: float


@dataclass
class MeasureReport:
    """Masses of the energy measures on one x interval.

    mu_mass is the full defect-measure mass mu((a, b)); mu_ac the x-space
    integral of u_x^4 over its non-plateau part; mu_sing the mass carried by
    breaking labels; nu_mass the higher-order measure
    int (u^4 + 2 u^2 u_x^2) dx - (1/3) mu over the interval.
    """

    interval: tuple
    mu_mass: float
    mu_ac: float
    mu_sing: float
    nu_mass: float


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def project(state, breaking_tol=DEFAULT_BREAKING_TOL, eps_mono=None,
            u_tol=None):
    """Collapse the label-space state to a physical-space profile.

    Consecutive nodes whose x differ by at most ``eps_mono`` (default
    1e-12 of the x span) merge into one output node carrying the mean u.
    u must be single valued at a point, so the merge is rejected with
    ValueError if u varies across it by more than the run's own
    label-space variation budget int |u_Y| dY = int |xi sin cos^3| dY
    plus a floor ``u_tol`` (default 1e-6 * (1 + max xi)).  On a true
    breaking plateau the budget is ~0 (|cos|^3 -> 0) and the check is
    strict; across a transported crest kink it allows exactly the u
    variation the state itself carries there (labels can momentarily
    swap x order by discretization error at a kink without that being a
    solver bug).  Slopes are tan(v/2), defined only on labels clear of
    breaking (cos^2(v/2) > breaking_tol).
    """
    x = state.x
    span = float(x[-1] - x[0])
    if eps_mono is None:
        eps_mono = 1e-12 * max(span, 1.0)
    if u_tol is None:
        u_tol = 1e-6 * (1.0 + float(np.max(state.xi)))

    sh = np.sin(0.5 * state.v)
    ch = np.cos(0.5 * state.v)
    c2 = ch * ch
    defined = c2 > breaking_tol
    ux_src = np.where(defined, np.tan(0.5 * state.v), np.nan)
    uy_abs = np.abs(state.xi * sh * ch * c2)

    # group boundaries: new group where x advances by more than eps_mono
    new_group = np.empty(state.N, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(x) > eps_mono
    gid = np.cumsum(new_group) - 1
    n_groups = int(gid[-1]) + 1
    counts = np.bincount(gid, minlength=n_groups)
    x_c = np.bincount(gid, weights=x, minlength=n_groups) / counts
    u_c = np.bincount(gid, weights=state.u, minlength=n_groups) / counts

    plateaus = []
    ux_c = np.full(n_groups, np.nan)
    def_c = np.zeros(n_groups, dtype=bool)
    starts = np.flatnonzero(new_group)
    stops = np.append(starts[1:], state.N) - 1
    for g, (i0, i1) in enumerate(zip(starts, stops)):
        if i1 > i0:
            umax = float(np.max(state.u[i0:i1 + 1]))
            umin = float(np.min(state.u[i0:i1 + 1]))
            seg = uy_abs[i0:i1 + 1]
            budget = u_tol + float(state.h * np.sum(0.5 * (seg[1:]
                                                           + seg[:-1])))
            if umax - umin > budget:
                raise ValueError(
                    "plateau at x=%.6g (labels %d..%d) carries non-constant "
                    "u: spread %.3g exceeds %.3g"
                    % (x_c[g], i0, i1, umax - umin, budget))
            plateaus.append((float(x_c[g]), int(i0), int(i1)))
            # slope is undefined on a collapsed interval
        else:
            if defined[i0]:
                ux_c[g] = ux_src[i0]
                def_c[g] = True
    return EulerianSnapshot(t=state.T, x=x_c, u=u_c, ux=ux_c,
                            ux_defined=def_c, plateau_intervals=plateaus)


def eulerian_energy(snapshot):
    """x-space trapezoid of u^2 + u_x^2 over cells with defined slopes.

    This is a physical-space quadrature on the (non-uniform) image grid, so
    it agrees with the label-space invariant E only to quadrature accuracy,
    not to conservation accuracy.
    """
    ok = snapshot.ux_defined
    f = snapshot.u ** 2 + np.where(ok, snapshot.ux, 0.0) ** 2
    both = ok[1:] & ok[:-1]
    dx = np.diff(snapshot.x)
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * dx * both))


def detect_breaking(state, breaking_tol=DEFAULT_BREAKING_TOL):
    """Maximal label intervals at/through breaking, with their min |u|."""
    c2 = np.cos(0.5 * state.v) ** 2
    out = []
    for i0, i1 in true_runs(c2 <= breaking_tol):
        out.append(BreakingInterval(
            i_lo=i0, i_hi=i1,
            y_lo=float(state.Y[i0]), y_hi=float(state.Y[i1]),
            min_abs_u=float(np.min(np.abs(state.u[i0:i1 + 1])))))
    return out


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def _label_of_x(state, q, eps_mono):
    """Fractional label index where x crosses q (plateau -> its midpoint)."""
    x = state.x
    if q <= x[0]:
        return 0.0
    if q >= x[-1]:
        return float(state.N - 1)
    j = int(np.searchsorted(x, q, side="left"))
    lo = j
    while lo > 0 and x[j] - x[lo - 1] <= eps_mono:
        lo -= 1
    hi = j
    while hi < state.N - 1 and x[hi + 1] - x[j] <= eps_mono:
        hi += 1
    if hi > lo and abs(float(x[j]) - q) <= eps_mono:
        return 0.5 * (lo + hi)
    dxc = x[j] - x[j - 1]
    frac = (q - x[j - 1]) / dxc if dxc > 0 else 0.5
    return (j - 1) + float(frac)


def _cum_at(cum, idx):
    """Evaluate a cumulative-node array at a fractional index."""
    i = int(np.floor(idx))
    if i >= cum.shape[0] - 1:
        return float(cum[-1])
    return float(cum[i] + (idx - i) * (cum[i + 1] - cum[i]))


def measure_mu(state, interval, breaking_tol=DEFAULT_BREAKING_TOL,
               eps_mono=None):
    """Masses of the energy measures mu and nu on an open x interval (a, b).

    mu carries density xi sin^4(v/2) in the label variable; its singular
    part lives on breaking labels, its absolutely continuous part has
    density u_x^4 in x.  mu_ac is integrated in x-space from the projected
    slopes (independent route); mu_mass, mu_sing, nu_mass in label space.
    """
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError("interval must satisfy b > a, got %r" % (interval,))
    span = float(state.x[-1] - state.x[0])
    if eps_mono is None:
        eps_mono = 1e-12 * max(span, 1.0)

    s2 = np.sin(0.5 * state.v) ** 2
    c2 = 1.0 - s2
    dens_mu = state.xi * s2 * s2
    dens_nu = state.xi * (state.u ** 4 * c2 * c2
                          + 2.0 * state.u ** 2 * c2 * s2)
    cum_mu = cumtrapz0(dens_mu, dx=state.h)
    cum_nu = cumtrapz0(dens_nu, dx=state.h)

    ia = _label_of_x(state, a, eps_mono)
    ib = _label_of_x(state, b, eps_mono)
    mu_mass = _cum_at(cum_mu, ib) - _cum_at(cum_mu, ia)
    nu_int = _cum_at(cum_nu, ib) - _cum_at(cum_nu, ia)

    # singular part: breaking runs whose x sits inside (a, b)
    mu_sing = 0.0
    for i0, i1 in true_runs(c2 <= breaking_tol):
        if i1 == i0:
            continue  # zero label width carries zero mass
        xa = float(state.x[i0])
        if a < xa < b:
            mu_sing += float(cum_mu[i1] - cum_mu[i0])

    # a.c. part, x-space: trapezoid of u_x^4 over non-breaking cells in (a,b)
    defined = c2 > breaking_tol
    ux4 = np.where(defined, np.tan(0.5 * state.v), 0.0) ** 4
    inside = (state.x > a) & (state.x < b)
    okcell = defined[1:] & defined[:-1] & inside[1:] & inside[:-1]
    dx = np.diff(state.x)
    mu_ac = float(np.sum(0.5 * (ux4[1:] + ux4[:-1]) * dx * okcell))

    return MeasureReport(interval=(a, b), mu_mass=float(mu_mass),
                         mu_ac=mu_ac, mu_sing=float(mu_sing),
                         nu_mass=float(nu_int - mu_mass / 3.0))


# ---------------------------------------------------------------------------
# weak-form residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpTestFunction:
    """Tensorized C^2 bump phi(t, x) = b((t-tc)/rt) b((x-xc)/rx).

    b(r) = (1 - r^2)^3 for |r| < 1, 0 outside: twice continuously
    differentiable with analytic derivatives, which is all the weak forms
    need.  Support must fit inside the computed space-time window.
    """

    t_center: float
    t_radius: float
    x_center: float
    x_radius: float

    @staticmethod
    def _b(r):
        w = np.maximum(1.0 - r * r, 0.0)
        return w ** 3

    @staticmethod
    def _db(r):
        w = np.maximum(1.0 - r * r, 0.0)
        return -6.0 * r * w ** 2

    def value(self, t, x):
        rt = (t - self.t_center) / self.t_radius
        rx = (np.asarray(x) - self.x_center) / self.x_radius
        return self._b(rt) * self._b(rx)

    def dt(self, t, x):
        rt = (t - self.t_center) / self.t_radius
        rx = (np.asarray(x) - self.x_center) / self.x_radius
        return self._db(rt) / self.t_radius * self._b(rx)

    def dx(self, t, x):
        rt = (t - self.t_center) / self.t_radius
        rx = (np.asarray(x) - self.x_center) / self.x_radius
        return self._b(rt) * self._db(rx) / self.x_radius


def _check_support(log, testfn):
    t_hi = testfn.t_center + testfn.t_radius
    if t_hi > log.times[-1] + 1e-12:
        raise ValueError("test function support ends at t=%g, beyond the "
                         "computed horizon %g" % (t_hi, log.times[-1]))
    x_lo = testfn.x_center - testfn.x_radius
    x_hi = testfn.x_center + testfn.x_radius
    for state in log.snapshots:
        if x_lo < state.x[0] - 1e-12 or x_hi > state.x[-1] + 1e-12:
            raise ValueError("test function support [%g, %g] leaves the "
                             "computed window [%g, %g]"
                             % (x_lo, x_hi, state.x[0], state.x[-1]))


def weak_form_residual(log, testfn):
    """Residual of the weak equation for w = u_x against one test function.

    Evaluates, entirely in label variables,

        int_t int { -u_x (phi_t + u^2 phi_x)
                    + (-(3/2) u u_x^2 - u^3 + P1 + dxP2) phi } dx dt
        + int u0_x phi(0, x) dx

    which vanishes for exact conservative solutions.  Space integrals by
    trapezoid on the label grid, time integral by trapezoid over snapshot
    times.  Returns the signed residual.
    """
    _check_support(log, testfn)
    vals = np.empty(len(log.times))
    for k, state in enumerate(log.snapshots):
        s = np.sin(0.5 * state.v)
        c = np.cos(0.5 * state.v)
        xi = state.xi
        u = state.u
        f = nonlocal_fields(state)
        phi = testfn.value(state.T, state.x)
        if not phi.any():
            vals[k] = 0.0
            continue
        adv = testfn.dt(state.T, state.x) + u ** 2 * testfn.dx(state.T, state.x)
        integrand = (-adv * xi * s * c ** 3
                     + (-1.5 * u * xi * s ** 2 * c ** 2
                        - u ** 3 * xi * c ** 4
                        + (f.P1 + f.dxP2) * xi * c ** 4) * phi)
        vals[k] = np.trapezoid(integrand, dx=state.h)
    total = float(np.trapezoid(vals, np.asarray(log.times)))

    s0 = np.sin(0.5 * log.snapshots[0].v)
    c0 = np.cos(0.5 * log.snapshots[0].v)
    init = log.snapshots[0].xi * s0 * c0 ** 3 \
        * testfn.value(log.times[0], log.snapshots[0].x)
    total += float(np.trapezoid(init, dx=log.snapshots[0].h))
    return total


def measure_balance_residual(log, testfn):
    """Residual of the transport balance of the defect measure mu.

    Evaluates

        int_t { int (phi_t + u^2 phi_x) dmu_t
                + int 4 u_x^3 (u^3 - P1 - dxP2) phi dx } dt
        - int u0_x^4 phi(0, x) dx

    in label variables (dmu = xi sin^4(v/2) dY, u_x^3 dx = xi sin^3 cos dY).
    Vanishes for exact conservative solutions; returns the signed residual.
    """
    _check_support(log, testfn)
    vals = np.empty(len(log.times))
    for k, state in enumerate(log.snapshots):
        s = np.sin(0.5 * state.v)
        c = np.cos(0.5 * state.v)
        xi = state.xi
        u = state.u
        phi = testfn.value(state.T, state.x)
        if not phi.any():
            vals[k] = 0.0
            continue
        f = nonlocal_fields(state)
        adv = testfn.dt(state.T, state.x) + u ** 2 * testfn.dx(state.T, state.x)
        integrand = (adv * xi * s ** 4
                     + 4.0 * (u ** 3 - f.P1 - f.dxP2) * xi * s ** 3 * c * phi)
        vals[k] = np.trapezoid(integrand, dx=state.h)
    total = float(np.trapezoid(vals, np.asarray(log.times)))

    s0 = np.sin(0.5 * log.snapshots[0].v)
    init = log.snapshots[0].xi * s0 ** 4 \
        * testfn.value(log.times[0], log.snapshots[0].x)
    total -= float(np.trapezoid(init, dx=log.snapshots[0].h))
    return total


# ---------------------------------------------------------------------------
# regularity probe
# ---------------------------------------------------------------------------

def holder_quotient(snapshot, min_pairs=10000):
    """Largest |u(x) - u(y)| / |x - y|^(3/4) over a stratified pair sample.

    Pairs are taken at dyadic index lags (1, 2, 4, ...) with deterministic
    strides chosen so at least ``min_pairs`` pairs are examined in total
    (all scales covered).  Conservative solutions stay 3/4-Holder with
    constant controlled by the energies, so this quotient must stay bounded
    under refinement.
    """
    x = snapshot.x
    u = snapshot.u
    n = x.shape[0]
    if n < 2:
        return 0.0
    lags = []
    lag = 1
    while lag < n:
        lags.append(lag)
        lag *= 2
    per_scale = max(1, int(np.ceil(min_pairs / len(lags))))
    best = 0.0
    for lag in lags:
        m = n - lag
        stride = max(1, m // per_scale)
        i = np.arange(0, m, stride)
        dx = x[i + lag] - x[i]
        du = np.abs(u[i + lag] - u[i])
        ok = dx > 0
        if ok.any():
            q = du[ok] / dx[ok] ** 0.75
            best = max(best, float(np.max(q)))
    return best
