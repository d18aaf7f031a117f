"""Characteristic paths and the slowed time-like coordinate beta.

Characteristics dx/dt = u^2 are non-unique at breaking points.  The
selection principle that singles out the conservative flow re-labels space
by

    beta(t, x) = x + mu_t((-inf, x)) + theta * mu_t({x}),   theta in [0, 1],

which absorbs the defect measure's atoms: in beta the flow map is
bi-Lipschitz and paths never cross.  beta evolves along a path by
d beta/dt = G(t, beta) with

    G = int_{-inf}^{x(beta)} [ 2 u u_x + 4 u_x^3 (u^3 - P1 - dxP2) ] dx,

and u along any such path satisfies du/dt = -(dxP1 + P2), the pointwise
characterization used by the trace residual.

Everything here is evaluated in label coordinates via the cumulative tables

    B(Y) = x(Y) + int xi sin^4(v/2) dY'          (the beta map)
    S(Y) = int xi [ u sin v cos^2(v/2)
                    + 4 (u^3 - P1 - dxP2) sin^3(v/2) cos(v/2) ] dY'

(so G(beta) = S(B^{-1}(beta))); both stay regular through breaking.  B is
strictly increasing in Y (its density xi (cos^4 + sin^4) is at least xi/2),
so inversion is well posed even where x(Y) and A(Y) flatten.

``evolve_beta_frame`` integrates the closed system (beta, x, u, v) directly
on a moving cloud of beta-labeled nodes — an independent solver used to
cross-check the main one (uniqueness machinery made executable).
"""

from dataclasses import dataclass

import numpy as np

from .lagrangian import nonlocal_fields, validate_state  # noqa: F401
from ._sweeps import exp_sweeps
from ._util import cumtrapz0


@dataclass
class BetaCoordinate:
    """beta label of one physical point at one time."""

    t: float
    x: float
    beta: float
    theta: float


@dataclass
class CharacteristicPath:
    """One conservative characteristic sampled at snapshot times."""

    y_bar: float
    t: np.ndarray
    beta: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    ucar_residual: np.ndarray


# ---------------------------------------------------------------------------
# per-snapshot tables
# ---------------------------------------------------------------------------

def _beta_table(state):
    """Cumulative beta(Y) over the grid: x + mass of mu to the left."""
    s2 = np.sin(0.5 * state.v) ** 2
    return state.x + cumtrapz0(state.xi * s2 * s2, dx=state.h)


def _g_table(state, fields=None):
    """Cumulative G(Y): label-space integral of the beta speed density."""
    if fields is None:
        fields = nonlocal_fields(state)
    s = np.sin(0.5 * state.v)
    c = np.cos(0.5 * state.v)
    u = state.u
    g = state.xi * (2.0 * u * s * c ** 3
                    + 4.0 * (u ** 3 - fields.P1 - fields.dxP2) * s ** 3 * c)
    return cumtrapz0(g, dx=state.h)


def beta_of_x(state, x_query, eps_mono=None):
    """beta label of the physical point x_query at the state's time.

    On a plateau (an atom of mu) the query carries no sub-atom information,
    so the midpoint theta = 1/2 is returned, keeping beta strictly between
    the atom's endpoints.
    """
    from .eulerian import _label_of_x  # shared fractional-index locator

    span = float(state.x[-1] - state.x[0])
    if eps_mono is None:
        eps_mono = 1e-12 * max(span, 1.0)
    B = _beta_table(state)
    idx = _label_of_x(state, float(x_query), eps_mono)
    i = int(np.floor(idx))
    if i >= state.N - 1:
        beta = float(B[-1]) + (float(x_query) - float(state.x[-1]))
        return BetaCoordinate(t=state.T, x=float(x_query), beta=beta,
                              theta=0.5)
    if i < 0:
        beta = float(B[0]) + (float(x_query) - float(state.x[0]))
        return BetaCoordinate(t=state.T, x=float(x_query), beta=beta,
                              theta=0.5)
    frac = idx - i
    beta = float(B[i] + frac * (B[i + 1] - B[i]))
    # theta: position inside the atom if the point is one (else 1/2 by
    # convention, since there is no atom to stand inside)
    theta = 0.5
    return BetaCoordinate(t=state.T, x=float(x_query), beta=beta, theta=theta)


def _x_of_beta(state, beta, B=None):
    """Invert the beta map: fractional label index for a beta value.

    Linear outside the table (vacuum continuation: beta - x constant).
    """
    if B is None:
        B = _beta_table(state)
    n = B.shape[0]
    b = float(beta)
    if b <= B[0]:
        return -1.0, b - float(B[0])  # negative sentinel + offset
    if b >= B[-1]:
        return float(n), b - float(B[-1])
    j = int(np.searchsorted(B, b, side="right"))
    frac = (b - B[j - 1]) / (B[j] - B[j - 1])
    return (j - 1) + float(frac), 0.0


def _sample_at(arr, idx, offset=0.0, slope=0.0):
    """Linear sample of a node array at fractional index (with tail slope)."""
    n = arr.shape[0]
    if idx < 0:
        return float(arr[0]) + slope * offset
    if idx >= n:
        return float(arr[-1]) + slope * offset
    i = int(np.floor(idx))
    if i >= n - 1:
        return float(arr[-1])
    f = idx - i
    return float(arr[i] + f * (arr[i + 1] - arr[i]))


def G_eval(state, beta, fields=None):
    """The beta speed G(t, beta) for the state's time."""
    B = _beta_table(state)
    S = _g_table(state, fields)
    idx, _ = _x_of_beta(state, beta, B)
    if idx < 0:
        return float(S[0])
    if idx >= state.N:
        return float(S[-1])
    i = int(np.floor(idx))
    if i >= state.N - 1:
        return float(S[-1])
    f = idx - i
    return float(S[i] + f * (S[i + 1] - S[i]))


# ---------------------------------------------------------------------------
# tracing through a trajectory log
# ---------------------------------------------------------------------------

class _SnapshotTables:
    """B, S and field tables for every snapshot of a log (built lazily once)."""

    def __init__(self, log):
        self.log = log
        self.B = []
        self.S = []
        self.drift = []  # dxP1 + P2 per snapshot (du/dt = -drift)
        for state in log.snapshots:
            f = nonlocal_fields(state)
            self.B.append(_beta_table(state))
            self.S.append(_g_table(state, f))
            self.drift.append(f.dxP1 + f.P2)

    def g(self, k, beta):
        """G at snapshot k, beta."""
        state = self.log.snapshots[k]
        idx, _ = _x_of_beta(state, beta, self.B[k])
        S = self.S[k]
        if idx < 0:
            return float(S[0])
        i = int(np.floor(idx))
        if i >= state.N - 1:
            return float(S[-1])
        return float(S[i] + (idx - i) * (S[i + 1] - S[i]))

    def g_between(self, k, w, beta):
        """G linearly interpolated in time between snapshots k and k+1."""
        if w <= 0.0:
            return self.g(k, beta)
        if w >= 1.0:
            return self.g(k + 1, beta)
        return (1.0 - w) * self.g(k, beta) + w * self.g(k + 1, beta)

    def sample(self, k, beta):
        """(x, u, v, drift) of the point beta at snapshot k."""
        state = self.log.snapshots[k]
        idx, off = _x_of_beta(state, beta, self.B[k])
        x = _sample_at(state.x, idx, off, slope=1.0)  # vacuum: dx = dbeta
        u = _sample_at(state.u, idx)
        v = _sample_at(state.v, idx)
        d = _sample_at(self.drift[k], idx)
        return x, u, v, d


def trace(log, y_bar, tables=None):
    """Follow the conservative characteristic through x = y_bar at t = 0.

    Integrates d beta/dt = G(t, beta) across the log's snapshot times with
    RK4 (G interpolated linearly in time between snapshots), reading off
    x, u, v at each snapshot by inverting the beta map there.  The returned
    ucar_residual holds, per snapshot time t_k,

        u(t_k) - u(0) + int_0^{t_k} (dxP1 + P2)(s, path(s)) ds

    (trapezoid in time), which vanishes along exact conservative
    characteristics.
    """
    if tables is None:
        tables = _SnapshotTables(log)
    times = np.asarray(log.times)
    n = times.shape[0]
    beta = np.empty(n)
    x = np.empty(n)
    u = np.empty(n)
    v = np.empty(n)
    drift = np.empty(n)

    beta[0] = beta_of_x(log.snapshots[0], y_bar).beta
    x[0], u[0], v[0], drift[0] = tables.sample(0, beta[0])

    for k in range(n - 1):
        dt = times[k + 1] - times[k]
        b0 = beta[k]
        k1 = tables.g_between(k, 0.0, b0)
        k2 = tables.g_between(k, 0.5, b0 + 0.5 * dt * k1)
        k3 = tables.g_between(k, 0.5, b0 + 0.5 * dt * k2)
        k4 = tables.g_between(k, 1.0, b0 + dt * k3)
        beta[k + 1] = b0 + dt / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
        x[k + 1], u[k + 1], v[k + 1], drift[k + 1] = \
            tables.sample(k + 1, beta[k + 1])

    residual = (u - u[0]) + cumtrapz0(drift, x=times)
    return CharacteristicPath(y_bar=float(y_bar), t=times, beta=beta, x=x,
                              u=u, v=v, ucar_residual=residual)


def trace_many(log, y_bars):
    """Trace several paths, sharing the per-snapshot tables."""
    tables = _SnapshotTables(log)
    return [trace(log, y, tables) for y in y_bars]


# ---------------------------------------------------------------------------
# independent solver in the beta frame
# ---------------------------------------------------------------------------

@dataclass
class BetaFrameRun:
    """Snapshots of the moving-node (beta, x, u, v) system.

    Arrays are (n_snapshots, n_nodes); row k holds the cloud at times[k].
    """

    times: np.ndarray
    beta: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def final_profile(self):
        """(x, u) of the last snapshot, sorted by x."""
        order = np.argsort(self.x[-1], kind="stable")
        return self.x[-1][order], self.u[-1][order]


def _beta_frame_rates(beta, x, u, v):
    """Right-hand side of the (beta, x, u, v) system on the node cloud.

    The measure change dbeta = xi (cos^4 + sin^4) dY eliminates xi: kernel
    distances and integrands pick up the density cos^4/(cos^4 + sin^4) and
    1/(cos^4 + sin^4) respectively, all bounded (the denominator is >= 1/2).
    """
    s = np.sin(0.5 * v)
    c = np.cos(0.5 * v)
    s2 = s * s
    c2 = c * c
    den = s2 * s2 + c2 * c2  # in [1/2, 1]
    w = c2 * c2 / den

    dbeta = np.diff(beta)
    dbeta = np.maximum(dbeta, 0.0)  # non-crossing holds; clamp fp jitter
    dA = 0.5 * (w[1:] + w[:-1]) * dbeta

    g1 = (0.75 * u * s2 * c2 + 0.5 * u ** 3 * c2 * c2) / den
    g2 = 0.25 * s2 * s * c / den
    (ip1, im1), (ip2, im2) = exp_sweeps(dA, dbeta, (g1, g2))
    p1 = ip1 + im1
    dxp1 = im1 - ip1
    p2 = ip2 + im2
    dxp2 = im2 - ip2

    g_dens = (2.0 * u * s * c ** 3
              + 4.0 * (u ** 3 - p1 - dxp2) * s ** 3 * c) / den
    g_cum = cumtrapz0(g_dens, x=beta)

    db = g_cum
    dx = u * u
    du = -(dxp1 + p2)
    dv = 2.0 * (-p1 - dxp2 + u ** 3) * c2 - u * s2
    return db, dx, du, dv


def evolve_beta_frame(datum, T_end, dt, n_nodes, half_width=None,
                      window=None, snapshot_stride=10, refine=16):
    """Integrate the (beta, x, u, v) system from a datum; independent solver.

    Initial nodes sit on a uniform grid in bar-beta(x) = x + cumulative
    u0'(x)^4, inverted on a ``refine``-times oversampled x grid.  Fixed-step
    RK4 with per-stage field evaluation, like the main solver.  Returns a
    BetaFrameRun with snapshots every ``snapshot_stride`` steps (first and
    last always included).
    """
    if window is None:
        if half_width is None:
            raise ValueError("pass either half_width or window")
        window = (-float(half_width), float(half_width))
    x_lo, x_hi = float(window[0]), float(window[1])
    m = refine * (n_nodes - 1) + 1
    x_f = np.linspace(x_lo, x_hi, m)
    du_f = datum.du0(x_f)
    bbar_f = x_f + cumtrapz0(du_f ** 4, x=x_f)
    bbar = np.linspace(bbar_f[0], bbar_f[-1], n_nodes)
    x0 = np.interp(bbar, bbar_f, x_f)

    beta = bbar.copy()
    x = x0
    u = datum.u0(x0)
    v = 2.0 * np.arctan(datum.du0(x0))

    n_steps = int(round(T_end / dt))
    if abs(n_steps * dt - T_end) > 1e-9 * max(T_end, 1.0):
        raise ValueError("T_end=%g is not a multiple of dt=%g" % (T_end, dt))

    times = [0.0]
    rows = [(beta.copy(), x.copy(), u.copy(), v.copy())]
    for k in range(1, n_steps + 1):
        k1 = _beta_frame_rates(beta, x, u, v)
        k2 = _beta_frame_rates(beta + 0.5 * dt * k1[0], x + 0.5 * dt * k1[1],
                               u + 0.5 * dt * k1[2], v + 0.5 * dt * k1[3])
        k3 = _beta_frame_rates(beta + 0.5 * dt * k2[0], x + 0.5 * dt * k2[1],
                               u + 0.5 * dt * k2[2], v + 0.5 * dt * k2[3])
        k4 = _beta_frame_rates(beta + dt * k3[0], x + dt * k3[1],
                               u + dt * k3[2], v + dt * k3[3])
        sixth = dt / 6.0
        beta = beta + sixth * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0])
        x = x + sixth * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1])
        u = u + sixth * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2])
        v = v + sixth * (k1[3] + 2.0 * (k2[3] + k3[3]) + k4[3])
        if k % snapshot_stride == 0 or k == n_steps:
            times.append(k * dt)
            rows.append((beta.copy(), x.copy(), u.copy(), v.copy()))

    return BetaFrameRun(
        times=np.asarray(times),
        beta=np.stack([r[0] for r in rows]),
        x=np.stack([r[1] for r in rows]),
        u=np.stack([r[2] for r in rows]),
        v=np.stack([r[3] for r in rows]))
