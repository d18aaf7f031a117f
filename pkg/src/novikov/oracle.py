"""Independent verification routes: closed forms and brute-force solvers.

Nothing here shares discretization machinery with the main solver beyond
raw numpy (the reference solver's convolutions use the sweep kernels only
as an exact O(M) rewriting of the plain trapezoid sum, see below).  These
are the oracles the test suite measures the production code against:

* :func:`peakon_value` — the exact peaked traveling wave.
* :func:`direct_convolution_fields` — the nonlocal fields by literal
  O(N^2) kernel-matrix quadrature, same trapezoid rule as the sweeps.
* :func:`reference_solve` — a textbook method-of-lines solver in physical
  space (uniform x grid, centered differences, direct convolutions, RK4),
  valid only before wave breaking.
* :func:`quadrature_energies` — initial invariants E0, F0 straight from
  the datum by kink-aware refined trapezoid sums with Richardson
  extrapolation, accurate to ~1e-12 for closed-form data.
"""

from dataclasses import dataclass

import numpy as np

from .eulerian import EulerianSnapshot
from .lagrangian import kernel_distance, _guarded_slope
from ._sweeps import exp_sweeps
from ._util import cumtrapz0


@dataclass(frozen=True)
class PeakonSpec:
    """Exact peaked traveling wave: sign sqrt(c) e^{-|x - c t - x0|}."""

    c: float
    sign: int = 1
    x0: float = 0.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("peakon speed c must be positive, got %r"
                             % (self.c,))
        if self.sign not in (1, -1):
            raise ValueError("peakon sign must be +1 or -1, got %r"
                             % (self.sign,))


def peakon_value(spec, t, x):
    """Exact peakon profile at time t and positions x."""
    x = np.asarray(x, dtype=np.float64)
    return spec.sign * np.sqrt(spec.c) * np.exp(-np.abs(x - spec.c * t
                                                        - spec.x0))


# ---------------------------------------------------------------------------
# direct quadrature of the nonlocal fields
# ---------------------------------------------------------------------------

def direct_convolution_fields(state):
    """Nonlocal fields by the literal O(N^2) kernel-matrix trapezoid sum.

    Same integrands, the same per-cell endpoint samples (including the
    one-sided right endpoints of kink cells), and the same pointwise
    diagonal corrections as ``nonlocal_fields``, but the cell sum runs
    against the full matrix exp(-|A_i - A_j|).  For the x-derivative
    variants each cell carries the sign of its position relative to the
    evaluation node; a node's own two adjacent endpoint contributions then
    cancel where the integrand is smooth.  Agreement with the sweep route
    is an exact-arithmetic identity; in floats they match to ~1e-13.
    """
    from .lagrangian import (NonlocalFields, kink_cells, right_face_values)

    a = kernel_distance(state)
    h = state.h
    n = state.N
    s = np.sin(0.5 * state.v)
    c = np.cos(0.5 * state.v)
    xi = state.xi
    u = state.u
    w = xi * c ** 4
    g1 = xi * (0.75 * u * s ** 2 * c ** 2 + 0.5 * u ** 3 * c ** 4)
    g2 = 0.25 * xi * s ** 3 * c
    kinks = kink_cells(state.v)

    ker = np.exp(-np.abs(a[:, None] - a[None, :]))
    kl = ker[:, :-1]          # kernel at each cell's left endpoint
    kr = ker[:, 1:]           # ... and right endpoint
    # cell j lies left of node i (sign -1) iff j < i
    sgn = np.where(np.arange(n - 1)[None, :] >= np.arange(n)[:, None],
                   1.0, -1.0)

    corr = h * h / 6.0
    dg1 = _guarded_slope(g1, state.v, h)
    dg2 = _guarded_slope(g2, state.v, h)
    out = []
    for g, dg in ((g1, dg1), (g2, dg2)):
        gl = 0.5 * h * g[:-1]
        gr = 0.5 * h * right_face_values(g, kinks)
        p = kl @ gl + kr @ gr - corr * w * g
        dxp = (kl * sgn) @ gl + (kr * sgn) @ gr + corr * dg
        out.append((p, dxp))
    (p1, dxp1), (p2, dxp2) = out
    return NonlocalFields(P1=p1, dxP1=dxp1, P2=p2, dxP2=dxp2)


# ---------------------------------------------------------------------------
# physical-space reference solver (pre-breaking only)
# ---------------------------------------------------------------------------

def _convolve_exp(dx, f):
    """(1/2) e^{-|x|} * f and its x-derivative on a uniform grid.

    Computed by the forward/backward exponential sweeps with constant cell
    distance dx — the exact telescoped form of the trapezoid sum of the
    convolution integral, in O(M) — plus the pointwise Euler-Maclaurin
    correction for the kernel kink at the diagonal (the same rule the
    label-space fields use, with unit cell density).
    """
    m = f.shape[0]
    da = np.full(m - 1, dx)
    (ip, im), = exp_sweeps(da, da, (f,))
    corr = dx * dx / 12.0
    df = np.gradient(f, dx, edge_order=2)
    conv = 0.5 * (ip + im) - corr * f
    dconv = 0.5 * (im - ip) + corr * df
    return conv, dconv


def reference_solve(datum, T_end, dt, M, half_width=None, window=None,
                    blowup_cap=1e3):
    """Method-of-lines solver in physical space; valid before breaking.

    Uniform grid of M points on the window, centered differences for u_x,
    direct kernel convolutions for the nonlocal terms, classical RK4 in
    time.  Aborts with RuntimeError once max |u_x| exceeds ``blowup_cap``
    times its initial value — past incipient breaking this discretization
    is meaningless and the label-space solver is the only valid route.
    """
    if window is None:
        if half_width is None:
            raise ValueError("pass either half_width or window")
        window = (-float(half_width), float(half_width))
    x = np.linspace(window[0], window[1], M)
    dx = float(x[1] - x[0])
    u = datum.u0(x)

    def slope(w):
        dw = np.empty_like(w)
        dw[1:-1] = (w[2:] - w[:-2]) / (2.0 * dx)
        dw[0] = (w[1] - w[0]) / dx
        dw[-1] = (w[-1] - w[-2]) / dx
        return dw

    def rate(w):
        wx = slope(w)
        p1, dxp1 = _convolve_exp(dx, 1.5 * w * wx ** 2 + w ** 3)
        conv2, dconv2 = _convolve_exp(dx, wx ** 3)
        p2 = 0.5 * conv2
        return -w ** 2 * wx - dxp1 - p2

    ux0 = float(np.max(np.abs(slope(u))))
    cap = blowup_cap * max(ux0, 1e-30)
    n_steps = int(round(T_end / dt))
    if abs(n_steps * dt - T_end) > 1e-9 * max(T_end, 1.0):
        raise ValueError("T_end=%g is not a multiple of dt=%g" % (T_end, dt))
    for k in range(n_steps):
        k1 = rate(u)
        k2 = rate(u + 0.5 * dt * k1)
        k3 = rate(u + 0.5 * dt * k2)
        k4 = rate(u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
        if float(np.max(np.abs(slope(u)))) > cap:
            raise RuntimeError(
                "slope grew %gx at t=%.6g: wave breaking is underway and "
                "this physical-space reference solver is only valid before "
                "breaking" % (blowup_cap, (k + 1) * dt))

    ux = slope(u)
    return EulerianSnapshot(t=float(n_steps * dt), x=x, u=u, ux=ux,
                            ux_defined=np.ones(M, dtype=bool),
                            plateau_intervals=[])


# ---------------------------------------------------------------------------
# initial invariants straight from the datum
# ---------------------------------------------------------------------------

def _panel_trapz(f, a, b, m, fb=None):
    xs = np.linspace(a, b, m + 1)
    fs = f(xs)
    if fb is not None:
        # right endpoint sits on a kink: use the limit from inside [a, b]
        fs[-1] = fb
    return float(np.trapezoid(fs, dx=(b - a) / m))


def _romberg2(f, a, b, m0, fb=None):
    """Trapezoid at m0, 2 m0, 4 m0 panels, two Richardson levels."""
    t1 = _panel_trapz(f, a, b, m0, fb)
    t2 = _panel_trapz(f, a, b, 2 * m0, fb)
    t3 = _panel_trapz(f, a, b, 4 * m0, fb)
    r1 = (4.0 * t2 - t1) / 3.0
    r2 = (4.0 * t3 - t2) / 3.0
    return (16.0 * r2 - r1) / 15.0


def quadrature_energies(datum, half_width=None, window=None, base_panels=1024):
    """Initial invariants (E0, F0) by refined quadrature of the datum.

    E0 = int u0^2 + u0'^2, F0 = int u0^4 + 2 u0^2 u0'^2 - (1/3) u0'^4.
    The window splits at the datum's kink points, so each panel's integrand
    is smooth and nested-trapezoid sums with two Richardson extrapolation
    levels converge past 1e-12 for closed-form data.  Tabulated data use
    the plain trapezoid on their own samples (there is nothing to refine
    against between samples).
    """
    if datum.kind == "tabulated":
        xs = datum.x_samples
        us = datum.u_samples
        dus = datum.du0(xs)
        e_dens = us ** 2 + dus ** 2
        f_dens = us ** 4 + 2.0 * us ** 2 * dus ** 2 - dus ** 4 / 3.0
        return (float(np.trapezoid(e_dens, xs)),
                float(np.trapezoid(f_dens, xs)))

    if window is None:
        if half_width is None:
            raise ValueError("pass either half_width or window")
        window = (-float(half_width), float(half_width))
    x_lo, x_hi = float(window[0]), float(window[1])

    kinks = [k for k in sorted(datum.kink_points) if x_lo < k < x_hi]
    cuts = [x_lo] + kinks + [x_hi]

    def dens(xs, du):
        u0 = datum.u0(xs)
        return (u0 ** 2 + du ** 2,
                u0 ** 4 + 2.0 * u0 ** 2 * du ** 2 - du ** 4 / 3.0)

    def e_dens(xs):
        return dens(xs, datum.du0(xs))[0]

    def f_dens(xs):
        return dens(xs, datum.du0(xs))[1]

    e0 = 0.0
    f0 = 0.0
    total = x_hi - x_lo
    for a, b in zip(cuts[:-1], cuts[1:]):
        m0 = max(64, int(round(base_panels * (b - a) / total)))
        # default du0 takes right-sided limits, correct at a; at b a kink
        # needs the limit from the left or the sample belongs to the next
        # segment (the two one-sided slopes differ in magnitude when other
        # crests' tails overlap the kink)
        if b in kinks:
            eb, fb = dens(np.asarray([b]), datum.du0(np.asarray([b]), side=-1))
            eb, fb = float(eb[0]), float(fb[0])
        else:
            eb = fb = None
        e0 += _romberg2(e_dens, a, b, m0, eb)
        f0 += _romberg2(f_dens, a, b, m0, fb)
    return e0, f0
