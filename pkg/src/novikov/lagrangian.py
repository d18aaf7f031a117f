"""Lagrangian (characteristic-coordinate) state and its evolution law.

The solver never works with u(t, x) directly.  It evolves the quadruple
(u, v, xi, x) on a fixed uniform grid in the characteristic label Y, where

* ``v = 2 arctan(u_x)`` is the slope angle (bounded even where u_x blows up),
* ``xi`` is the Jacobian-like density with ``x_Y = xi cos^4(v/2)``,
* ``x`` is the physical position of each label.

In these variables the equation becomes a semi-linear ODE system with
globally Lipschitz right-hand side: wave breaking (u_x -> -inf) is just
``v`` passing through pi, and the solution continues conservatively through
it.  The nonlocal terms are exponential-kernel integrals in the stretched
coordinate A(Y) (see :func:`kernel_distance`) and cost O(N) per evaluation
via the sweep kernels in ``_sweeps``.

The initial datum is resampled to uniform Y by inverting

    Y(x) = integral_0^x (1 + u0'(s)^2)^2 ds,

which equidistributes resolution so that steep gradients (incipient
breaking) stay resolved in x.
"""

from dataclasses import dataclass, field

import numpy as np

from ._sweeps import exp_sweeps

DEFAULT_EDGE_TOL = 1e-8
DEFAULT_REFINE = 16


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialDatum:
    """Initial profile u0, with enough structure to sample it accurately.

    Use the constructors :meth:`peakon`, :meth:`antipeakon_pair`,
    :meth:`gaussian`, :meth:`tabulated` rather than filling fields by hand.

    ``kink_points`` lists the x locations where u0' jumps (peaked crests);
    quadratures split their domains there so the profile is piecewise smooth
    on every panel.
    """

    kind: str
    params: dict = field(default_factory=dict)
    x_samples: np.ndarray = None
    u_samples: np.ndarray = None
    kink_points: tuple = ()

    @classmethod
    def peakon(cls, c=1.0, sign=1, x0=0.0):
        """Single peaked traveling wave sqrt(c) e^{-|x - x0|} (sign < 0 flips it)."""
        if c <= 0:
            raise ValueError("peakon speed c must be positive, got %r" % c)
        if sign not in (1, -1):
            raise ValueError("peakon sign must be +1 or -1, got %r" % sign)
        return cls(kind="peakon", params={"c": float(c), "sign": int(sign),
                                          "x0": float(x0)},
                   kink_points=(float(x0),))

    @classmethod
    def antipeakon_pair(cls, c=1.0, separation=6.0, center=0.0):
        """Antisymmetric peakon/antipeakon pair with crests ``separation`` apart.

        u0(x) = sqrt(c) e^{-|x - xL|} - sqrt(c) e^{-|x - xR|} with
        xL = center - separation/2, xR = center + separation/2.
        """
        if c <= 0:
            raise ValueError("pair speed c must be positive, got %r" % c)
        if separation <= 0:
            raise ValueError("separation must be positive, got %r" % separation)
        x_l = center - 0.5 * separation
        x_r = center + 0.5 * separation
        return cls(kind="antipeakon-pair",
                   params={"c": float(c), "separation": float(separation),
                           "center": float(center)},
                   kink_points=(x_l, x_r))

    @classmethod
    def gaussian(cls, amplitude=1.0, width=1.0, center=0.0):
        """Smooth bump amplitude * exp(-((x - center)/width)^2)."""
        if width <= 0:
            raise ValueError("width must be positive, got %r" % width)
        return cls(kind="gaussian",
                   params={"amplitude": float(amplitude),
                           "width": float(width), "center": float(center)})

    @classmethod
    def tabulated(cls, x, u):
        """Sampled profile; linear interpolation between strictly increasing x."""
        x = np.asarray(x, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        if x.ndim != 1 or x.shape != u.shape:
            raise ValueError("tabulated datum needs matching 1-d x and u arrays")
        if x.size < 4:
            raise ValueError("tabulated datum needs at least 4 samples")
        if not np.all(np.diff(x) > 0):
            raise ValueError("tabulated x samples must be strictly increasing")
        return cls(kind="tabulated", x_samples=x, u_samples=u)

    def u0(self, x):
        """Initial profile values at x (vectorized)."""
        x = np.asarray(x, dtype=np.float64)
        p = self.params
        if self.kind == "peakon":
            return p["sign"] * np.sqrt(p["c"]) * np.exp(-np.abs(x - p["x0"]))
        if self.kind == "antipeakon-pair":
            r = np.sqrt(p["c"])
            x_l, x_r = self.kink_points
            return r * (np.exp(-np.abs(x - x_l)) - np.exp(-np.abs(x - x_r)))
        if self.kind == "gaussian":
            z = (x - p["center"]) / p["width"]
            return p["amplitude"] * np.exp(-z * z)
        return np.interp(x, self.x_samples, self.u_samples)

    def du0(self, x, side=1):
        """Initial slope u0'(x); ``side`` picks the limit taken at crests.

        ``side=1`` (default) gives the right-sided limit, ``side=-1`` the
        left-sided one.  A one-sided limit is the exact panel-edge value
        for quadratures over the adjacent smooth segment, whereas the
        midpoint value 0 would poison them with an O(h) endpoint error.
        Off the kink points the two sides agree; for smooth or tabulated
        data ``side`` is ignored.
        """
        x = np.asarray(x, dtype=np.float64)
        p = self.params

        if side >= 0:
            def sgn(r):
                return np.where(r >= 0, 1.0, -1.0)
        else:
            def sgn(r):
                return np.where(r > 0, 1.0, -1.0)

        if self.kind == "peakon":
            return -p["sign"] * np.sqrt(p["c"]) * sgn(x - p["x0"]) \
                * np.exp(-np.abs(x - p["x0"]))
        if self.kind == "antipeakon-pair":
            r = np.sqrt(p["c"])
            x_l, x_r = self.kink_points
            return r * (-sgn(x - x_l) * np.exp(-np.abs(x - x_l))
                        + sgn(x - x_r) * np.exp(-np.abs(x - x_r)))
        if self.kind == "gaussian":
            z = (x - p["center"]) / p["width"]
            return p["amplitude"] * (-2.0 * z / p["width"]) * np.exp(-z * z)
        xs, us = self.x_samples, self.u_samples
        slopes = np.empty_like(us)
        slopes[1:-1] = (us[2:] - us[:-2]) / (xs[2:] - xs[:-2])
        slopes[0] = (us[1] - us[0]) / (xs[1] - xs[0])
        slopes[-1] = (us[-1] - us[-2]) / (xs[-1] - xs[-2])
        return np.interp(x, xs, slopes)


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

@dataclass
class LagrangianState:
    """Solution snapshot in characteristic coordinates on a uniform Y grid."""

    T: float
    Y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    x: np.ndarray

    @property
    def N(self):
        return self.Y.shape[0]

    @property
    def h(self):
        return (self.Y[-1] - self.Y[0]) / (self.Y.shape[0] - 1)

    def copy(self):
        return LagrangianState(self.T, self.Y, self.u.copy(), self.v.copy(),
                               self.xi.copy(), self.x.copy())


@dataclass
class NonlocalFields:
    """The four kernel integrals entering the right-hand side."""

    P1: np.ndarray
    dxP1: np.ndarray
    P2: np.ndarray
    dxP2: np.ndarray


def validate_state(state, eps_mono=None):
    """Check the structural invariants of a state; raise ValueError if broken.

    Checks: matching shapes, uniform strictly increasing Y, strictly positive
    xi, and x nondecreasing up to ``eps_mono`` (default 1e-12 of the x span).
    """
    n = state.Y.shape[0]
    for name in ("u", "v", "xi", "x"):
        arr = getattr(state, name)
        if arr.shape != (n,):
            raise ValueError("state field %s has shape %s, expected (%d,)"
                             % (name, arr.shape, n))
    dY = np.diff(state.Y)
    if n < 2 or not np.all(dY > 0):
        raise ValueError("Y grid must be strictly increasing")
    h = dY[0]
    if np.max(np.abs(dY - h)) > 1e-9 * h:
        raise ValueError("Y grid must be uniform")
    if not np.all(state.xi > 0):
        raise ValueError("xi must stay strictly positive (min %g)"
                         % float(np.min(state.xi)))
    span = float(state.x[-1] - state.x[0])
    if eps_mono is None:
        eps_mono = 1e-12 * max(span, 1.0)
    if np.min(np.diff(state.x)) < -eps_mono:
        raise ValueError("x must be nondecreasing (min increment %g)"
                         % float(np.min(np.diff(state.x))))


def consistency_residual(state):
    """Max deviation of the discrete map derivative x_Y from xi cos^4(v/2).

    Uses centered differences on interior nodes.  Cells where v jumps by
    more than 1 radian (crest kinks, breaking fronts) carry no
    finite-difference consistency and are skipped.
    """
    h = state.h
    c2 = np.cos(0.5 * state.v) ** 2
    target = state.xi * c2 * c2
    r = np.abs((state.x[2:] - state.x[:-2]) / (2.0 * h) - target[1:-1])
    jump = np.abs(np.diff(state.v)) > 1.0
    bad = jump[1:] | jump[:-1]
    r = r[~bad]
    return float(np.max(r)) if r.size else 0.0


def consistency_scale(state):
    """Expected size of the map-consistency residual for an exact solution.

    The centered difference in :func:`consistency_residual` has truncation
    error h^2/6 d^2(xi cos^4)/dY^2 even when the state is perfectly
    consistent, and that curvature grows as the profile steepens.  This
    returns (1/6) max |second difference of xi cos^4| over the same stencils
    the residual uses, which estimates exactly that term; a residual well
    above it signals genuine inconsistency rather than discretization.
    """
    c2 = np.cos(0.5 * state.v) ** 2
    target = state.xi * c2 * c2
    d2 = np.abs(target[2:] - 2.0 * target[1:-1] + target[:-2])
    jump = np.abs(np.diff(state.v)) > 1.0
    bad = jump[1:] | jump[:-1]
    d2 = d2[~bad]
    return float(np.max(d2)) / 6.0 if d2.size else 0.0


# ---------------------------------------------------------------------------
# construction from a datum
# ---------------------------------------------------------------------------

def build_initial_state(datum, N, half_width=None, window=None,
                        refine=DEFAULT_REFINE, edge_tol=DEFAULT_EDGE_TOL):
    """Sample a datum on a truncation window and transform to label space.

    Parameters
    ----------
    datum : InitialDatum
    N : int
        Number of label grid points (>= 16).
    half_width : float, optional
        Symmetric window [-half_width, half_width]; alternative to ``window``.
    window : (float, float), optional
        Explicit truncation window (x_lo, x_hi).
    refine : int
        Oversampling factor of the x grid used to build and invert the label
        map Y(x) = integral of (1 + u0'^2)^2 (at least 8).
    edge_tol : float
        Maximum allowed |u0| at the window edges, relative to max |u0|.
        Outside the window the solution is treated as vacuum, which is exact
        only up to the neglected tails.

    Returns
    -------
    LagrangianState at T = 0 with xi = 1 and v = 2 arctan(u0').  Up to two
    kink points of the datum are aligned exactly with grid nodes (see
    :func:`_snapped_grid`); the node on a kink carries the right-side limit
    of u0', matching the one-sided quadrature convention.
    """
    if window is None:
        if half_width is None:
            raise ValueError("pass either half_width or window")
        window = (-float(half_width), float(half_width))
    x_lo, x_hi = float(window[0]), float(window[1])
    if not x_hi > x_lo:
        raise ValueError("window must satisfy x_hi > x_lo, got %r" % (window,))
    if N < 16:
        raise ValueError("N must be at least 16, got %d" % N)
    if refine < 8:
        raise ValueError("refine must be at least 8, got %d" % refine)

    m = refine * (N - 1) + 1
    segs = _fine_map(datum, x_lo, x_hi, m)

    u_edge = np.abs(datum.u0(np.array([x_lo, x_hi])))
    umax = max(float(np.max(np.abs(datum.u0(s[0])))) for s in segs)
    edge = float(np.max(u_edge)) / umax if umax > 0.0 else 0.0
    if edge > edge_tol:
        raise ValueError(
            "datum does not decay at the window edges: relative edge value "
            "%.3g exceeds edge_tol %.3g; widen the window" % (edge, edge_tol))

    if x_lo < 0.0 < x_hi:
        # anchor Y(0) = 0 so labels are window-independent for interior data
        for xs, dn, ys in segs:
            if xs[0] <= 0.0 <= xs[-1]:
                shift = float(np.interp(0.0, xs, ys))
                break
        segs = [(xs, dn, ys - shift) for xs, dn, ys in segs]

    kx = [float(s[0][-1]) for s in segs[:-1]]
    ky = [float(s[2][-1]) for s in segs[:-1]]
    y_grid, k_idx = _snapped_grid(kx, ky, float(segs[0][2][0]),
                                  float(segs[-1][2][-1]), N)
    x_grid = _invert_label_map(y_grid, segs)
    x_grid[k_idx] = kx[:2]  # kink nodes sit exactly on the crests

    state = LagrangianState(
        T=0.0,
        Y=y_grid,
        u=datum.u0(x_grid),
        v=2.0 * np.arctan(datum.du0(x_grid)),
        xi=np.ones(N),
        x=x_grid,
    )
    validate_state(state)
    return state


def _fine_map(datum, x_lo, x_hi, m):
    """Fine sampling of the label map Y(x), split at the datum's kinks.

    Returns a list of smooth segments (x, dens, y): uniform x nodes with
    the kink points as exact segment boundaries, the density
    dens = (1 + u0'^2)^2 with one-sided slope limits at kink boundaries
    (dens itself can jump there when the two one-sided slopes differ in
    magnitude), and the cumulative map y = integral of dens with per-cell
    Euler-Maclaurin correction, continuous across segments.  Splitting
    keeps every segment smooth, so the map carries O(h^4) error instead of
    the O(h^2) a kink inside a trapezoid cell would cost.
    """
    pts = [x_lo] + sorted(k for k in datum.kink_points
                          if x_lo < k < x_hi) + [x_hi]
    total = x_hi - x_lo
    segs = []
    y0 = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        cnt = max(8, int(round((m - 1) * (b - a) / total)))
        xs = np.linspace(a, b, cnt + 1)
        du = datum.du0(xs)
        if b in datum.kink_points:
            du[-1] = float(datum.du0(np.array([b]), side=-1)[0])
        dn = (1.0 + du * du) ** 2
        hx = (b - a) / cnt
        sl = np.gradient(dn, hx, edge_order=2)
        inc = 0.5 * hx * (dn[:-1] + dn[1:]) \
            - (hx * hx / 12.0) * (sl[1:] - sl[:-1])
        ys = np.empty(cnt + 1)
        ys[0] = y0
        np.cumsum(inc, out=ys[1:])
        ys[1:] += y0
        segs.append((xs, dn, ys))
        y0 = float(ys[-1])
    return segs


def _snapped_grid(kx, ky, y_lo, y_hi, N):
    """Uniform N-point label grid with the datum's kinks on nodes.

    A slope kink rides its own characteristic, i.e. a fixed label, forever;
    aligning it with a grid node at build time keeps the jump on a cell
    boundary so every kink cell stays one-sided for the whole run.  Up to
    two kink points (labels ``ky``) are aligned exactly (two determine the
    spacing).  The grid keeps exactly N nodes starting at or below y_lo;
    alignment can leave up to ~2 cells of the far end to the vacuum
    extension, where the datum is below edge_tol by the window contract.
    Returns (grid, kink node indices).
    """
    h = (y_hi - y_lo) / (N - 1)
    if not kx:
        return np.linspace(y_lo, y_hi, N), []
    if len(ky) == 1:
        hs = h
    else:
        n12 = max(1, int(round((ky[1] - ky[0]) / h)))
        hs = (ky[1] - ky[0]) / n12
    k0 = int(np.ceil((ky[0] - y_lo) / hs - 1e-12))
    grid = (ky[0] - k0 * hs) + hs * np.arange(N)
    idx = [k0]
    if len(ky) > 1:
        if k0 + n12 >= N:
            raise ValueError("kinks at %r do not fit an N=%d grid; widen "
                             "the window or raise N" % (kx, N))
        idx.append(k0 + n12)
    grid[idx[0]] = ky[0]  # exact, no fp drizzle
    if len(idx) > 1:
        grid[idx[1]] = ky[1]
    return grid, idx


def _hermite_eval(t, i, h, vl, vr, dl, dr):
    """Cubic Hermite values at local parameter t (in [0, 1]) of cells i.

    vl, vr, dl, dr are per-cell endpoint values and derivatives (with
    respect to the cell coordinate, so derivatives scale by the cell
    width h inside).
    """
    y0 = vl[i]
    y1 = vr[i]
    d0 = dl[i] * h
    d1 = dr[i] * h
    t2 = t * t
    t3 = t2 * t
    return (y0 * (2.0 * t3 - 3.0 * t2 + 1.0) + d0 * (t3 - 2.0 * t2 + t)
            + y1 * (3.0 * t2 - 2.0 * t3) + d1 * (t3 - t2))


def _invert_monotone(q, h, vl, vr, dl, dr):
    """Cells i and local parameters t with Hermite(t, i) = q.

    The per-cell cubic Hermite data must describe a (continuous) strictly
    increasing map with positive endpoint derivatives; Newton from the
    linear seed then converges past rounding in three iterations.
    """
    edges = np.append(vl, vr[-1])
    i = np.clip(np.searchsorted(edges, q, side="right") - 1, 0, vl.size - 1)
    y0 = vl[i]
    y1 = vr[i]
    d0 = dl[i] * h
    d1 = dr[i] * h
    t = (q - y0) / (y1 - y0)
    for _ in range(3):
        t2 = t * t
        t3 = t2 * t
        val = (y0 * (2.0 * t3 - 3.0 * t2 + 1.0) + d0 * (t3 - 2.0 * t2 + t)
               + y1 * (3.0 * t2 - 2.0 * t3) + d1 * (t3 - t2))
        der = (y0 * (6.0 * t2 - 6.0 * t) + d0 * (3.0 * t2 - 4.0 * t + 1.0)
               + y1 * (6.0 * t - 6.0 * t2) + d1 * (3.0 * t2 - 2.0 * t))
        t = t - (val - q) / der
    return np.clip(t, 0.0, 1.0), i


def _invert_label_map(y_grid, segs):
    """x positions of label-grid nodes, linear vacuum extension outside."""
    y_lo = float(segs[0][2][0])
    y_hi = float(segs[-1][2][-1])
    x = np.empty_like(y_grid)
    below = y_grid < y_lo
    above = y_grid > y_hi
    x[below] = segs[0][0][0] + (y_grid[below] - y_lo) / float(segs[0][1][0])
    x[above] = (segs[-1][0][-1]
                + (y_grid[above] - y_hi) / float(segs[-1][1][-1]))
    inside = ~(below | above)
    q = y_grid[inside]
    xq = np.empty_like(q)
    done = np.zeros(q.shape, dtype=bool)
    for xs, dn, ys in segs:
        sel = ~done & (q <= float(ys[-1]))
        if sel.any():
            hx = (xs[-1] - xs[0]) / (xs.size - 1)
            t, i = _invert_monotone(q[sel], hx, ys[:-1], ys[1:],
                                    dn[:-1], dn[1:])
            xq[sel] = xs[i] + t * hx
            done |= sel
    x[inside] = xq
    return x


def _cell_endpoint_data(f, df, kinks):
    """Per-cell Hermite endpoint data (vl, vr, dl, dr), one-sided at kinks.

    f and df are nodal values and nodal derivatives.  The right node of a
    kink cell carries the state of the other side of the jump, so both its
    value and derivative are replaced by quadratic extrapolation from the
    cell's own side, mirroring :func:`right_face_values`.
    """
    vl = f[:-1]
    vr = f[1:].copy()
    dl = df[:-1]
    dr = df[1:].copy()
    for j in np.nonzero(kinks)[0]:
        vr[j] = _one_sided_extrap(f, j)
        dr[j] = _one_sided_extrap(df, j)
    return vl, vr, dl, dr


def _floor_density(xi, delta=0.1):
    """Relabeling measure rho(xi): max(xi, 1) with a C^2 collar.

    Exactly 1 for xi <= 1 (focused and quiet labels keep their spacing),
    exactly xi for xi >= 1 + 2 delta (starved labels are reset to unit
    density), blended by a quintic smoothstep on [1, 1 + 2 delta] so the
    rebuilt density has no slope jumps at the crossings.  rho is monotone
    nondecreasing with rho >= 1 everywhere, so a refresh never densifies
    or inflates undisturbed regions and the label map stays strictly
    increasing.
    """
    rho = np.where(xi >= 1.0 + 2.0 * delta, xi, 1.0)
    collar = (xi > 1.0) & (xi < 1.0 + 2.0 * delta)
    tau = (xi[collar] - 1.0) / (2.0 * delta)
    s = tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
    rho[collar] = 1.0 + s * (xi[collar] - 1.0)
    return rho


def resample_state(state, N=None):
    """Rebuild the state on fresh labels, undoing starvation but not focus.

    The new label measure is d(new) = rho(xi) d(old) with the smoothed
    floor rho of :func:`_floor_density`.  Labels dilute exponentially on
    the trailing face of a transported crest (xi grows there like e^{2T}),
    so long runs starve of resolution behind crests unless the map is
    refreshed periodically; this is that refresh, and where xi > 1 it
    restores the build-time equidistribution d(label) = (1 + u_x^2)^2 dx
    (there x_Y / (new label)_Y = cos^4(v/2)).

    Where xi < 1, however, the flow has *focused* labels — characteristics
    crowd into steepening fronts — and that surplus resolution is exactly
    what the subsequent dynamics need.  Resampling those regions back to
    density 1 discards it and measurably bleeds the invariants, so the
    measure floors at the old spacing instead: xi <= 1 - delta cells keep
    their labels verbatim (rebuilt density = xi), starved cells are
    refreshed to density 1, with a smooth collar between.

    Crest kinks (cells with |dv| > 1) survive exactly: the new grid snaps
    a node onto each old kink label and copies that node's state verbatim,
    and interpolation inside a kink cell uses one-sided endpoint data, so
    the jump never smears.  At most two kinks are supported; more flagged
    cells (an active breaking front) raise ValueError — skip the refresh
    until the front has passed.

    Interpolation is per-cell cubic Hermite with the state's own exact
    nodal derivatives (u_Y = xi sin(v/2) cos^3(v/2), x_Y = xi cos^4(v/2);
    v, xi and the label map use guarded finite-difference slopes), so a
    refresh perturbs the represented solution at O(h^3).

    De-starving adds label mass, so the label domain grows a little at
    every refresh.  With N = None the node count grows along with it to
    keep the spacing h fixed (never below the current N); pass an explicit
    N to override.
    """
    h = state.h
    v = state.v
    xi = state.xi
    kinks = kink_cells(v)
    kn = np.nonzero(kinks)[0] + 1
    if kn.size > 2:
        raise ValueError(
            "%d cells sit at a slope jump; relabeling supports at most 2 "
            "(an active breaking front should pass first)" % kn.size)
    rho = _floor_density(xi)
    yhat = cumtrapz_kinked(rho, h, kinks, _guarded_slope(rho, v, h))
    if np.any(np.diff(yhat) <= 0.0):
        raise ValueError("xi is too rough to invert the refreshed label map")
    if N is None:
        N = max(state.N,
                int(np.ceil((yhat[-1] - yhat[0]) / h)) + 1)

    grid, kidx = _snapped_grid([float(state.x[j]) for j in kn],
                               [float(yhat[j]) for j in kn],
                               float(yhat[0]), float(yhat[-1]), N)

    s = np.sin(0.5 * v)
    c = np.cos(0.5 * v)
    c2 = c * c
    uY = xi * s * c * c2
    xY = xi * c2 * c2
    vY = _guarded_slope4(v, v, h)
    xiY = _guarded_slope4(xi, v, h)

    below = grid < yhat[0]
    above = grid > yhat[-1]
    inside = ~(below | above)
    dl = rho[:-1]
    dr = rho[1:].copy()
    for j in np.nonzero(kinks)[0]:
        # keep the cell model monotone even if the extrapolation dips
        dr[j] = max(_one_sided_extrap(rho, j), 1e-3 * dl[j])
    t, i = _invert_monotone(grid[inside], h, yhat[:-1], yhat[1:], dl, dr)

    u_n = np.empty(N)
    v_n = np.empty(N)
    x_n = np.empty(N)
    xi_n = np.empty(N)
    for out, f, df in ((u_n, state.u, uY), (v_n, v, vY), (x_n, state.x, xY),
                       (xi_n, xi, xiY)):
        out[inside] = _hermite_eval(t, i, h, *_cell_endpoint_data(f, df,
                                                                  kinks))
    # density transforms as xi / rho(xi), applied to the sampled xi so the
    # new density is a pointwise function of the old one
    xi_n[inside] = xi_n[inside] / _floor_density(xi_n[inside])
    u_n[below] = state.u[0]
    v_n[below] = v[0]
    xi_n[below] = float(xi[0] / rho[0])
    x_n[below] = state.x[0] + (grid[below] - yhat[0]) * xi_n[0] * c2[0] ** 2
    u_n[above] = state.u[-1]
    v_n[above] = v[-1]
    xi_n[above] = float(xi[-1] / rho[-1])
    x_n[above] = (state.x[-1]
                  + (grid[above] - yhat[-1]) * xi_n[-1] * c2[-1] ** 2)
    for knew, jold in zip(kidx, kn):
        u_n[knew] = state.u[jold]
        v_n[knew] = v[jold]
        x_n[knew] = state.x[jold]
        xi_n[knew] = float(xi[jold] / rho[jold])

    new = LagrangianState(T=state.T, Y=grid, u=u_n, v=v_n,
                          xi=xi_n, x=x_n)
    validate_state(new)
    return new


# ---------------------------------------------------------------------------
# kernel coordinate and nonlocal fields
# ---------------------------------------------------------------------------

def kernel_distance(state):
    """Cumulative kernel coordinate A(Y) = integral of xi cos^4(v/2).

    A is the image of the physical coordinate under the label map, so the
    convolution kernel (1/2) e^{-|x - x'|} becomes e^{-|A - A'|} (up to the
    integrand factors folded into :func:`nonlocal_fields`).  Nondecreasing;
    flat exactly on breaking sets.

    Computed by cumulative trapezoid with the per-cell Euler–Maclaurin
    correction and one-sided kink cells (:func:`cumtrapz_kinked`): the
    O(h^2) bias of the plain cumulative sum would otherwise feed the
    convolution kernel and dominate the energy drift of long runs, and a
    straddled crest kink would cost O(h) on its cell.
    """
    c2 = np.cos(0.5 * state.v) ** 2
    w = state.xi * c2 * c2
    h = state.h
    kinks = kink_cells(state.v)
    a = cumtrapz_kinked(w, h, kinks, _guarded_slope(w, state.v, h))
    # the correction is O(h^2) below the cell increments except where w ~ 0,
    # where roundoff could leave a fleck of negative increment
    return np.maximum.accumulate(a)


def _trig(v):
    s = np.sin(0.5 * v)
    c = np.cos(0.5 * v)
    s2 = s * s
    c2 = c * c
    return s, c, s2, c2


def kink_cells(v):
    """Boolean mask over cells whose v increment exceeds 1 radian.

    Such a cell straddles a slope discontinuity of u (a peaked crest or a
    breaking front); the integrands of every quadrature in this module jump
    inside it, so those cells get one-sided treatment throughout.  The same
    rule gates the consistency monitor.
    """
    return np.abs(np.diff(v)) > 1.0


def _one_sided_extrap(g, j):
    """Extrapolate nodal data g to node j+1 from the left (nodes <= j).

    Cubic through g[j-3..j] when available, degrading gracefully toward
    the array edge.  This is the one evaluation rule for "the state's own
    side" at the right face of a kink cell [j, j+1].
    """
    if j >= 3:
        return 4.0 * g[j] - 6.0 * g[j - 1] + 4.0 * g[j - 2] - g[j - 3]
    if j == 2:
        return 3.0 * (g[j] - g[j - 1]) + g[j - 2]
    if j == 1:
        return 2.0 * g[j] - g[j - 1]
    return g[j]


def right_face_values(g, kinks):
    """Per-cell right-endpoint samples of g, one-sided at kink cells.

    Cell j normally ends with the node sample g[j+1].  At a kink cell the
    right node sits on the far side of the jump, so the cell's own side is
    extended instead by one-sided extrapolation (:func:`_one_sided_extrap`).
    Returns an array of length N-1.
    """
    gr = g[1:].copy()
    for j in np.nonzero(kinks)[0]:
        gr[j] = _one_sided_extrap(g, j)
    return gr


def cumtrapz_kinked(g, h, kinks, slope):
    """Cumulative integral of node samples, one-sided across kink cells.

    Per cell: (h/2)(g_l + g_r) - (h^2/12)(g'_r - g'_l), composite trapezoid
    with the Euler-Maclaurin correction, except at kink cells where the
    right endpoint value comes from :func:`right_face_values` and the
    correction term is dropped (it requires C^2 across the cell; omitting
    it costs O(h^3) on that one cell instead of the O(h) a straddled jump
    would cost).  ``slope`` is the per-node derivative estimate, normally
    from :func:`_guarded_slope`.
    """
    gr = right_face_values(g, kinks)
    sl = slope[:-1]
    sr = slope[1:].copy()
    idx = np.nonzero(kinks)[0]
    if idx.size:
        sr[idx] = sl[idx]
    inc = 0.5 * h * (g[:-1] + gr) - (h * h / 12.0) * (sr - sl)
    out = np.empty(g.shape[0])
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def _guarded_slope(g, v, h):
    """d g / dY, centered except across v-jump cells.

    A kink cell (see :func:`kink_cells`) is where g legitimately jumps; a
    node adjacent to such a cell takes its slope from the smooth side only,
    and a node wedged between two jump cells gets slope 0.  Array ends use
    second-order one-sided differences.
    """
    n = g.shape[0]
    sl = np.empty(n)
    sr = np.empty(n)
    sl[1:] = (g[1:] - g[:-1]) / h
    sr[:-1] = sl[1:]
    sl[0] = sl[1]
    sr[-1] = sr[-2]
    kink = kink_cells(v)
    badl = np.zeros(n, dtype=bool)
    badr = np.zeros(n, dtype=bool)
    badl[1:] = kink
    badr[:-1] = kink
    out = 0.5 * (sl + sr)
    out[badl] = sr[badl]
    out[badr] = sl[badr]
    out[badl & badr] = 0.0
    if n >= 3:
        if not (badl[0] or badr[0]):
            out[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h)
        if not (badl[-1] or badr[-1]):
            out[-1] = (3.0 * g[-1] - 4.0 * g[-2] + g[-3]) / (2.0 * h)
    return out


def _guarded_slope4(g, v, h):
    """Like :func:`_guarded_slope` but fourth order away from kinks.

    Nodes whose five-point stencil stays clear of kink cells get the
    fourth-order centered difference; the rest keep the guarded
    second-order estimate.  Worth the extra stencil in reconstruction
    paths (:func:`resample_state`), where a second-order slope bias
    compounds into a systematic profile drift over repeated refreshes.
    """
    out = _guarded_slope(g, v, h)
    n = g.shape[0]
    if n >= 5:
        k = kink_cells(v)
        crossed = k[:-3] | k[1:-2] | k[2:-1] | k[3:]
        hi = (-g[4:] + 8.0 * g[3:-1] - 8.0 * g[1:-3] + g[:-4]) / (12.0 * h)
        mid = out[2:-2]
        out[2:-2] = np.where(crossed, mid, hi)
    return out


def nonlocal_fields(state):
    """Evaluate the four nonlocal terms P1, dxP1, P2, dxP2 on the grid.

    In label space the two convolutions become

        P1[i]  = sum-over-grid of e^{-|A_i - A|} (3/4 u sin^2 cos^2
                                                  + 1/2 u^3 cos^4) xi
        P2[i]  = sum-over-grid of e^{-|A_i - A|} (1/4 sin^3 cos) xi

    (all half-angle sin/cos of v), by composite trapezoid on the uniform Y
    grid, evaluated in O(N) with the forward/backward sweeps.  The
    x-derivative variants carry sign(Y' - Y) inside the integral, i.e.
    I_minus - I_plus.

    The kernel has a derivative jump at the diagonal, so plain trapezoid
    carries an O(h^2) defect there; Euler-Maclaurin on the two one-sided
    integrals gives the exact leading term, which is removed pointwise:

        P    -> P    - h^2/6 w g      dxP  -> dxP  + h^2/6 g'

    (w = xi cos^4, g the integrand factor).  g' uses centered differences
    where v is smooth and falls back to the smaller one-sided slope across
    kink cells (|dv| > 1, a transported crest kink): the integrand
    genuinely jumps there, a centered difference across it would inject an
    O(h) spurious term, and the Euler-Maclaurin form does not apply to a
    jump anyway.  For the same reason a kink cell's contribution to the
    sweeps replaces its right-endpoint sample by the cell's own side
    extended (:func:`right_face_values`); the node on the far side of the
    jump still starts the next cell.  Both corrections are bounded through
    wave breaking; without them the kink-cell and diagonal defects dominate
    the energy drift of long runs.
    """
    s, c, s2, c2 = _trig(state.v)
    xi = state.xi
    u = state.u
    w = xi * c2 * c2
    h = state.h
    dA = np.diff(kernel_distance(state))
    dY = np.full(state.N - 1, h)
    g1 = xi * (0.75 * u * s2 * c2 + 0.5 * u ** 3 * c2 * c2)
    g2 = 0.25 * xi * s2 * s * c
    kinks = kink_cells(state.v)
    rights = None
    if kinks.any():
        rights = (right_face_values(g1, kinks), right_face_values(g2, kinks))
    (ip1, im1), (ip2, im2) = exp_sweeps(dA, dY, (g1, g2), rights=rights)
    corr = h * h / 6.0
    dg1 = _guarded_slope(g1, state.v, h)
    dg2 = _guarded_slope(g2, state.v, h)
    return NonlocalFields(P1=ip1 + im1 - corr * w * g1,
                          dxP1=im1 - ip1 + corr * dg1,
                          P2=ip2 + im2 - corr * w * g2,
                          dxP2=im2 - ip2 + corr * dg2)


def rhs(state, fields):
    """Time derivatives (u_T, v_T, xi_T, x_T) of the semi-linear system.

    All four right-hand sides are bounded functions of bounded quantities:
    nothing blows up at breaking (cos(v/2) = 0), which is the point of the
    coordinate change.  The system is 2 pi shift-invariant in v.
    """
    s, c, s2, c2 = _trig(state.v)
    u = state.u
    sv = 2.0 * s * c
    pp = fields.P1 + fields.dxP2
    u_t = -fields.dxP1 - fields.P2
    v_t = -u * s2 + 2.0 * u ** 3 * c2 - 2.0 * c2 * pp
    xi_t = state.xi * (2.0 * u ** 3 + u - 2.0 * pp) * sv
    x_t = u * u
    return u_t, v_t, xi_t, x_t
