"""Exponential-kernel sweep kernels.

Everything nonlocal in this package reduces to sums of the form

    S[i] = sum_j W[j] * g[j] * exp(-|A[i] - A[j]|)

with A nondecreasing and W the composite-trapezoid weights of a (possibly
non-uniform) grid.  Because the kernel factorizes across cells,
exp(-|A_i - A_j|) = prod exp(-dA_cell), the one-sided pieces

    I+[i] = int_{-inf}^{Y_i} e^{-(A_i - A)} g dY   (trapezoid rule)
    I-[i] = int_{Y_i}^{+inf} e^{-(A - A_i)} g dY

obey first-order recursions and cost O(N) instead of O(N^2):

    I+[0] = 0
    I+[i] = (I+[i-1] + c[i-1] * gl[i-1]) * d[i-1] + c[i-1] * gr[i-1]

with c = dY/2, d = exp(-dA), and (gl, gr) the per-cell endpoint samples of
g (normally g[:-1] and g[1:]; kink cells may override the right endpoint),
plus the mirrored recursion for I-.
Summing the telescoped products reproduces the full trapezoid sum exactly in
exact arithmetic; in floating point the two routes agree to ~1e-13 relative.

Two implementations of the recursion are provided:

* a numba ``@njit`` sequential loop (the default when numba imports), and
* a pure-numpy blocked prefix-scan fallback,

selected by the ``NOVIKOV_BACKEND`` environment variable (``auto`` /
``numba`` / ``numpy``) or by :func:`set_backend`.  The numpy path rewrites
the recursion as a weighted cumulative sum inside blocks whose A-span is
capped at 200, so the rescaling exponentials never overflow; a scalar carry
links the blocks.  Both are sequential in substance, so results do not
depend on thread counts.

``NOVIKOV_THREADS``, if set, caps numba's thread pool.  The sweeps are
sequential recursions, so this affects only unrelated parallel numba code
(none in this package); it is honored for the CLI's determinism contract.
"""

import os

import numpy as np

try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via NOVIKOV_BACKEND=numpy
    HAS_NUMBA = False

if HAS_NUMBA:
    _threads = os.environ.get("NOVIKOV_THREADS")
    if _threads:
        try:
            numba.set_num_threads(max(1, int(_threads)))
        except (ValueError, RuntimeError):
            pass


_BACKEND = os.environ.get("NOVIKOV_BACKEND", "auto")
if _BACKEND not in ("auto", "numba", "numpy"):
    raise ValueError(
        "NOVIKOV_BACKEND must be 'auto', 'numba' or 'numpy', got %r" % _BACKEND
    )
if _BACKEND == "numba" and not HAS_NUMBA:
    raise ImportError("NOVIKOV_BACKEND=numba but numba is not importable")


def set_backend(name):
    """Select the sweep backend at runtime ('auto', 'numba' or 'numpy')."""
    global _BACKEND
    if name not in ("auto", "numba", "numpy"):
        raise ValueError("backend must be 'auto', 'numba' or 'numpy', got %r" % name)
    if name == "numba" and not HAS_NUMBA:
        raise ImportError("numba backend requested but numba is not importable")
    _BACKEND = name


def get_backend():
    """Name of the backend that will actually run ('numba' or 'numpy')."""
    if _BACKEND == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    return _BACKEND


# ---------------------------------------------------------------------------
# numba backend: plain sequential recursions
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _sweep_forward_nb(d, c, gl, gr, out):
        n = out.shape[0]
        out[0] = 0.0
        acc = 0.0
        for i in range(1, n):
            acc = (acc + c[i - 1] * gl[i - 1]) * d[i - 1] + c[i - 1] * gr[i - 1]
            out[i] = acc

    @njit(cache=True)
    def _sweep_backward_nb(d, c, gl, gr, out):
        n = out.shape[0]
        out[n - 1] = 0.0
        acc = 0.0
        for i in range(n - 2, -1, -1):
            acc = (acc + c[i] * gr[i]) * d[i] + c[i] * gl[i]
            out[i] = acc


# ---------------------------------------------------------------------------
# numpy backend: blocked prefix-scan form of the same recursion
# ---------------------------------------------------------------------------

_BLOCK_SPAN = 200.0  # max kernel distance rescaled inside one block


def _sweep_forward_np(dA, d, c, gl, gr, out):
    n = out.shape[0]
    out[0] = 0.0
    if n == 1:
        return
    # s[i+1] = d[i]*s[i] + b[i],  b[i] = c[i]*(gl[i]*d[i] + gr[i])
    b = c * (gl * d + gr)
    A = np.empty(n)
    A[0] = 0.0
    np.cumsum(dA, out=A[1:])
    pos = 0
    carry = 0.0
    while pos < n - 1:
        q = np.searchsorted(A, A[pos] + _BLOCK_SPAN, side="right") - 1
        q = min(max(q, pos + 1), n - 1)
        if A[q] - A[pos] > _BLOCK_SPAN:
            # single cell wider than the block cap: do it directly
            q = pos + 1
            carry = carry * d[pos] + b[pos]
            out[q] = carry
            pos = q
            continue
        arel = A[pos + 1 : q + 1] - A[pos]  # spans <= cap
        t = b[pos:q] * np.exp(arel)
        np.cumsum(t, out=t)
        seg = np.exp(-arel) * (carry + t)
        out[pos + 1 : q + 1] = seg
        carry = seg[-1]
        pos = q


def _sweep_backward_np(dA, d, c, gl, gr, out):
    # mirror: run the forward scan on reversed arrays (cell endpoints swap)
    _sweep_forward_np(dA[::-1], d[::-1], c[::-1], gr[::-1], gl[::-1],
                      out[::-1])


# ---------------------------------------------------------------------------
# public entry point
# ---------------------------------------------------------------------------

def exp_sweeps(dA, dY, g_list, rights=None):
    """One-sided exponential-kernel integrals for several integrands at once.

    Parameters
    ----------
    dA : ndarray, shape (N-1,)
        Nonnegative kernel distance across each cell (increments of the
        cumulative kernel coordinate A).
    dY : ndarray, shape (N-1,)
        Width of each grid cell (positive; non-uniform allowed).
    g_list : sequence of ndarray, shape (N,)
        Integrand samples at the nodes.
    rights : sequence of (ndarray shape (N-1,) or None), optional
        Per-cell right-endpoint values replacing ``g[1:]`` where the cell's
        integrand is one-sided (kink cells).  ``None`` entries (or omitting
        the argument) keep the plain node samples.

    Returns
    -------
    list of (I_plus, I_minus) pairs, one per integrand, where::

        I_plus[i]  = trapezoid of g * exp(-(A[i] - A)) over cells left of i
        I_minus[i] = trapezoid of g * exp(-(A - A[i])) over cells right of i

    so that ``I_plus + I_minus`` is the full kernel integral and
    ``I_minus - I_plus`` is its conjugate with the sign of (Y' - Y).
    """
    dA = np.ascontiguousarray(dA, dtype=np.float64)
    dY = np.ascontiguousarray(dY, dtype=np.float64)
    c = 0.5 * dY
    d = np.exp(-dA)
    backend = get_backend()
    out = []
    for k, g in enumerate(g_list):
        g = np.ascontiguousarray(g, dtype=np.float64)
        gl = g[:-1]
        gr = g[1:]
        if rights is not None and rights[k] is not None:
            gr = np.ascontiguousarray(rights[k], dtype=np.float64)
        ip = np.empty_like(g)
        im = np.empty_like(g)
        if backend == "numba":
            _sweep_forward_nb(d, c, gl, gr, ip)
            _sweep_backward_nb(d, c, gl, gr, im)
        else:
            _sweep_forward_np(dA, d, c, gl, gr, ip)
            _sweep_backward_np(dA, d, c, gl, gr, im)
        out.append((ip, im))
    return out
