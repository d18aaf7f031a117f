"""Nonlocal kernel fields: sweep evaluation vs direct convolution."""

import numpy as np
import pytest

from novikov import (
    InitialDatum,
    build_initial_state,
    direct_convolution_fields,
    kernel_distance,
    nonlocal_fields,
)


def random_admissible_state(rng, N=256):
    """A smooth random state with the structural invariants of a snapshot."""
    from novikov import LagrangianState

    Y = np.linspace(-10.0, 10.0, N)
    h = Y[1] - Y[0]

    def smooth(scale):
        z = rng.standard_normal(N)
        for _ in range(4):
            z[1:-1] = 0.25 * z[:-2] + 0.5 * z[1:-1] + 0.25 * z[2:]
        env = np.exp(-((Y / 7.0) ** 8))
        return scale * z * env

    v = np.clip(smooth(1.2), -0.9 * np.pi, 0.9 * np.pi)
    xi = np.exp(smooth(0.5))
    c2 = np.cos(0.5 * v) ** 2
    dx = xi * c2 * c2
    x = np.concatenate(([0.0], np.cumsum(0.5 * (dx[1:] + dx[:-1]) * h)))
    x -= x[N // 2]
    u = smooth(0.8)
    return LagrangianState(T=0.0, Y=Y, u=u, v=v, xi=xi, x=x)


def test_sweeps_match_direct_convolution_random():
    rng = np.random.default_rng(20260816)
    for _ in range(5):
        state = random_admissible_state(rng)
        got = nonlocal_fields(state)
        want = direct_convolution_fields(state)
        for name in ("P1", "dxP1", "P2", "dxP2"):
            g = getattr(got, name)
            w = getattr(want, name)
            scale = np.max(np.abs(w)) + 1e-300
            assert np.max(np.abs(g - w)) / scale < 1e-10, name


def test_fields_vanish_for_zero_state():
    datum = InitialDatum.tabulated(np.linspace(-5, 5, 11), np.zeros(11))
    state = build_initial_state(datum, 128, window=(-5.0, 5.0))
    f = nonlocal_fields(state)
    assert np.all(f.P1 == 0.0)
    assert np.all(f.P2 == 0.0)
    assert np.all(f.dxP1 == 0.0)
    assert np.all(f.dxP2 == 0.0)


def test_field_symmetries_for_even_profile():
    # even u with u_x odd: P1 even, dxP1 odd, P2 odd, dxP2 even
    state = build_initial_state(InitialDatum.gaussian(), 1025,
                                window=(-16.0, 16.0))
    f = nonlocal_fields(state)
    np.testing.assert_allclose(f.P1, f.P1[::-1], atol=1e-12)
    np.testing.assert_allclose(f.dxP1, -f.dxP1[::-1], atol=1e-12)
    np.testing.assert_allclose(f.P2, -f.P2[::-1], atol=1e-12)
    np.testing.assert_allclose(f.dxP2, f.dxP2[::-1], atol=1e-12)


def test_peakon_fields_against_closed_form():
    # at the crest of u = e^{-|x|} the source is (5/2) e^{-3|x|}, so
    # P1(0) = int (1/2) e^{-|y|} (5/2) e^{-3|y|} dy = 5/8, while P2 and
    # dxP1 vanish there by parity
    errs = []
    for N in (4096, 8192):
        state = build_initial_state(InitialDatum.peakon(1.0), N,
                                    window=(-20.0, 25.0))
        f = nonlocal_fields(state)
        i = int(np.argmax(state.u))
        errs.append(abs(f.P1[i] - 0.625))
        assert abs(f.P2[i]) < 2e-6
        assert abs(f.dxP1[i]) < 2e-6
    assert errs[0] < 5e-6
    assert errs[0] / errs[1] > 3.5  # second-order quadrature


def test_kernel_distance_matches_map():
    # A(Y) integrates xi cos^4(v/2) = x_Y, so it reproduces x up to the
    # corrected-trapezoid quadrature error
    devs = []
    for N in (512, 1024):
        state = build_initial_state(InitialDatum.gaussian(), N,
                                    window=(-16.0, 16.0))
        d = kernel_distance(state)
        devs.append(np.max(np.abs((d - d[0]) - (state.x - state.x[0]))))
    assert devs[0] < 1e-4
    assert devs[0] / devs[1] > 8.0  # better than second order


def test_fields_decay_at_the_edges():
    state = build_initial_state(InitialDatum.peakon(1.0), 2048,
                                window=(-20.0, 25.0))
    f = nonlocal_fields(state)
    assert abs(f.P1[0]) < 1e-7
    assert abs(f.P1[-1]) < 1e-9
    assert abs(f.P2[0]) < 1e-7
    assert abs(f.P2[-1]) < 1e-9
