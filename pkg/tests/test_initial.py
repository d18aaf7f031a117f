"""Initial data and state construction."""

import dataclasses

import numpy as np
import pytest

from novikov import (
    InitialDatum,
    build_initial_state,
    consistency_residual,
    consistency_scale,
    energy_E,
    energy_F,
    quadrature_energies,
    validate_state,
)
from novikov.lagrangian import kink_cells


def test_zero_datum_builds_flat_state():
    datum = InitialDatum.tabulated(np.linspace(-5, 5, 101), np.zeros(101))
    state = build_initial_state(datum, 256, window=(-5.0, 5.0))
    assert np.all(state.u == 0.0)
    assert np.all(state.v == 0.0)
    np.testing.assert_allclose(state.xi, 1.0, rtol=0, atol=1e-13)
    np.testing.assert_allclose(np.diff(state.x), state.h, rtol=1e-12)


def test_peakon_closed_form_energies():
    state = build_initial_state(InitialDatum.peakon(1.0), 8192,
                                window=(-20.0, 25.0))
    assert abs(energy_E(state) - 2.0) <= 1e-8
    assert abs(energy_F(state) - 4.0 / 3.0) <= 1e-8


def test_peakon_energies_scale_with_speed():
    # amplitude sqrt(c): E0 = 2c, F0 = (4/3) c^2
    state = build_initial_state(InitialDatum.peakon(4.0), 8192,
                                window=(-22.0, 22.0))
    assert abs(energy_E(state) - 8.0) <= 4e-8
    assert abs(energy_F(state) - 64.0 / 3.0) <= 4e-7


def test_gaussian_energies_match_quadrature():
    datum = InitialDatum.gaussian()
    state = build_initial_state(datum, 4096, window=(-16.0, 16.0))
    E0, F0 = quadrature_energies(datum, window=(-16.0, 16.0))
    # closed forms for exp(-x^2): E = sqrt(2 pi), F = (7/8) sqrt(pi)
    assert abs(E0 - np.sqrt(2.0 * np.pi)) < 1e-12
    assert abs(F0 - 0.875 * np.sqrt(np.pi)) < 1e-12
    assert abs(energy_E(state) - E0) < 1e-10 * E0
    assert abs(energy_F(state) - F0) < 1e-8 * F0


def test_build_equidistributes_energy_density():
    # label measure (1 + u_x^2)^2 dx means xi == 1 and x_Y == cos^4(v/2)
    state = build_initial_state(InitialDatum.gaussian(), 2048,
                                window=(-16.0, 16.0))
    np.testing.assert_allclose(state.xi, 1.0, rtol=0, atol=1e-12)
    # at build time the residual is pure centered-difference truncation,
    # which consistency_scale estimates; genuine inconsistency would be
    # far above it
    res = consistency_residual(state)
    assert res <= 2.0 * consistency_scale(state)


def test_peakon_crest_is_a_grid_node():
    state = build_initial_state(InitialDatum.peakon(1.0, x0=0.0), 1024,
                                window=(-20.0, 25.0))
    i = int(np.argmax(state.u))
    assert abs(state.x[i]) < 1e-12
    assert abs(state.u[i] - 1.0) < 1e-12
    # the slope flips sign across the crest and the cell is flagged
    kinks = kink_cells(state.v)
    assert kinks[i - 1] or kinks[i]


def test_antipeakon_pair_is_antisymmetric():
    state = build_initial_state(InitialDatum.antipeakon_pair(1.0, 6.0), 4096,
                                window=(-30.0, 30.0))
    # u(-x) = -u(x): compare against the reversed profile
    u_rev = np.interp(-state.x[::-1], state.x, state.u)
    np.testing.assert_allclose(state.u[::-1], -u_rev, atol=1e-10)
    assert abs(energy_E(state) - (4.0 - 4.0 * np.exp(-6.0))) < 4e-7


def test_narrow_window_is_rejected():
    with pytest.raises(ValueError):
        build_initial_state(InitialDatum.peakon(1.0), 512,
                            window=(-12.0, 14.0))


def test_validate_state_catches_broken_invariants():
    state = build_initial_state(InitialDatum.gaussian(), 256,
                                window=(-16.0, 16.0))
    validate_state(state)
    bad = dataclasses.replace(state, xi=-state.xi)
    with pytest.raises(ValueError):
        validate_state(bad)
    bad = dataclasses.replace(state, x=state.x[::-1].copy())
    with pytest.raises(ValueError):
        validate_state(bad)


def test_tabulated_round_trip():
    x = np.linspace(-16, 16, 8001)
    u = np.exp(-x * x)
    datum = InitialDatum.tabulated(x, u)
    state = build_initial_state(datum, 1024, window=(-16.0, 16.0))
    # within the table's own linear-interpolation error of the closed form
    assert np.max(np.abs(state.u - np.exp(-state.x ** 2))) < 1e-5
