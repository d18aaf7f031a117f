"""Shared fixtures: the handful of expensive end-to-end runs reused across
test modules.  Each fixture returns a dict with the trajectory log and the
wall-clock seconds the integration took, so tests can check runtime budgets
without re-running anything.
"""

import os
import time

import numpy as np
import pytest

from novikov import InitialDatum, StepperConfig, build_initial_state, integrate


def timed_run(datum, N, window, dt, T_end, **cfg):
    """Build and integrate, returning {'log': ..., 'wall': seconds}."""
    state = build_initial_state(datum, N, window=window)
    config = StepperConfig(dt=dt, T_end=T_end, **cfg)
    t0 = time.monotonic()
    log = integrate(state, config)
    wall = time.monotonic() - t0
    return {"log": log, "wall": wall, "state0": state}


@pytest.fixture(scope="session")
def gaussian_run():
    """Gaussian hump, N = 4096, dt = 1e-3 to T = 2, monitors on.

    This is the energy-conservation workhorse; the characteristic traces
    and the a-priori envelope checks reuse it.
    """
    return timed_run(InitialDatum.gaussian(), 4096, (-16.0, 16.0),
                     1e-3, 2.0, snapshot_stride=10)


@pytest.fixture(scope="session")
def peakon_run():
    """Unit peakon, N = 8192 on [-20, 25] to T = 1, monitors on."""
    return timed_run(InitialDatum.peakon(1.0), 8192, (-20.0, 25.0),
                     1e-3, 1.0, snapshot_stride=25)


@pytest.fixture(scope="session")
def peakon_run_half(peakon_run):
    """Same peakon run at half resolution (N = 4096), for ratio checks."""
    return timed_run(InitialDatum.peakon(1.0), 4096, (-20.0, 25.0),
                     1e-3, 1.0, snapshot_stride=25)


@pytest.fixture(scope="session")
def pair_run():
    """Antisymmetric peakon-antipeakon pair driven through its collision.

    The long run of the suite (tens of minutes at the default N).  Node
    count can be overridden through NOVIKOV_TEST_PAIR_N for smoke runs;
    the acceptance thresholds are calibrated at the default.
    """
    N = int(os.environ.get("NOVIKOV_TEST_PAIR_N", "65536"))
    return timed_run(
        InitialDatum.antipeakon_pair(1.0, 6.0), N, (-22.0, 48.0),
        1e-3, 24.0,
        snapshot_stride=100,
        relabel_xi=1.25,
        relabel_guard=0.3,
        breaking_tol=5e-3,
        tol_E=np.inf, tol_F=np.inf, tol_bound=np.inf,
        check_consistency=False,
    )
