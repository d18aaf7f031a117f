"""Global conservative solutions of a cubic peakon equation.

The package simulates u_t + u^2 u_x + nonlocal terms = 0 (the integrable
cubic-nonlinearity cousin of the classical peakon equation) through wave
breaking, by rewriting it as a semi-linear system in characteristic
coordinates where blow-up of u_x becomes a regular crossing.  See README.md
for the model, the coordinates, and the command-line interface.
"""

from .lagrangian import (InitialDatum, LagrangianState, NonlocalFields,
                         build_initial_state, consistency_residual,
                         consistency_scale, kernel_distance, nonlocal_fields,
                         resample_state, rhs, validate_state)
from .integrator import (AprioriBounds, MonitorError, StepperConfig,
                         TrajectoryLog, apriori_bounds, energy_E, energy_F,
                         integrate, rk4_step)
from .eulerian import (BreakingInterval, BumpTestFunction, EulerianSnapshot,
                       MeasureReport, detect_breaking, eulerian_energy,
                       holder_quotient, measure_balance_residual, measure_mu,
                       project, weak_form_residual)
from .characteristics import (BetaCoordinate, BetaFrameRun,
                              CharacteristicPath, G_eval, beta_of_x,
                              evolve_beta_frame, trace, trace_many)
from .oracle import (PeakonSpec, direct_convolution_fields, peakon_value,
                     quadrature_energies, reference_solve)
from ._sweeps import HAS_NUMBA, get_backend, set_backend

__version__ = "0.1.0"

__all__ = [
    "InitialDatum", "LagrangianState", "NonlocalFields",
    "build_initial_state", "consistency_residual", "consistency_scale",
    "kernel_distance", "nonlocal_fields", "resample_state", "rhs",
    "validate_state",
    "AprioriBounds", "MonitorError", "StepperConfig", "TrajectoryLog",
    "apriori_bounds", "energy_E", "energy_F", "integrate", "rk4_step",
    "BreakingInterval", "BumpTestFunction", "EulerianSnapshot",
    "MeasureReport", "detect_breaking", "eulerian_energy", "holder_quotient",
    "measure_balance_residual", "measure_mu", "project",
    "weak_form_residual",
    "BetaCoordinate", "BetaFrameRun", "CharacteristicPath", "G_eval",
    "beta_of_x", "evolve_beta_frame", "trace", "trace_many",
    "PeakonSpec", "direct_convolution_fields", "peakon_value",
    "quadrature_energies", "reference_solve",
    "HAS_NUMBA", "get_backend", "set_backend",
]
