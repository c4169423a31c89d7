"""velaid: velocity-aided attitude estimation with verification tooling.

A library for estimating rigid-body attitude and velocity from gyro,
accelerometer, magnetometer, and body-frame velocity measurements, using
nonlinear observers whose estimation errors obey autonomous dynamics.
Ships with an analytic truth/sensor simulator, an analysis layer that
checks the observers' convergence and decoupling claims mechanically, and
a CLI (``velaid run | verify | poles``).
"""

from .analysis import (
    Classification,
    EquilibriumSet,
    ErrorState,
    PoleReport,
    classify_equilibrium,
    equilibria,
    gamma_error_field,
    gamma_invariant_errors,
    invariant_errors,
    linearized_poles,
    lyapunov_obs1,
    lyapunov_obs1_boundary,
    lyapunov_obs2,
    make_error_state,
    step_error_full,
    step_error_gamma,
)
from .observers import (
    DEFAULT_GRAVITY,
    DEFAULT_M_I,
    FullObserverState,
    GainReport,
    GammaObserverState,
    MeasurementFrame,
    ObserverGains,
    innovation_obs1,
    innovation_obs2,
    reduce_to_gamma,
    step_full,
    step_gamma,
    validate_gains,
)
from .simworld import (
    InitialErrors,
    NumericalDivergence,
    SensorConfig,
    TrajectorySpec,
    TruthState,
    measure,
    run_scenario,
    truth_at,
)
from .so3 import (
    EulerAngles,
    euler_from_rotation,
    exp_rotation,
    gravity_direction,
    orthonormalize,
    project_orthogonal,
    rotation_from_euler,
    skew,
)
from .trace import TraceSet, write_traceset
from .verify import paper_gains, paper_initial_errors

__version__ = "0.1.0"
