"""Particle-field solver for the 3D fully parabolic Keller-Segel system.

The organism density is carried by stochastic particles, the chemical
concentration by a truncated Fourier series updated implicitly through the
screened-Poisson Green's function; pairwise chemotactic interactions use
random batches.  Includes a radial finite-difference benchmark and the
diagnostics used to validate accuracy, convergence rates, and blow-up
detection.
"""

__version__ = "0.1.0"

from .config import (
    ConfigError,
    ModesField,
    SimulationConfig,
    TwoSpheres,
    UniformBall,
    ZeroField,
    config_from_dict,
    load_config,
    validate_config,
)
from .diagnostics import (
    ExperimentRecord,
    blowup_scan,
    coeff_l2_error,
    convergence_batch_experiment,
    convergence_dt_experiment,
    empirical_cdf,
    fit_loglog_slope,
    lipschitz_estimate,
    max_concentration,
    relative_cdf_error,
    validation_cdf_error,
)
from .model import ParticleEnsemble, sample_initial_particles
from .particles import (
    BatchDraw,
    DriftBreakdown,
    cell_shift,
    field_drift,
    first_step,
    full_pair_drift,
    pair_drift,
    sample_batch,
    step_particles,
)
from .radial_fdm import RadialGrid, fdm_cdf, solve_radial
from .rng import RngStream
from .simulation import (
    NonFiniteFieldError,
    RunState,
    SnapshotPolicy,
    resume,
    run,
    run_in_memory,
)
from .spectral import (
    GreenParams,
    SpectralField,
    field_to_grid,
    gradient_at_points,
    green_gradient,
    green_kernel,
    green_multiplier,
    init_field,
    shifted_grid_values,
    update_field,
)
