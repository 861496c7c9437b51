"""Interacting-particle Euler simulation of mean-field SDEs driven by fBm.

Exact fractional Brownian drivers (circulant embedding or Cholesky), a
synchronous explicit Euler scheme over the particle ensemble, empirical
measure distances, and a reproducible experiment harness for strong-error,
chaos-trend, and moment studies.
"""

from .fbm import (
    CirculantEmbeddingError,
    CirculantSampler,
    CholeskySampler,
    CovarianceFactorizationError,
    FbmPath,
    HurstParameter,
    Regime,
    UniformMesh,
    fbm_covariance,
    generate_path_cholesky,
    generate_path_circulant,
    increment_covariance_matrix,
    make_sampler,
    restrict_to_coarse,
    write_path_csv,
)
from .measure import (
    EmpiricalMeasure,
    WassersteinOrder,
    coupled_upper_bound,
    moment_distance_to_dirac0,
    monotonicity_check,
    wasserstein_1d_exact,
)
from .model import (
    ConstantDiffusion,
    LipschitzProbeReport,
    MeasureDiffusion,
    ModelSpec,
    RegimeTag,
    RegimeViolation,
    StateMeasureDiffusion,
    lipschitz_probe,
    preset_by_name,
    preset_mean_deviation,
    preset_mean_reverting,
    preset_unstable_cubic,
    validate,
)
from .reports import ChaosReport, ConvergenceReport, CovarianceCheckReport, MomentReport
from .simulator import (
    NumericalBlowup,
    ParticleEnsemble,
    SimulationConfig,
    TrajectoryRecord,
    em_step,
    piecewise_constant_lookup,
    run,
    run_coupled_meshes,
    write_trajectory_csv,
)
from .streams import StreamKey
from .study import (
    chaos_study,
    covariance_check,
    fit_loglog_slope,
    moment_bound_check,
    strong_error_study,
)

__version__ = "0.1.0"
