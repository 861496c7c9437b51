"""Mean-field SDE model specifications and well-posedness validation.

A model couples a drift b(x, mu), a diffusion coefficient, an initial
condition, and the declared Lipschitz constant used by the diagnostic
probe.  Coefficients are vectorized over particles: the drift receives an
(m, d) block of states plus the frozen empirical measure and returns an
(m, d) block.  Diffusions come in three kinds:

* ``ConstantDiffusion`` -- fixed (d, d) matrix (required when H < 1/2);
* ``MeasureDiffusion``  -- sigma(mu) -> (d, d), the baseline form;
* ``StateMeasureDiffusion`` -- sigma(states, mu) -> (m, d, d) extension for
  coefficients that read the particle's own state; models using it sit
  outside the strict well-posedness hypotheses but are runnable.

Coefficient callables must be pure and reentrant: the simulator evaluates
them concurrently and relies on them for bitwise reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Union

import numpy as np

from .fbm import HurstParameter, Regime
from .measure import EmpiricalMeasure, WassersteinOrder, coupled_upper_bound, moment_distance_to_dirac0
from .streams import StreamKey

__all__ = [
    "ConstantDiffusion",
    "MeasureDiffusion",
    "StateMeasureDiffusion",
    "Diffusion",
    "ModelSpec",
    "RegimeTag",
    "RegimeViolation",
    "validate",
    "LipschitzProbeReport",
    "lipschitz_probe",
    "preset_mean_deviation",
    "preset_mean_reverting",
    "preset_unstable_cubic",
    "preset_by_name",
    "PRESET_NAMES",
]


@dataclass(frozen=True)
class ConstantDiffusion:
    """sigma identically equal to a constant d x d matrix."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"constant diffusion must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class MeasureDiffusion:
    """sigma(mu) -> (d, d); depends on the empirical measure only."""

    fn: Callable[[EmpiricalMeasure], np.ndarray]


@dataclass(frozen=True)
class StateMeasureDiffusion:
    """sigma(states, mu) -> (m, d, d); per-particle state dependence."""

    fn: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]


Diffusion = Union[ConstantDiffusion, MeasureDiffusion, StateMeasureDiffusion]


@dataclass(frozen=True)
class ModelSpec:
    name: str
    dimension: int
    drift: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]
    diffusion: Diffusion
    initial: "float | np.ndarray | Callable[[np.random.Generator, int], np.ndarray]"
    lipschitz_constant: float
    theta: WassersteinOrder = field(default_factory=WassersteinOrder)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.lipschitz_constant <= 0.0:
            raise ValueError(f"declared Lipschitz constant must be positive, got {self.lipschitz_constant}")

    def initial_states(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Materialize the initial ensemble as an (count, d) array."""
        if callable(self.initial):
            states = np.asarray(self.initial(rng, count), dtype=float)
            if states.shape != (count, self.dimension):
                raise ValueError(
                    f"initial sampler returned shape {states.shape}, expected {(count, self.dimension)}"
                )
            return states
        value = np.broadcast_to(np.asarray(self.initial, dtype=float), (self.dimension,))
        return np.tile(value, (count, 1))


class RegimeTag:
    """Joint (Hurst regime, diffusion kind) classification of a simulation."""

    ROUGH_CONSTANT = "rough-constant-diffusion"    # H < 1/2, constant sigma
    SMOOTH_MEASURE = "smooth-measure-diffusion"    # H > 1/2
    STANDARD_BROWNIAN = "standard-brownian"        # H = 1/2


class RegimeViolation(ValueError):
    """Model/Hurst combination outside the known well-posedness regimes."""


def validate(model: ModelSpec, hurst: "float | HurstParameter") -> str:
    """Classify (model, H) or reject it.

    Below H = 1/2 well-posedness is only available for constant diffusion;
    a measure- or state-dependent sigma there is rejected.  H = 1/2 and
    H > 1/2 accept every diffusion kind.
    """
    h = HurstParameter.coerce(hurst)
    if h.regime == Regime.ROUGH:
        if not isinstance(model.diffusion, ConstantDiffusion):
            raise RegimeViolation(
                f"H={h.value} < 1/2 requires a constant diffusion coefficient "
                f"(model {model.name!r} uses {type(model.diffusion).__name__}); "
                "below H=1/2 the solution theory only covers sigma independent of the measure"
            )
        return RegimeTag.ROUGH_CONSTANT
    if h.regime == Regime.SMOOTH:
        return RegimeTag.SMOOTH_MEASURE
    return RegimeTag.STANDARD_BROWNIAN


def _diffusion_value(model: ModelSpec, states: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    """Evaluate sigma as a flat matrix (or stacked matrices) for the probe."""
    diff = model.diffusion
    if isinstance(diff, ConstantDiffusion):
        return diff.matrix
    if isinstance(diff, MeasureDiffusion):
        return np.atleast_2d(np.asarray(diff.fn(mu), dtype=float))
    return np.asarray(diff.fn(states, mu), dtype=float)


@dataclass(frozen=True)
class LipschitzProbeReport:
    declared: float
    samples: int
    max_lipschitz_ratio: float
    max_drift_growth_ratio: float
    max_diffusion_growth_ratio: float
    flagged: bool


def lipschitz_probe(
    model: ModelSpec,
    samples: int,
    stream: StreamKey,
    sample_range: float = 10.0,
    atoms_per_measure: int = 8,
) -> LipschitzProbeReport:
    """Randomized ratio probe of the declared coefficient bounds.

    Draws state/measure pairs uniformly from [-R, R]^d and estimates

        |b(x,mu) - b(y,nu)| / (|x-y| + W_theta(mu,nu))     (index-coupling W)
        |b(x,mu)|     / (1 + |x| + W_theta(mu, delta_0))
        |sigma(mu)|_F / (1 + W_theta(mu, delta_0))

    flagging the model when any observed ratio exceeds the declared constant
    by more than 5%.  For the state-and-measure diffusion extension the
    growth denominator gains the |x| term, mirroring the drift bound.
    Diagnostic only: it can refute, never prove.
    """
    if samples < 2:
        raise ValueError(f"need at least 2 probe samples, got {samples}")
    rng = stream.generator()
    d = model.dimension
    theta = model.theta
    max_lip = 0.0
    max_growth_b = 0.0
    max_growth_sigma = 0.0
    for _ in range(samples):
        x = rng.uniform(-sample_range, sample_range, size=(1, d))
        y = rng.uniform(-sample_range, sample_range, size=(1, d))
        mu = EmpiricalMeasure(rng.uniform(-sample_range, sample_range, size=(atoms_per_measure, d)))
        nu = EmpiricalMeasure(rng.uniform(-sample_range, sample_range, size=(atoms_per_measure, d)))
        bx = np.asarray(model.drift(x, mu), dtype=float).reshape(d)
        by = np.asarray(model.drift(y, nu), dtype=float).reshape(d)
        gap = float(np.linalg.norm(x - y)) + coupled_upper_bound(mu, nu, theta)
        if gap > 0.0:
            max_lip = max(max_lip, float(np.linalg.norm(bx - by)) / gap)
        w0 = moment_distance_to_dirac0(mu, theta)
        max_growth_b = max(
            max_growth_b, float(np.linalg.norm(bx)) / (1.0 + float(np.linalg.norm(x)) + w0)
        )
        sigma = _diffusion_value(model, x, mu)
        sigma_denominator = 1.0 + w0
        if isinstance(model.diffusion, StateMeasureDiffusion):
            sigma_denominator += float(np.linalg.norm(x))
        max_growth_sigma = max(
            max_growth_sigma, float(np.linalg.norm(sigma)) / sigma_denominator
        )
    worst = max(max_lip, max_growth_b, max_growth_sigma)
    return LipschitzProbeReport(
        declared=model.lipschitz_constant,
        samples=samples,
        max_lipschitz_ratio=max_lip,
        max_drift_growth_ratio=max_growth_b,
        max_diffusion_growth_ratio=max_growth_sigma,
        flagged=worst > 1.05 * model.lipschitz_constant,
    )


# --------------------------------------------------------------------------
# Built-in presets.  Coefficients are module-level functions so ModelSpec
# values stay picklable for process-based replication fan-out.
# --------------------------------------------------------------------------


def _mean_deviation_drift(states: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    # b(x, mu) = x + (x - mean(mu)) = 2x - mean(mu)
    return 2.0 * states - mu.mean()


def _mean_deviation_sigma(states: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    # sigma(x, mu) = x - mean(mu), as a stack of 1x1 matrices
    return (states - mu.mean()).reshape(-1, 1, 1)


def _gaussian_initial(rng: np.random.Generator, count: int, mean: float, spread: float) -> np.ndarray:
    return mean + spread * rng.standard_normal((count, 1))


def preset_mean_deviation(initial: float = 1.0, initial_spread: float = 0.0) -> ModelSpec:
    """Scalar linear interaction model driven by deviation from the mean.

    Drift 2x - mean(mu); diffusion (x - mean(mu)), a state-and-measure
    coefficient, so a particle sitting at the ensemble mean does not diffuse
    at all.  Both coefficients are exactly linear with Lipschitz constant 2.

    Caution: with the default point-mass initial condition every particle
    starts at the ensemble mean, the diffusion vanishes identically, and the
    whole system collapses to one deterministic Euler recursion.  Set
    ``initial_spread`` > 0 to start from N(initial, spread^2) and get
    genuinely noise-driven dynamics.
    """
    start: "float | Callable[[np.random.Generator, int], np.ndarray]"
    if initial_spread > 0.0:
        start = partial(_gaussian_initial, mean=initial, spread=initial_spread)
    else:
        start = initial
    return ModelSpec(
        name="mean-deviation",
        dimension=1,
        drift=_mean_deviation_drift,
        diffusion=StateMeasureDiffusion(_mean_deviation_sigma),
        initial=start,
        lipschitz_constant=2.0,
    )


def _mean_reverting_drift(states: np.ndarray, mu: EmpiricalMeasure, rate: float) -> np.ndarray:
    return rate * (mu.mean() - states)


def preset_mean_reverting(xi: float = 1.0, rate: float = 1.0, initial: float = 1.0) -> ModelSpec:
    """Scalar model reverting toward the empirical mean with constant noise.

    Drift rate * (mean(mu) - x), diffusion identically xi; the constant
    diffusion makes this the workhorse for the rough regime H < 1/2.  With
    rate = 0 the scheme integrates X_0 + xi * B^H_t exactly.
    """
    lipschitz = max(abs(rate), abs(xi), 1e-9)
    return ModelSpec(
        name="mean-reverting",
        dimension=1,
        drift=partial(_mean_reverting_drift, rate=rate),
        diffusion=ConstantDiffusion(np.array([[xi]])),
        initial=initial,
        lipschitz_constant=lipschitz,
    )


def _cubic_drift(states: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    return states**3


def preset_unstable_cubic(initial: float = 1.0) -> ModelSpec:
    """Superlinear-drift fixture that blows up under explicit stepping.

    Exists to exercise the numerical-failure path; the declared constant is
    nominal and the probe flags it on any wide sampling range.
    """
    return ModelSpec(
        name="unstable-cubic",
        dimension=1,
        drift=_cubic_drift,
        diffusion=ConstantDiffusion(np.array([[0.1]])),
        initial=initial,
        lipschitz_constant=1.0,
    )


PRESET_NAMES = ("mean-deviation", "mean-reverting", "unstable-cubic")


def preset_by_name(
    name: str,
    xi: float = 1.0,
    rate: float = 1.0,
    initial: float = 1.0,
    initial_spread: float = 0.0,
) -> ModelSpec:
    """Look up a preset for the CLI; parameters apply where meaningful."""
    if name == "mean-deviation":
        return preset_mean_deviation(initial=initial, initial_spread=initial_spread)
    if name == "mean-reverting":
        return preset_mean_reverting(xi=xi, rate=rate, initial=initial)
    if name == "unstable-cubic":
        return preset_unstable_cubic(initial=initial)
    raise ValueError(f"unknown model preset {name!r}; choose from {PRESET_NAMES}")
