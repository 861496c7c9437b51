"""Experiment harness: convergence, chaos, moment, and sampler studies.

Replications fan out over processes when ``workers > 1`` and are always
aggregated in replication order, so a report is a pure function of its
seed and parameters, independent of worker count or scheduling.

Study-level stream layout under the master key: ``child(m)`` roots
replication m of a convergence study; chaos studies use ``child(0, 0)``
for the reference ensemble, ``child(1, a, m)`` for run m at the a-th
particle count, ``child(2, a, m)`` for the matching subsample draws.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .fbm import HurstParameter, UniformMesh, increment_covariance_matrix, make_sampler
from .measure import EmpiricalMeasure, coupled_upper_bound, wasserstein_1d_exact
from .model import ModelSpec
from .reports import ChaosReport, ConvergenceReport, CovarianceCheckReport, MomentReport
from .simulator import SimulationConfig, run, run_coupled_meshes
from .streams import StreamKey

__all__ = [
    "fit_loglog_slope",
    "strong_error_study",
    "chaos_study",
    "moment_bound_check",
    "covariance_check",
    "EXACT_SCHEME_ATOL",
]

# RMS errors at or below this are treated as exact reproduction (floating
# summation order is the only difference between nested drift-free runs).
EXACT_SCHEME_ATOL = 1e-12

# Absolute floor when comparing chaos distances: differences below this are
# floating-point hash, not signal.
_TREND_ATOL = 1e-12


def fit_loglog_slope(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of log2(error) against log2(delta).

    Returns (slope, stderr); the stderr comes from the residual variance and
    is zero for an exact two-point or collinear fit.
    """
    if len(points) < 2:
        raise ValueError(f"slope fit needs at least 2 points, got {len(points)}")
    deltas = np.array([p[0] for p in points], dtype=float)
    errors = np.array([p[1] for p in points], dtype=float)
    if np.any(deltas <= 0.0) or np.any(errors <= 0.0):
        raise ValueError("slope fit requires strictly positive deltas and errors")
    x = np.log2(deltas)
    y = np.log2(errors)
    x_center = x - x.mean()
    sxx = float(x_center @ x_center)
    if sxx == 0.0:
        raise ValueError("slope fit requires at least two distinct deltas")
    slope = float(x_center @ (y - y.mean())) / sxx
    intercept = float(y.mean()) - slope * float(x.mean())
    residuals = y - (intercept + slope * x)
    dof = len(points) - 2
    stderr = math.sqrt(float(residuals @ residuals) / dof / sxx) if dof > 0 else 0.0
    return slope, stderr


def _factor_for(delta: float, reference_delta: float) -> int:
    factor = int(round(delta / reference_delta))
    if factor < 1 or not math.isclose(factor * reference_delta, delta, rel_tol=1e-12):
        raise ValueError(
            f"delta {delta} is not an integer multiple of reference delta {reference_delta}"
        )
    return factor


def _steps_for(horizon: float, delta: float) -> int:
    steps = int(round(horizon / delta))
    if steps < 1 or not math.isclose(steps * delta, horizon, rel_tol=1e-12):
        raise ValueError(f"delta {delta} does not divide the horizon {horizon}")
    return steps


def _map_in_order(task: Callable, args: Sequence, workers: int) -> list:
    if workers <= 1:
        return [task(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, args))  # input order == output order


def _convergence_replication(args) -> list[float]:
    """Sum over particles of squared terminal gaps, one entry per factor."""
    model, hurst, fine_mesh, particles, sampler, root, rep, factors = args
    config = SimulationConfig(model, hurst, fine_mesh, particles, root.child(rep), sampler)
    records = run_coupled_meshes(config, factors, snapshots="terminal")
    reference = records[1].terminal
    out = []
    for f in factors:
        gaps = np.linalg.norm(records[f].terminal - reference, axis=1)
        out.append(float(gaps @ gaps))
    return out


def strong_error_study(
    model: ModelSpec,
    hurst: "float | HurstParameter",
    particles: int,
    replications: int,
    deltas: Sequence[float],
    reference_delta: float,
    seed: int,
    horizon: float = 1.0,
    sampler: str = "circulant",
    workers: int = 1,
) -> ConvergenceReport:
    """Terminal RMS error against a shared-driver fine-mesh reference run.

    For each replication the drivers are generated once on the reference
    mesh and restricted to every coarse mesh; the RMS over particles and
    replications of |Y^(delta)_T - Y^(ref)_T| is reported per delta together
    with the fitted log-log slope.  A scheme that reproduces the reference
    exactly at every delta is flagged instead of fitted.
    """
    if replications < 2:
        raise ValueError(f"need at least 2 replications, got {replications}")
    hurst = HurstParameter.coerce(hurst)
    deltas = sorted((float(d) for d in deltas), reverse=True)
    factors = [_factor_for(d, reference_delta) for d in deltas]
    fine_mesh = UniformMesh(horizon, _steps_for(horizon, reference_delta))
    for f in factors:
        if fine_mesh.steps % f != 0:
            raise ValueError(f"factor {f} does not divide {fine_mesh.steps} reference steps")
    root = StreamKey.coerce(seed)
    started = time.perf_counter()
    tasks = [
        (model, hurst, fine_mesh, particles, sampler, root, rep, factors)
        for rep in range(replications)
    ]
    per_rep = _map_in_order(_convergence_replication, tasks, workers)
    total = particles * replications
    rms = [math.sqrt(sum(rep_sums[i] for rep_sums in per_rep) / total) for i in range(len(factors))]
    points = tuple(zip(deltas, rms))
    exact = all(e <= EXACT_SCHEME_ATOL for e in rms)
    slope = stderr = None
    if not exact:
        slope, stderr = fit_loglog_slope(points)
    return ConvergenceReport(
        model_name=model.name,
        hurst=hurst.value,
        horizon=horizon,
        particles=particles,
        replications=replications,
        reference_delta=reference_delta,
        sampler=sampler,
        seed=root.seed,
        points=points,
        slope=slope,
        slope_stderr=stderr,
        exact_scheme=exact,
        wall_time=time.perf_counter() - started,
    )


def _chaos_run(args) -> float:
    """Distance from one run's terminal law to a fresh reference subsample."""
    model, hurst, mesh, sampler, root, size_index, rep, count, reference, theta, estimator = args
    config = SimulationConfig(
        model, hurst, mesh, count, root.child(1, size_index, rep), sampler
    )
    terminal = run(config, snapshots="terminal").terminal
    pick = root.child(2, size_index, rep).generator().choice(
        reference.shape[0], size=count, replace=False
    )
    mu = EmpiricalMeasure(terminal)
    nu = EmpiricalMeasure(reference[pick])
    if estimator == "1d-exact":
        return wasserstein_1d_exact(mu, nu, theta)
    return coupled_upper_bound(mu, nu, theta)


def chaos_study(
    model: ModelSpec,
    hurst: "float | HurstParameter",
    mesh: UniformMesh,
    particle_counts: Sequence[int],
    replications: int,
    theta: float,
    seed: int,
    sampler: str = "circulant",
    estimator: str = "1d-exact",
    workers: int = 1,
) -> ChaosReport:
    """Distance of terminal empirical laws to a large-ensemble reference.

    The mean-field law is proxied by one independent run with
    4 * max(particle_counts) particles; each run at count N is compared to a
    fresh same-size subsample of the reference via the exact 1-d distance
    (or the coupling bound when requested).  The verdict is whether the mean
    distances are non-increasing within one combined standard error at each
    consecutive pair.
    """
    counts = [int(n) for n in particle_counts]
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"particle counts must be strictly increasing, got {counts}")
    if estimator not in ("1d-exact", "coupling-bound"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if estimator == "1d-exact" and model.dimension != 1:
        raise ValueError("the 1d-exact estimator requires a one-dimensional model")
    hurst = HurstParameter.coerce(hurst)
    root = StreamKey.coerce(seed)
    started = time.perf_counter()
    reference_count = 4 * max(counts)
    reference_config = SimulationConfig(
        model, hurst, mesh, reference_count, root.child(0, 0), sampler
    )
    reference = run(reference_config, snapshots="terminal").terminal
    tasks = [
        (model, hurst, mesh, sampler, root, a, rep, count, reference, theta, estimator)
        for a, count in enumerate(counts)
        for rep in range(replications)
    ]
    distances = _map_in_order(_chaos_run, tasks, workers)
    points = []
    for a, count in enumerate(counts):
        block = np.array(distances[a * replications : (a + 1) * replications])
        stderr = float(block.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
        points.append((count, float(block.mean()), stderr))
    non_increasing = all(
        nxt_mean <= mean + math.hypot(se, nxt_se) + _TREND_ATOL
        for (_, mean, se), (_, nxt_mean, nxt_se) in zip(points, points[1:])
    )
    return ChaosReport(
        model_name=model.name,
        hurst=hurst.value,
        horizon=mesh.horizon,
        steps=mesh.steps,
        replications=replications,
        theta=float(theta),
        estimator=estimator,
        reference_particles=reference_count,
        seed=root.seed,
        points=tuple(points),
        non_increasing=non_increasing,
        wall_time=time.perf_counter() - started,
    )


def moment_bound_check(
    model: ModelSpec,
    hurst: "float | HurstParameter",
    deltas: Sequence[float],
    particles: int,
    order: float,
    seed: int,
    horizon: float = 1.0,
    sampler: str = "circulant",
) -> MomentReport:
    """Empirical q-th moment stability under mesh refinement.

    Runs the whole ladder on shared drivers (one fine driver set restricted
    to each mesh), records the max-over-snapshots moment per mesh, and
    passes when each successive refinement ratio stays within [0.8, 1.25].
    """
    if order < 2.0:
        raise ValueError(f"moment order must be >= 2, got {order}")
    hurst = HurstParameter.coerce(hurst)
    ladder = sorted((float(d) for d in deltas), reverse=True)  # coarse -> fine
    fine_delta = ladder[-1]
    fine_mesh = UniformMesh(horizon, _steps_for(horizon, fine_delta))
    factors = [_factor_for(d, fine_delta) for d in ladder]
    root = StreamKey.coerce(seed)
    started = time.perf_counter()
    config = SimulationConfig(model, hurst, fine_mesh, particles, root.child(0), sampler)
    records = run_coupled_meshes(config, factors, snapshots="thin")
    points = []
    for delta, factor in zip(ladder, factors):
        record = records[factor]
        moments = [
            float(np.mean(np.linalg.norm(states, axis=1) ** order))
            for states in record.snapshots
        ]
        terminal = float(np.mean(np.linalg.norm(record.terminal, axis=1) ** order))
        points.append((delta, max(moments), terminal))
    ratios = tuple(
        points[i + 1][1] / points[i][1] for i in range(len(points) - 1)
    )
    passed = all(0.8 <= r <= 1.25 for r in ratios)
    return MomentReport(
        model_name=model.name,
        hurst=hurst.value,
        horizon=horizon,
        particles=particles,
        order=float(order),
        seed=root.seed,
        points=tuple(points),
        ratios=ratios,
        passed=passed,
        wall_time=time.perf_counter() - started,
    )


def covariance_check(
    hurst: "float | HurstParameter",
    steps: int,
    paths: int,
    seed: int,
    sampler: str = "circulant",
    horizon: float = 1.0,
) -> CovarianceCheckReport:
    """Entrywise z-scores of the sampled increment covariance, per lag.

    The standard error of each raw second-moment entry follows from the
    Gaussian product-moment identity Var(xy) = C_xx * C_yy + C_xy^2.
    """
    hurst = HurstParameter.coerce(hurst)
    mesh = UniformMesh(horizon, steps)
    root = StreamKey.coerce(seed)
    started = time.perf_counter()
    expected = increment_covariance_matrix(hurst, mesh)
    generator = make_sampler(sampler, hurst, mesh)
    streams = [root.child(p) for p in range(paths)]
    increments = generator.sample_ensemble(1, streams)[:, :, 0]
    empirical = increments.T @ increments / paths
    diag = np.diag(expected)
    stderr = np.sqrt((np.outer(diag, diag) + expected**2) / paths)
    z = np.abs(empirical - expected) / stderr
    points = []
    for lag in range(steps):
        mask = np.abs(np.subtract.outer(np.arange(steps), np.arange(steps))) == lag
        points.append(
            (
                lag,
                float(expected[0, lag]),
                float(empirical[mask].mean()),
                float(z[mask].max()),
            )
        )
    return CovarianceCheckReport(
        hurst=hurst.value,
        steps=steps,
        paths=paths,
        sampler=sampler,
        seed=root.seed,
        points=tuple(points),
        max_abs_z=float(z.max()),
        wall_time=time.perf_counter() - started,
    )
