"""Cross-module scaling properties of the scheme.

The within-step displacement law is checked on the constant-diffusion
preset, where the driver term is the dominant within-step motion; the
interaction preset with its default point-mass start has no noise channel
and its displacement scales at the drift order instead.
"""

import numpy as np
import pytest

from mvfbm.fbm import UniformMesh
from mvfbm.model import preset_mean_reverting
from mvfbm.simulator import SimulationConfig, run
from mvfbm.study import fit_loglog_slope


def _mean_step_displacement(hurst: float, steps: int, particles: int, seed: int) -> float:
    config = SimulationConfig(
        preset_mean_reverting(xi=1.0, rate=1.0),
        hurst,
        UniformMesh(1.0, steps),
        particles,
        seed,
    )
    record = run(config, snapshots="full")
    states = np.stack(record.snapshots)  # (steps + 1, N, 1)
    displacement = np.diff(states, axis=0)
    return float(np.sqrt(np.mean(displacement**2)))


@pytest.mark.parametrize("hurst", [0.3, 0.7])
def test_within_step_displacement_scales_like_delta_to_h(hurst):
    points = []
    for k in (5, 6, 7, 8):
        steps = 2**k
        rms = _mean_step_displacement(hurst, steps, particles=64, seed=900 + k)
        points.append((1.0 / steps, rms))
    slope, _ = fit_loglog_slope(points)
    assert hurst - 0.2 <= slope <= hurst + 0.2, f"H={hurst}: displacement slope {slope:.3f}"


def test_moment_growth_bounded_under_refinement():
    # empirical 4th moment at the terminal time varies less than 20% when the
    # mesh is refined twice over
    from mvfbm.study import moment_bound_check

    report = moment_bound_check(
        preset_mean_reverting(xi=1.0, rate=1.0),
        0.3,
        [2.0**-6, 2.0**-7, 2.0**-8],
        particles=128,
        order=4.0,
        seed=41,
    )
    for ratio in report.ratios:
        assert 0.8 <= ratio <= 1.25
